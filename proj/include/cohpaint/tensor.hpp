#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cohpaint {

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 64-byte aligned storage. Keeping every buffer on the same alignment keeps
// Eigen's vectorized kernels on the same code path run to run, which makes
// results bit-reproducible.
template <class T, std::size_t Align = 64>
struct AlignedAlloc {
    using value_type = T;
    template <class U>
    struct rebind {
        using other = AlignedAlloc<U, Align>;
    };
    AlignedAlloc() = default;
    template <class U>
    AlignedAlloc(const AlignedAlloc<U, Align>&) {}
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
    }
    void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t(Align)); }
    template <class U>
    bool operator==(const AlignedAlloc<U, Align>&) const {
        return true;
    }
};

template <class T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

// Dense row-major tensor. Rank is the length of the shape vector; image
// tensors use [C,H,W], matrices [R,C], scalars [].
template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(compute_numel(shape_)), T(0));
    }
    Tensor(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(compute_numel(shape_)), fill);
    }
    Tensor(std::vector<int> shape, const std::vector<T>& data) : shape_(std::move(shape)) {
        if (static_cast<long>(data.size()) != compute_numel(shape_))
            throw shape_error("tensor data size does not match shape");
        data_.assign(data.begin(), data.end());
    }

    static Tensor scalar(T v) { return Tensor({}, std::vector<T>{v}); }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    long numel() const { return static_cast<long>(data_.size()); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

    // [C,H,W]
    T& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    const T& at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    // [R,C]
    T& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    const T& at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    T min_value() const { return *std::min_element(data_.begin(), data_.end()); }
    T max_value() const { return *std::max_element(data_.begin(), data_.end()); }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (long i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "[";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + "]";
    }

private:
    static long compute_numel(const std::vector<int>& shape) {
        long n = 1;
        for (int d : shape) {
            if (d < 0) throw shape_error("negative tensor dimension");
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    AlignedVec<T> data_;
};

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw shape_error("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (long i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

} // namespace cohpaint
