#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cohpaint/autograd.hpp"
#include "cohpaint/rng.hpp"
#include "cohpaint/tensor.hpp"

namespace cohpaint {

// Named parameter tensors plus Adam moment state. Registration order is the
// serialisation order.
template <class T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        Tensor<T> m, v;  // Adam moments
    };

    int add(std::string name, std::vector<int> shape) {
        Entry e;
        e.name = std::move(name);
        e.value = Tensor<T>(shape);
        e.m = Tensor<T>(shape);
        e.v = Tensor<T>(std::move(shape));
        entries_.push_back(std::move(e));
        return static_cast<int>(entries_.size()) - 1;
    }

    int size() const { return static_cast<int>(entries_.size()); }
    Entry& operator[](int i) { return entries_[static_cast<std::size_t>(i)]; }
    const Entry& operator[](int i) const { return entries_[static_cast<std::size_t>(i)]; }

    long total_scalars() const {
        long n = 0;
        for (const Entry& e : entries_) n += e.value.numel();
        return n;
    }

    bool all_finite() const {
        for (const Entry& e : entries_)
            if (!e.value.all_finite()) return false;
        return true;
    }

    // He-normal init for weights (fan-in of conv filters), zeros for biases.
    // Seeding is per parameter name, so registration order does not matter.
    void init_he_normal(std::uint64_t seed) {
        for (Entry& e : entries_) {
            e.m.fill(T(0));
            e.v.fill(T(0));
            if (e.value.rank() != 4) {  // bias or scalar
                e.value.fill(T(0));
                continue;
            }
            const long fan_in =
                static_cast<long>(e.value.dim(1)) * e.value.dim(2) * e.value.dim(3);
            const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
            Rng rng(derive_seed(seed, e.name));
            for (long i = 0; i < e.value.numel(); ++i)
                e.value[i] = static_cast<T>(rng.normal() * std);
        }
    }

private:
    std::vector<Entry> entries_;
};

// Tape leaves for every entry of a store, in order.
template <class T>
std::vector<VarId> bind_params(Tape<T>& t, const ParamStore<T>& store, bool needs_grad) {
    std::vector<VarId> leaves;
    leaves.reserve(static_cast<std::size_t>(store.size()));
    for (int i = 0; i < store.size(); ++i) leaves.push_back(t.input(store[i].value, needs_grad));
    return leaves;
}

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update from the gradients accumulated on the tape.
template <class T>
void adam_step(ParamStore<T>& store, Tape<T>& t, const std::vector<VarId>& leaves,
               const AdamConfig& cfg, long step) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (int i = 0; i < store.size(); ++i) {
        if (!t.has_grad(leaves[static_cast<std::size_t>(i)])) continue;
        const Tensor<T>& g = t.grad(leaves[static_cast<std::size_t>(i)]);
        auto& e = store[i];
        for (long j = 0; j < g.numel(); ++j) {
            const double gj = g[j];
            e.m[j] = static_cast<T>(cfg.beta1 * e.m[j] + (1.0 - cfg.beta1) * gj);
            e.v[j] = static_cast<T>(cfg.beta2 * e.v[j] + (1.0 - cfg.beta2) * gj * gj);
            const double mh = e.m[j] / bc1;
            const double vh = e.v[j] / bc2;
            e.value[j] -= static_cast<T>(cfg.lr * mh / (std::sqrt(vh) + cfg.eps));
        }
    }
}

// Gated convolution: a single conv produces 2C channels, split into a
// leaky-relu feature half modulated by a sigmoid gate half.
template <class T>
VarId gated_conv(Tape<T>& t, VarId x, VarId w, VarId b, ConvSpec spec = {}) {
    VarId y = conv2d(t, x, w, b, spec);
    const int c2 = t.val(y).dim(0);
    VarId feat = leaky_relu(t, slice_c(t, y, 0, c2 / 2));
    VarId gate = sigmoid(t, slice_c(t, y, c2 / 2, c2 / 2));
    return mul(t, feat, gate);
}

} // namespace cohpaint
