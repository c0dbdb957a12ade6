#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cohpaint/tensor.hpp"

namespace cohpaint {

struct VarId {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in topological order; backward walks
// the tape in reverse. One tape per forward pass; parameters enter as leaves.
template <class T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    VarId input(Tensor<T> value, bool needs_grad = false) {
        return push(std::move(value), needs_grad, nullptr);
    }

    VarId constant(Tensor<T> value) { return input(std::move(value), false); }

    VarId push(Tensor<T> value, bool needs_grad, std::function<void(Tape&)> back) {
        nodes_.push_back(Node{std::move(value), Tensor<T>{}, false, needs_grad, std::move(back)});
        return VarId{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor<T>& val(VarId v) const { return nodes_[v.id].val; }
    bool needs_grad(VarId v) const { return nodes_[v.id].needs_grad; }

    // Gradient buffer, zero-initialised on first touch.
    Tensor<T>& grad(VarId v) {
        Node& n = nodes_[v.id];
        if (!n.has_grad) {
            n.grad = Tensor<T>(n.val.shape());
            n.has_grad = true;
        }
        return n.grad;
    }
    bool has_grad(VarId v) const { return nodes_[v.id].has_grad; }

    // Runs backpropagation from a scalar root.
    void backward(VarId root) {
        if (val(root).numel() != 1) throw shape_error("backward: root must be a scalar");
        grad(root)[0] = T(1);
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.has_grad && n.back) n.back(*this);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        bool has_grad = false;
        bool needs_grad = false;
        std::function<void(Tape&)> back;
    };
    std::deque<Node> nodes_;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

template <class T>
bool any_needs(const Tape<T>& t, std::initializer_list<VarId> vs) {
    for (VarId v : vs)
        if (t.needs_grad(v)) return true;
    return false;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <class T>
VarId add(Tape<T>& t, VarId a, VarId b) {
    const Tensor<T>&av = t.val(a), &bv = t.val(b);
    if (!av.same_shape(bv)) throw shape_error("add: shape mismatch");
    Tensor<T> out(av.shape());
    for (long i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
    bool ng = detail::any_needs(t, {a, b});
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [a, b, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        if (tt.needs_grad(a)) {
            Tensor<T>& ga = tt.grad(a);
            for (long i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (tt.needs_grad(b)) {
            Tensor<T>& gb = tt.grad(b);
            for (long i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
    });
}

template <class T>
VarId sub(Tape<T>& t, VarId a, VarId b) {
    const Tensor<T>&av = t.val(a), &bv = t.val(b);
    if (!av.same_shape(bv)) throw shape_error("sub: shape mismatch");
    Tensor<T> out(av.shape());
    for (long i = 0; i < av.numel(); ++i) out[i] = av[i] - bv[i];
    bool ng = detail::any_needs(t, {a, b});
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [a, b, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        if (tt.needs_grad(a)) {
            Tensor<T>& ga = tt.grad(a);
            for (long i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (tt.needs_grad(b)) {
            Tensor<T>& gb = tt.grad(b);
            for (long i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

template <class T>
VarId mul(Tape<T>& t, VarId a, VarId b) {
    const Tensor<T>&av = t.val(a), &bv = t.val(b);
    if (!av.same_shape(bv)) throw shape_error("mul: shape mismatch");
    Tensor<T> out(av.shape());
    for (long i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[i];
    bool ng = detail::any_needs(t, {a, b});
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [a, b, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const Tensor<T>&av2 = tt.val(a), &bv2 = tt.val(b);
        if (tt.needs_grad(a)) {
            Tensor<T>& ga = tt.grad(a);
            for (long i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (tt.needs_grad(b)) {
            Tensor<T>& gb = tt.grad(b);
            for (long i = 0; i < g.numel(); ++i) gb[i] += g[i] * av2[i];
        }
    });
}

template <class T>
VarId mul_scalar(Tape<T>& t, VarId a, T s) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (long i = 0; i < av.numel(); ++i) out[i] = av[i] * s;
    bool ng = t.needs_grad(a);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [a, s, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Tensor<T>& ga = tt.grad(a);
        for (long i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
    });
}

template <class T>
VarId add_scalar(Tape<T>& t, VarId a, T s) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (long i = 0; i < av.numel(); ++i) out[i] = av[i] + s;
    bool ng = t.needs_grad(a);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [a, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Tensor<T>& ga = tt.grad(a);
        for (long i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

// s - x
template <class T>
VarId sub_from_scalar(Tape<T>& t, T s, VarId a) {
    const Tensor<T>& av = t.val(a);
    Tensor<T> out(av.shape());
    for (long i = 0; i < av.numel(); ++i) out[i] = s - av[i];
    bool ng = t.needs_grad(a);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [a, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Tensor<T>& ga = tt.grad(a);
        for (long i = 0; i < g.numel(); ++i) ga[i] -= g[i];
    });
}

template <class T>
VarId leaky_relu(Tape<T>& t, VarId x, T alpha = T(0.2)) {
    const Tensor<T>& xv = t.val(x);
    Tensor<T> out(xv.shape());
    for (long i = 0; i < xv.numel(); ++i) out[i] = xv[i] >= T(0) ? xv[i] : alpha * xv[i];
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, alpha, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const Tensor<T>& xv2 = tt.val(x);
        Tensor<T>& gx = tt.grad(x);
        for (long i = 0; i < g.numel(); ++i) gx[i] += g[i] * (xv2[i] >= T(0) ? T(1) : alpha);
    });
}

template <class T>
VarId sigmoid(Tape<T>& t, VarId x) {
    const Tensor<T>& xv = t.val(x);
    Tensor<T> out(xv.shape());
    for (long i = 0; i < xv.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const Tensor<T>& yv = tt.val(y);
        Tensor<T>& gx = tt.grad(x);
        for (long i = 0; i < g.numel(); ++i) gx[i] += g[i] * yv[i] * (T(1) - yv[i]);
    });
}

template <class T>
VarId tanh_act(Tape<T>& t, VarId x) {
    const Tensor<T>& xv = t.val(x);
    Tensor<T> out(xv.shape());
    for (long i = 0; i < xv.numel(); ++i) out[i] = std::tanh(xv[i]);
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const Tensor<T>& yv = tt.val(y);
        Tensor<T>& gx = tt.grad(x);
        for (long i = 0; i < g.numel(); ++i) gx[i] += g[i] * (T(1) - yv[i] * yv[i]);
    });
}

template <class T>
VarId abs_val(Tape<T>& t, VarId x) {
    const Tensor<T>& xv = t.val(x);
    Tensor<T> out(xv.shape());
    for (long i = 0; i < xv.numel(); ++i) out[i] = std::abs(xv[i]);
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const Tensor<T>& xv2 = tt.val(x);
        Tensor<T>& gx = tt.grad(x);
        for (long i = 0; i < g.numel(); ++i)
            gx[i] += g[i] * (xv2[i] > T(0) ? T(1) : (xv2[i] < T(0) ? T(-1) : T(0)));
    });
}

template <class T>
VarId log_val(Tape<T>& t, VarId x) {
    const Tensor<T>& xv = t.val(x);
    Tensor<T> out(xv.shape());
    for (long i = 0; i < xv.numel(); ++i) out[i] = std::log(xv[i]);
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const Tensor<T>& xv2 = tt.val(x);
        Tensor<T>& gx = tt.grad(x);
        for (long i = 0; i < g.numel(); ++i) gx[i] += g[i] / xv2[i];
    });
}

// Gradient passes through only strictly inside the interval.
template <class T>
VarId clamp(Tape<T>& t, VarId x, T lo, T hi) {
    const Tensor<T>& xv = t.val(x);
    Tensor<T> out(xv.shape());
    for (long i = 0; i < xv.numel(); ++i) out[i] = std::min(hi, std::max(lo, xv[i]));
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, lo, hi, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const Tensor<T>& xv2 = tt.val(x);
        Tensor<T>& gx = tt.grad(x);
        for (long i = 0; i < g.numel(); ++i)
            if (xv2[i] > lo && xv2[i] < hi) gx[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
VarId sum_all(Tape<T>& t, VarId x) {
    const Tensor<T>& xv = t.val(x);
    T acc = T(0);
    for (long i = 0; i < xv.numel(); ++i) acc += xv[i];
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(Tensor<T>::scalar(acc), ng, !ng ? std::function<void(Tape<T>&)>() : [x, y](Tape<T>& tt) {
        const T g = tt.grad(y)[0];
        Tensor<T>& gx = tt.grad(x);
        for (long i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

template <class T>
VarId mean_all(Tape<T>& t, VarId x) {
    const Tensor<T>& xv = t.val(x);
    if (xv.numel() == 0) throw shape_error("mean_all: empty tensor");
    T acc = T(0);
    for (long i = 0; i < xv.numel(); ++i) acc += xv[i];
    const T inv = T(1) / static_cast<T>(xv.numel());
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(Tensor<T>::scalar(acc * inv), ng, !ng ? std::function<void(Tape<T>&)>() : [x, inv, y](Tape<T>& tt) {
        const T g = tt.grad(y)[0] * inv;
        Tensor<T>& gx = tt.grad(x);
        for (long i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

// ---------------------------------------------------------------------------
// Shape ops ([C,H,W] tensors)

template <class T>
VarId concat_c(Tape<T>& t, VarId a, VarId b) {
    const Tensor<T>&av = t.val(a), &bv = t.val(b);
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
        throw shape_error("concat_c: incompatible shapes");
    const int ca = av.dim(0), cb = bv.dim(0), h = av.dim(1), w = av.dim(2);
    Tensor<T> out({ca + cb, h, w});
    std::copy(av.data(), av.data() + av.numel(), out.data());
    std::copy(bv.data(), bv.data() + bv.numel(), out.data() + av.numel());
    bool ng = detail::any_needs(t, {a, b});
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [a, b, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const long na = tt.val(a).numel();
        if (tt.needs_grad(a)) {
            Tensor<T>& ga = tt.grad(a);
            for (long i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (tt.needs_grad(b)) {
            Tensor<T>& gb = tt.grad(b);
            for (long i = 0; i < gb.numel(); ++i) gb[i] += g[na + i];
        }
    });
}

template <class T>
VarId slice_c(Tape<T>& t, VarId x, int c0, int len) {
    const Tensor<T>& xv = t.val(x);
    if (xv.rank() != 3 || c0 < 0 || c0 + len > xv.dim(0)) throw shape_error("slice_c: bad range");
    const int h = xv.dim(1), w = xv.dim(2);
    const long plane = static_cast<long>(h) * w;
    Tensor<T> out({len, h, w});
    std::copy(xv.data() + c0 * plane, xv.data() + (c0 + len) * plane, out.data());
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, c0, plane, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Tensor<T>& gx = tt.grad(x);
        for (long i = 0; i < g.numel(); ++i) gx[c0 * plane + i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM). Odd kernels, symmetric zero padding
// pad = dilation*(k-1)/2, so stride 1 preserves size and stride 2 halves
// even sizes.

struct ConvSpec {
    int stride = 1;
    int dilation = 1;
};

namespace detail {

struct ConvDims {
    int cin, h, w, cout, kh, kw, pad_h, pad_w, oh, ow;
    long k_sz, n_sz;
};

template <class T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& s) {
    if (x.rank() != 3 || w.rank() != 4) throw shape_error("conv2d: x must be [C,H,W], w [O,I,Kh,Kw]");
    ConvDims d;
    d.cin = x.dim(0); d.h = x.dim(1); d.w = x.dim(2);
    d.cout = w.dim(0); d.kh = w.dim(2); d.kw = w.dim(3);
    if (w.dim(1) != d.cin) throw shape_error("conv2d: channel mismatch");
    if (d.kh % 2 == 0 || d.kw % 2 == 0) throw shape_error("conv2d: even kernel");
    d.pad_h = s.dilation * (d.kh - 1) / 2;
    d.pad_w = s.dilation * (d.kw - 1) / 2;
    d.oh = (d.h + 2 * d.pad_h - s.dilation * (d.kh - 1) - 1) / s.stride + 1;
    d.ow = (d.w + 2 * d.pad_w - s.dilation * (d.kw - 1) - 1) / s.stride + 1;
    d.k_sz = static_cast<long>(d.cin) * d.kh * d.kw;
    d.n_sz = static_cast<long>(d.oh) * d.ow;
    return d;
}

// colT is (N, K) column-major: element (n, k) at n + k*N. Row k = (c,ky,kx).
template <class T>
void im2col_t(const Tensor<T>& x, const ConvDims& d, const ConvSpec& s, T* colT) {
    const long N = d.n_sz;
    long k = 0;
    for (int c = 0; c < d.cin; ++c) {
        const T* plane = x.data() + static_cast<long>(c) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx, ++k) {
                T* dst = colT + k * N;
                const int dy = ky * s.dilation - d.pad_h;
                const int dx = kx * s.dilation - d.pad_w;
                long n = 0;
                for (int oy = 0; oy < d.oh; ++oy) {
                    const int sy = oy * s.stride + dy;
                    if (sy < 0 || sy >= d.h) {
                        for (int ox = 0; ox < d.ow; ++ox) dst[n++] = T(0);
                        continue;
                    }
                    const T* row = plane + static_cast<long>(sy) * d.w;
                    for (int ox = 0; ox < d.ow; ++ox) {
                        const int sx = ox * s.stride + dx;
                        dst[n++] = (sx < 0 || sx >= d.w) ? T(0) : row[sx];
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_t(const T* colT, const ConvDims& d, const ConvSpec& s, Tensor<T>& gx) {
    const long N = d.n_sz;
    long k = 0;
    for (int c = 0; c < d.cin; ++c) {
        T* plane = gx.data() + static_cast<long>(c) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx, ++k) {
                const T* src = colT + k * N;
                const int dy = ky * s.dilation - d.pad_h;
                const int dx = kx * s.dilation - d.pad_w;
                long n = 0;
                for (int oy = 0; oy < d.oh; ++oy) {
                    const int sy = oy * s.stride + dy;
                    if (sy < 0 || sy >= d.h) {
                        n += d.ow;
                        continue;
                    }
                    T* row = plane + static_cast<long>(sy) * d.w;
                    for (int ox = 0; ox < d.ow; ++ox) {
                        const int sx = ox * s.stride + dx;
                        if (sx >= 0 && sx < d.w) row[sx] += src[n];
                        ++n;
                    }
                }
            }
        }
    }
}

} // namespace detail

template <class T>
VarId conv2d(Tape<T>& t, VarId x, VarId w, VarId b, ConvSpec spec = {}) {
    using detail::ColMat;
    using detail::RowMat;
    const Tensor<T>&xv = t.val(x), &wv = t.val(w), &bv = t.val(b);
    const detail::ConvDims d = detail::conv_dims(xv, wv, spec);
    if (bv.numel() != d.cout) throw shape_error("conv2d: bias size mismatch");

    AlignedVec<T> colT(static_cast<std::size_t>(d.k_sz * d.n_sz));
    detail::im2col_t(xv, d, spec, colT.data());

    Tensor<T> out({d.cout, d.oh, d.ow});
    {
        Eigen::Map<RowMat<T>> om(out.data(), d.cout, d.n_sz);
        Eigen::Map<const RowMat<T>> wm(wv.data(), d.cout, d.k_sz);
        Eigen::Map<const ColMat<T>> cm(colT.data(), d.n_sz, d.k_sz);
        om.noalias() = wm * cm.transpose();
        for (int c = 0; c < d.cout; ++c) om.row(c).array() += bv[c];
    }

    bool ng = detail::any_needs(t, {x, w, b});
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, w, b, d, spec, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Eigen::Map<const RowMat<T>> gm(g.data(), d.cout, d.n_sz);
        if (tt.needs_grad(w)) {
            AlignedVec<T> colT(static_cast<std::size_t>(d.k_sz * d.n_sz));
            detail::im2col_t(tt.val(x), d, spec, colT.data());
            Eigen::Map<const ColMat<T>> cm(colT.data(), d.n_sz, d.k_sz);
            Eigen::Map<RowMat<T>> gw(tt.grad(w).data(), d.cout, d.k_sz);
            gw.noalias() += gm * cm;
        }
        if (tt.needs_grad(x)) {
            AlignedVec<T> gcolT(static_cast<std::size_t>(d.k_sz * d.n_sz));
            Eigen::Map<ColMat<T>> gc(gcolT.data(), d.n_sz, d.k_sz);
            Eigen::Map<const RowMat<T>> wm(tt.val(w).data(), d.cout, d.k_sz);
            gc.noalias() = gm.transpose() * wm;
            detail::col2im_t(gcolT.data(), d, spec, tt.grad(x));
        }
        if (tt.needs_grad(b)) {
            Tensor<T>& gb = tt.grad(b);
            for (int c = 0; c < d.cout; ++c) gb[c] += gm.row(c).sum();
        }
    });
}

// ---------------------------------------------------------------------------
// Resampling

template <class T>
VarId upsample_nearest(Tape<T>& t, VarId x, int oh, int ow) {
    const Tensor<T>& xv = t.val(x);
    if (xv.rank() != 3) throw shape_error("upsample_nearest: need [C,H,W]");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    auto src_index = [](int dst, int in, int out) {
        int s = static_cast<int>((static_cast<double>(dst) + 0.5) * in / out);
        return std::min(s, in - 1);
    };
    std::vector<int> sy(oh), sx(ow);
    for (int i = 0; i < oh; ++i) sy[i] = src_index(i, h, oh);
    for (int i = 0; i < ow; ++i) sx[i] = src_index(i, w, ow);
    Tensor<T> out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y_ = 0; y_ < oh; ++y_)
            for (int x_ = 0; x_ < ow; ++x_) out.at(ch, y_, x_) = xv.at(ch, sy[y_], sx[x_]);
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng,
                  !ng ? std::function<void(Tape<T>&)>() : [x, sy, sx, c, oh, ow, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Tensor<T>& gx = tt.grad(x);
        for (int ch = 0; ch < c; ++ch)
            for (int y_ = 0; y_ < oh; ++y_)
                for (int x_ = 0; x_ < ow; ++x_) gx.at(ch, sy[y_], sx[x_]) += g.at(ch, y_, x_);
    });
}

namespace detail {
struct LerpW {
    int i0, i1;
    double w0, w1;
};
inline std::vector<LerpW> bilinear_weights(int in, int out) {
    std::vector<LerpW> ws(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int d = 0; d < out; ++d) {
        double s = (d + 0.5) * scale - 0.5;
        if (s < 0) s = 0;
        if (s > in - 1) s = in - 1;
        const int i0 = static_cast<int>(s);
        const int i1 = std::min(i0 + 1, in - 1);
        const double f = s - i0;
        ws[static_cast<std::size_t>(d)] = {i0, i1, 1.0 - f, f};
    }
    return ws;
}
} // namespace detail

template <class T>
VarId upsample_bilinear(Tape<T>& t, VarId x, int oh, int ow) {
    const Tensor<T>& xv = t.val(x);
    if (xv.rank() != 3) throw shape_error("upsample_bilinear: need [C,H,W]");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    auto wy = detail::bilinear_weights(h, oh);
    auto wx = detail::bilinear_weights(w, ow);
    Tensor<T> out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y_ = 0; y_ < oh; ++y_) {
            const auto& ay = wy[static_cast<std::size_t>(y_)];
            for (int x_ = 0; x_ < ow; ++x_) {
                const auto& ax = wx[static_cast<std::size_t>(x_)];
                const double v = ay.w0 * (ax.w0 * xv.at(ch, ay.i0, ax.i0) + ax.w1 * xv.at(ch, ay.i0, ax.i1)) +
                                 ay.w1 * (ax.w0 * xv.at(ch, ay.i1, ax.i0) + ax.w1 * xv.at(ch, ay.i1, ax.i1));
                out.at(ch, y_, x_) = static_cast<T>(v);
            }
        }
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng,
                  !ng ? std::function<void(Tape<T>&)>() : [x, wy, wx, c, oh, ow, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Tensor<T>& gx = tt.grad(x);
        for (int ch = 0; ch < c; ++ch)
            for (int y_ = 0; y_ < oh; ++y_) {
                const auto& ay = wy[static_cast<std::size_t>(y_)];
                for (int x_ = 0; x_ < ow; ++x_) {
                    const auto& ax = wx[static_cast<std::size_t>(x_)];
                    const T gv = g.at(ch, y_, x_);
                    gx.at(ch, ay.i0, ax.i0) += static_cast<T>(ay.w0 * ax.w0) * gv;
                    gx.at(ch, ay.i0, ax.i1) += static_cast<T>(ay.w0 * ax.w1) * gv;
                    gx.at(ch, ay.i1, ax.i0) += static_cast<T>(ay.w1 * ax.w0) * gv;
                    gx.at(ch, ay.i1, ax.i1) += static_cast<T>(ay.w1 * ax.w1) * gv;
                }
            }
    });
}

// 2x2 average pool, even input sizes.
template <class T>
VarId avgpool2(Tape<T>& t, VarId x) {
    const Tensor<T>& xv = t.val(x);
    if (xv.rank() != 3 || xv.dim(1) % 2 || xv.dim(2) % 2) throw shape_error("avgpool2: need even [C,H,W]");
    const int c = xv.dim(0), h = xv.dim(1) / 2, w = xv.dim(2) / 2;
    Tensor<T> out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y_ = 0; y_ < h; ++y_)
            for (int x_ = 0; x_ < w; ++x_)
                out.at(ch, y_, x_) = static_cast<T>(0.25) *
                    (xv.at(ch, 2 * y_, 2 * x_) + xv.at(ch, 2 * y_, 2 * x_ + 1) +
                     xv.at(ch, 2 * y_ + 1, 2 * x_) + xv.at(ch, 2 * y_ + 1, 2 * x_ + 1));
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, c, h, w, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Tensor<T>& gx = tt.grad(x);
        for (int ch = 0; ch < c; ++ch)
            for (int y_ = 0; y_ < h; ++y_)
                for (int x_ = 0; x_ < w; ++x_) {
                    const T q = g.at(ch, y_, x_) * static_cast<T>(0.25);
                    gx.at(ch, 2 * y_, 2 * x_) += q;
                    gx.at(ch, 2 * y_, 2 * x_ + 1) += q;
                    gx.at(ch, 2 * y_ + 1, 2 * x_) += q;
                    gx.at(ch, 2 * y_ + 1, 2 * x_ + 1) += q;
                }
    });
}

// ---------------------------------------------------------------------------
// Channel softmax: per-pixel softmax over the channel axis of [C,H,W].

template <class T>
VarId softmax_c(Tape<T>& t, VarId x) {
    const Tensor<T>& xv = t.val(x);
    if (xv.rank() != 3) throw shape_error("softmax_c: need [C,H,W]");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const long plane = static_cast<long>(h) * w;
    Tensor<T> out(xv.shape());
    for (long p = 0; p < plane; ++p) {
        T mx = xv[p];
        for (int ch = 1; ch < c; ++ch) mx = std::max(mx, xv[ch * plane + p]);
        T sum = T(0);
        for (int ch = 0; ch < c; ++ch) {
            const T e = std::exp(xv[ch * plane + p] - mx);
            out[ch * plane + p] = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (int ch = 0; ch < c; ++ch) out[ch * plane + p] *= inv;
    }
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, c, plane, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const Tensor<T>& yv = tt.val(y);
        Tensor<T>& gx = tt.grad(x);
        for (long p = 0; p < plane; ++p) {
            T dot = T(0);
            for (int ch = 0; ch < c; ++ch) dot += g[ch * plane + p] * yv[ch * plane + p];
            for (int ch = 0; ch < c; ++ch)
                gx[ch * plane + p] += yv[ch * plane + p] * (g[ch * plane + p] - dot);
        }
    });
}

// out(p) = probs[labels(p)](p); labels outside [0,C) are invalid.
template <class T>
VarId select_class(Tape<T>& t, VarId probs, const Tensor<int>& labels) {
    const Tensor<T>& pv = t.val(probs);
    if (pv.rank() != 3 || labels.rank() != 2 || labels.dim(0) != pv.dim(1) || labels.dim(1) != pv.dim(2))
        throw shape_error("select_class: shape mismatch");
    const int c = pv.dim(0);
    const long plane = static_cast<long>(pv.dim(1)) * pv.dim(2);
    Tensor<T> out({pv.dim(1), pv.dim(2)});
    for (long p = 0; p < plane; ++p) {
        const int l = labels[p];
        if (l < 0 || l >= c) throw shape_error("select_class: label out of range");
        out[p] = pv[l * plane + p];
    }
    bool ng = t.needs_grad(probs);
    VarId y{static_cast<int>(t.size())};
    auto lbl = std::make_shared<Tensor<int>>(labels);
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [probs, lbl, plane, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Tensor<T>& gp = tt.grad(probs);
        for (long p = 0; p < plane; ++p) gp[(*lbl)[p] * plane + p] += g[p];
    });
}

// ---------------------------------------------------------------------------
// Patch gathering for the patch-level coherence loss. Patches must lie fully
// inside the image. Output row j = flattened [C,ps,ps] block at coords[j].

template <class T>
VarId gather_patches(Tape<T>& t, VarId x, std::shared_ptr<const std::vector<std::pair<int, int>>> coords,
                     int ps) {
    const Tensor<T>& xv = t.val(x);
    if (xv.rank() != 3) throw shape_error("gather_patches: need [C,H,W]");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const int n = static_cast<int>(coords->size());
    const int d = c * ps * ps;
    Tensor<T> out({n, d});
    for (int j = 0; j < n; ++j) {
        const auto [py, px] = (*coords)[static_cast<std::size_t>(j)];
        if (py < 0 || px < 0 || py + ps > h || px + ps > w) throw shape_error("gather_patches: out of bounds");
        T* row = out.data() + static_cast<long>(j) * d;
        long i = 0;
        for (int ch = 0; ch < c; ++ch)
            for (int dy = 0; dy < ps; ++dy)
                for (int dx = 0; dx < ps; ++dx) row[i++] = xv.at(ch, py + dy, px + dx);
    }
    bool ng = t.needs_grad(x);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() : [x, coords, ps, c, d, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        Tensor<T>& gx = tt.grad(x);
        for (std::size_t j = 0; j < coords->size(); ++j) {
            const auto [py, px] = (*coords)[j];
            const T* row = g.data() + static_cast<long>(j) * d;
            long i = 0;
            for (int ch = 0; ch < c; ++ch)
                for (int dy = 0; dy < ps; ++dy)
                    for (int dx = 0; dx < ps; ++dx) gx.at(ch, py + dy, px + dx) += row[i++];
        }
    });
}

// Per row j: 1 - <(p_j - mu_j)/max(||p_j - mu_j||, eps), ref_hat_j>, where
// ref_hat rows are already centered and normalised constants.
template <class T>
VarId centered_cosine_dist(Tape<T>& t, VarId p, std::shared_ptr<const Tensor<T>> ref_hat,
                           std::shared_ptr<const Tensor<T>> mu) {
    const Tensor<T>& pv = t.val(p);
    if (pv.rank() != 2 || !pv.same_shape(*ref_hat)) throw shape_error("centered_cosine_dist: shape mismatch");
    const int n = pv.dim(0), d = pv.dim(1);
    if (mu->numel() != d) throw shape_error("centered_cosine_dist: mu size mismatch");
    const T eps = static_cast<T>(1e-12);
    Tensor<T> out({n});
    for (int j = 0; j < n; ++j) {
        const T* row = pv.data() + static_cast<long>(j) * d;
        const T* bh = ref_hat->data() + static_cast<long>(j) * d;
        T nrm = T(0);
        for (int i = 0; i < d; ++i) {
            const T u = row[i] - (*mu)[i];
            nrm += u * u;
        }
        nrm = std::max(std::sqrt(nrm), eps);
        T dot = T(0);
        for (int i = 0; i < d; ++i) dot += (row[i] - (*mu)[i]) * bh[i];
        out[j] = T(1) - dot / nrm;
    }
    bool ng = t.needs_grad(p);
    VarId y{static_cast<int>(t.size())};
    return t.push(std::move(out), ng,
                  !ng ? std::function<void(Tape<T>&)>() : [p, ref_hat, mu, n, d, eps, y](Tape<T>& tt) {
        const Tensor<T>& g = tt.grad(y);
        const Tensor<T>& pv2 = tt.val(p);
        Tensor<T>& gp = tt.grad(p);
        std::vector<T> u(static_cast<std::size_t>(d));
        for (int j = 0; j < n; ++j) {
            const T* row = pv2.data() + static_cast<long>(j) * d;
            const T* bh = ref_hat->data() + static_cast<long>(j) * d;
            T* grow = gp.data() + static_cast<long>(j) * d;
            T nrm2 = T(0);
            for (int i = 0; i < d; ++i) {
                u[static_cast<std::size_t>(i)] = row[i] - (*mu)[i];
                nrm2 += u[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(i)];
            }
            const T nrm = std::sqrt(nrm2);
            const T gj = g[j];
            if (nrm <= eps) {
                // forward used u/eps, whose jacobian is I/eps
                for (int i = 0; i < d; ++i) grow[i] += -gj * bh[i] / eps;
            } else {
                T dot = T(0);
                for (int i = 0; i < d; ++i) dot += u[static_cast<std::size_t>(i)] * bh[i];
                const T c = dot / nrm;
                for (int i = 0; i < d; ++i)
                    grow[i] += -gj * (bh[i] - c * u[static_cast<std::size_t>(i)] / nrm) / nrm;
            }
        }
    });
}

} // namespace cohpaint
