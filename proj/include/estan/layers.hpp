#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "estan/kernels.hpp"
#include "estan/tensor.hpp"

namespace estan::nn {

/// Learnable convolution parameters. weights dims are
/// (out_channels, in_channels, kh, kw); one bias per output channel.
template <typename T>
struct ConvKernel {
    Tensor4<T> weights;
    std::vector<T> bias;

    int out_channels() const { return weights.n(); }
    int in_channels() const { return weights.c(); }
    int kh() const { return weights.h(); }
    int kw() const { return weights.w(); }
};

namespace detail {

// Same padding needs an odd extent (or extent 1) per axis; an even extent > 1
// cannot preserve the spatial size with symmetric zero padding.
inline void validate_extents(int kh, int kw) {
    if ((kh > 1 && kh % 2 == 0) || (kw > 1 && kw % 2 == 0))
        throw ShapeError("unsupported kernel extent " + std::to_string(kh) + "x" +
                         std::to_string(kw) + ": even extents > 1 break same padding");
}

template <typename T>
void validate_kernel(const ConvKernel<T>& k) {
    validate_extents(k.kh(), k.kw());
    if (k.bias.size() != static_cast<size_t>(k.out_channels()))
        throw ShapeError("conv bias length " + std::to_string(k.bias.size()) +
                         " != out_channels " + std::to_string(k.out_channels()));
}

}  // namespace detail

template <typename T>
ConvKernel<T> conv_kernel_zeros(int out_ch, int in_ch, int kh, int kw) {
    detail::validate_extents(kh, kw);
    ConvKernel<T> k;
    k.weights = Tensor4<T>({out_ch, in_ch, kh, kw}, T(0));
    k.bias.assign(out_ch, T(0));
    return k;
}

/// Stride-1 cross-correlation with zero same-padding; spatial dims preserved.
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvKernel<T>& k) {
    detail::validate_kernel(k);
    if (x.c() != k.in_channels())
        throw ShapeError("conv2d: input has " + std::to_string(x.c()) +
                         " channels, kernel expects " + std::to_string(k.in_channels()));
    const int N = x.n(), H = x.h(), W = x.w();
    const int OC = k.out_channels(), IC = k.in_channels();
    const int KH = k.kh(), KW = k.kw();
    const int ph = (KH - 1) / 2, pw = (KW - 1) / 2;

    Tensor4<T> out({N, OC, H, W}, T(0));
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            T* plane = out.plane(n, oc);
            const T b = k.bias[oc];
            for (int i = 0; i < H * W; ++i) plane[i] = b;
            for (int ic = 0; ic < IC; ++ic) {
                for (int ky = 0; ky < KH; ++ky) {
                    const T* wrow = k.weights.row(oc, ic, ky);
                    for (int oy = 0; oy < H; ++oy) {
                        const int iy = oy + ky - ph;
                        if (iy < 0 || iy >= H) continue;
                        T* orow = out.row(n, oc, oy);
                        const T* xrow = x.row(n, ic, iy);
                        for (int kx = 0; kx < KW; ++kx) {
                            const int shift = kx - pw;
                            const int lo = std::max(0, -shift);
                            const int hi = std::min(W, W - shift);
                            if (lo < hi)
                                kernels::axpy(orow + lo, xrow + lo + shift, wrow[kx],
                                              static_cast<size_t>(hi - lo));
                        }
                    }
                }
            }
        }
    }
    check_finite(out, "conv2d_forward");
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor4<T> grad_x;       // empty when skipped
    Tensor4<T> grad_weights;
    std::vector<T> grad_bias;
};

/// Analytic gradients of conv2d_forward. Pass need_grad_x=false for the first
/// layer of a network, where the input gradient has no consumer.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const ConvKernel<T>& k,
                             const Tensor4<T>& grad_out, bool need_grad_x = true) {
    detail::validate_kernel(k);
    const int N = x.n(), H = x.h(), W = x.w();
    const int OC = k.out_channels(), IC = k.in_channels();
    const int KH = k.kh(), KW = k.kw();
    const int ph = (KH - 1) / 2, pw = (KW - 1) / 2;
    if (x.c() != IC)
        throw ShapeError("conv2d_backward: input channel mismatch");
    if (grad_out.dims() != Shape4{N, OC, H, W})
        throw ShapeError("conv2d_backward: grad_out dims " + grad_out.dims().str() +
                         " do not match forward output " + Shape4{N, OC, H, W}.str());

    ConvGrads<T> g;
    g.grad_weights = Tensor4<T>({OC, IC, KH, KW}, T(0));
    g.grad_bias.assign(OC, T(0));

    // grad_bias[oc] = sum of grad_out over (n, oh, ow)
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc) {
            const T* plane = grad_out.plane(n, oc);
            T acc = T(0);
            for (int i = 0; i < H * W; ++i) acc += plane[i];
            g.grad_bias[oc] += acc;
        }

    // grad_w[oc][ic][ky][kx] = sum over (n,oy,ow) of go[oy][ow] * x[oy+ky-ph][ow+kx-pw]
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int ic = 0; ic < IC; ++ic)
                for (int ky = 0; ky < KH; ++ky) {
                    T* gwrow = g.grad_weights.row(oc, ic, ky);
                    for (int oy = 0; oy < H; ++oy) {
                        const int iy = oy + ky - ph;
                        if (iy < 0 || iy >= H) continue;
                        const T* gorow = grad_out.row(n, oc, oy);
                        const T* xrow = x.row(n, ic, iy);
                        for (int kx = 0; kx < KW; ++kx) {
                            const int shift = kx - pw;
                            const int lo = std::max(0, -shift);
                            const int hi = std::min(W, W - shift);
                            if (lo < hi)
                                gwrow[kx] += kernels::dot(gorow + lo, xrow + lo + shift,
                                                          static_cast<size_t>(hi - lo));
                        }
                    }
                }

    // grad_x[iy][ix] = sum over (oc,ky,kx) of w[ky][kx] * go[iy-ky+ph][ix-kx+pw]
    if (need_grad_x) {
        g.grad_x = Tensor4<T>({N, IC, H, W}, T(0));
        for (int n = 0; n < N; ++n)
            for (int ic = 0; ic < IC; ++ic)
                for (int oc = 0; oc < OC; ++oc)
                    for (int ky = 0; ky < KH; ++ky) {
                        const T* wrow = k.weights.row(oc, ic, ky);
                        for (int iy = 0; iy < H; ++iy) {
                            const int oy = iy - ky + ph;
                            if (oy < 0 || oy >= H) continue;
                            T* gxrow = g.grad_x.row(n, ic, iy);
                            const T* gorow = grad_out.row(n, oc, oy);
                            for (int kx = 0; kx < KW; ++kx) {
                                const int shift = pw - kx;
                                const int lo = std::max(0, -shift);
                                const int hi = std::min(W, W - shift);
                                if (lo < hi)
                                    kernels::axpy(gxrow + lo, gorow + lo + shift, wrow[kx],
                                                  static_cast<size_t>(hi - lo));
                            }
                        }
                    }
        check_finite(g.grad_x, "conv2d_backward grad_x");
    }
    check_finite(g.grad_weights, "conv2d_backward grad_w");
    return g;
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
    Tensor4<T> out(x.dims(), T(0));
    kernels::relu_fwd(out.data(), x.data(), x.size());
    return out;
}

/// Gradient passes where the forward input was strictly positive.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& grad_out) {
    if (x.dims() != grad_out.dims())
        throw ShapeError("relu_backward shape mismatch");
    Tensor4<T> out(x.dims(), T(0));
    kernels::relu_bwd(out.data(), x.data(), grad_out.data(), x.size());
    return out;
}

/// Flat input index of the selected maximum per pooled output element.
struct PoolIndices {
    Shape4 in_dims{};
    Shape4 out_dims{};
    std::vector<size_t> argmax;
};

/// 2x2 max pooling, stride 2. Ties go to the first maximal element in
/// row-major window order.
template <typename T>
std::pair<Tensor4<T>, PoolIndices> maxpool2x2_forward(const Tensor4<T>& x) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
        throw ShapeError("maxpool2x2: spatial dims must be even, got " + x.dims().str());
    const int N = x.n(), C = x.c(), OH = x.h() / 2, OW = x.w() / 2;
    Tensor4<T> out({N, C, OH, OW}, T(0));
    PoolIndices idx;
    idx.in_dims = x.dims();
    idx.out_dims = out.dims();
    idx.argmax.resize(out.size());
    size_t o = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < OH; ++oy) {
                const T* r0 = x.row(n, c, 2 * oy);
                const T* r1 = x.row(n, c, 2 * oy + 1);
                const size_t base0 = x.index(n, c, 2 * oy, 0);
                const size_t base1 = x.index(n, c, 2 * oy + 1, 0);
                T* orow = out.row(n, c, oy);
                for (int ox = 0; ox < OW; ++ox, ++o) {
                    const int x0 = 2 * ox;
                    T best = r0[x0];
                    size_t best_i = base0 + x0;
                    if (r0[x0 + 1] > best) { best = r0[x0 + 1]; best_i = base0 + x0 + 1; }
                    if (r1[x0] > best)     { best = r1[x0];     best_i = base1 + x0; }
                    if (r1[x0 + 1] > best) { best = r1[x0 + 1]; best_i = base1 + x0 + 1; }
                    orow[ox] = best;
                    idx.argmax[o] = best_i;
                }
            }
    return {std::move(out), std::move(idx)};
}

/// Routes each gradient to its recorded argmax position, zeros elsewhere.
template <typename T>
Tensor4<T> maxpool2x2_backward(const PoolIndices& idx, const Tensor4<T>& grad_out,
                               Shape4 in_dims) {
    if (idx.in_dims != in_dims)
        throw ShapeError("maxpool2x2_backward: in_dims do not match recorded forward dims");
    if (grad_out.dims() != idx.out_dims)
        throw ShapeError("maxpool2x2_backward: grad_out dims mismatch");
    Tensor4<T> gx(in_dims, T(0));
    const T* go = grad_out.data();
    for (size_t o = 0; o < idx.argmax.size(); ++o) gx.data()[idx.argmax[o]] += go[o];
    return gx;
}

/// Each input pixel becomes a 2x2 block.
template <typename T>
Tensor4<T> upsample_nearest2x(const Tensor4<T>& x) {
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    Tensor4<T> out({N, C, 2 * H, 2 * W}, T(0));
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y) {
                const T* src = x.row(n, c, y);
                T* d0 = out.row(n, c, 2 * y);
                T* d1 = out.row(n, c, 2 * y + 1);
                for (int xx = 0; xx < W; ++xx) {
                    d0[2 * xx] = src[xx];
                    d0[2 * xx + 1] = src[xx];
                    d1[2 * xx] = src[xx];
                    d1[2 * xx + 1] = src[xx];
                }
            }
    return out;
}

/// Sums each 2x2 block of grad_out back onto its source pixel.
template <typename T>
Tensor4<T> upsample_nearest2x_backward(const Tensor4<T>& grad_out) {
    if (grad_out.h() % 2 != 0 || grad_out.w() % 2 != 0)
        throw ShapeError("upsample backward: grad dims must be even");
    const int N = grad_out.n(), C = grad_out.c();
    const int H = grad_out.h() / 2, W = grad_out.w() / 2;
    Tensor4<T> gx({N, C, H, W}, T(0));
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y) {
                const T* g0 = grad_out.row(n, c, 2 * y);
                const T* g1 = grad_out.row(n, c, 2 * y + 1);
                T* dst = gx.row(n, c, y);
                for (int xx = 0; xx < W; ++xx)
                    dst[xx] = (g0[2 * xx] + g0[2 * xx + 1]) + (g1[2 * xx] + g1[2 * xx + 1]);
            }
    return gx;
}

/// Channel concatenation, a's channels first.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
        throw ShapeError("concat_channels: batch/spatial mismatch " + a.dims().str() +
                         " vs " + b.dims().str());
    Tensor4<T> out({a.n(), a.c() + b.c(), a.h(), a.w()}, T(0));
    const size_t hw = static_cast<size_t>(a.h()) * a.w();
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c)
            std::copy_n(a.plane(n, c), hw, out.plane(n, c));
        for (int c = 0; c < b.c(); ++c)
            std::copy_n(b.plane(n, c), hw, out.plane(n, a.c() + c));
    }
    return out;
}

/// Inverse of concat_channels: splits the first c_first channels off.
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& t, int c_first) {
    if (c_first < 1 || c_first >= t.c())
        throw ShapeError("split_channels: c_first " + std::to_string(c_first) +
                         " out of range for " + t.dims().str());
    Tensor4<T> a({t.n(), c_first, t.h(), t.w()}, T(0));
    Tensor4<T> b({t.n(), t.c() - c_first, t.h(), t.w()}, T(0));
    const size_t hw = static_cast<size_t>(t.h()) * t.w();
    for (int n = 0; n < t.n(); ++n) {
        for (int c = 0; c < c_first; ++c)
            std::copy_n(t.plane(n, c), hw, a.plane(n, c));
        for (int c = c_first; c < t.c(); ++c)
            std::copy_n(t.plane(n, c), hw, b.plane(n, c - c_first));
    }
    return {std::move(a), std::move(b)};
}

/// Numerically stable logistic sigmoid.
template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x) {
    Tensor4<T> out(x.dims(), T(0));
    const T* s = x.data();
    T* d = out.data();
    for (size_t i = 0; i < x.size(); ++i) {
        const T v = s[i];
        if (v >= T(0)) {
            d[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            d[i] = e / (T(1) + e);
        }
    }
    return out;
}

/// Backward from the forward *output* y: grad * y * (1 - y).
template <typename T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& y, const Tensor4<T>& grad_out) {
    if (y.dims() != grad_out.dims()) throw ShapeError("sigmoid_backward shape mismatch");
    Tensor4<T> out(y.dims(), T(0));
    const T* yv = y.data();
    const T* go = grad_out.data();
    T* d = out.data();
    for (size_t i = 0; i < y.size(); ++i) d[i] = go[i] * yv[i] * (T(1) - yv[i]);
    return out;
}

/// Adam accumulators for an ordered collection of named flat arrays.
template <typename T>
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int64_t t = 0;
    std::vector<std::vector<T>> m, v;  // one slot per named array, lazily sized
};

template <typename T>
struct NamedSpan {
    std::string name;
    std::span<T> values;
};

template <typename T>
struct NamedConstSpan {
    std::string name;
    std::span<const T> values;
};

namespace detail {

template <typename T>
void adam_update_array(T* p, T* m, T* v, const T* g, size_t n, double lr,
                       double b1, double b2, double eps, double c1, double c2) {
    if constexpr (std::is_same_v<T, float>) {
        kernels::ops().adam(p, m, v, g, n, static_cast<float>(lr),
                            static_cast<float>(b1), static_cast<float>(b2),
                            static_cast<float>(eps), static_cast<float>(c1),
                            static_cast<float>(c2));
    } else {
        for (size_t i = 0; i < n; ++i) {
            const T gi = g[i];
            m[i] = T(b1) * m[i] + (T(1) - T(b1)) * gi;
            v[i] = T(b2) * v[i] + (T(1) - T(b2)) * (gi * gi);
            const T mhat = m[i] * T(c1);
            const T vhat = v[i] * T(c2);
            p[i] -= T(lr) * mhat / (std::sqrt(vhat) + T(eps));
        }
    }
}

}  // namespace detail

/// One bias-corrected Adam step over name-aligned parameter/gradient arrays.
/// Moments advance even at lr = 0; t increments exactly once per call.
template <typename T>
void adam_step(std::vector<NamedSpan<T>>& params,
               const std::vector<NamedConstSpan<T>>& grads, AdamState<T>& state) {
    if (params.size() != grads.size())
        throw ShapeError("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].values.size(), T(0));
            state.v[i].assign(params[i].values.size(), T(0));
        }
    }
    if (state.m.size() != params.size())
        throw ShapeError("adam_step: state slot count mismatch");
    state.t += 1;
    const double c1 = 1.0 / (1.0 - std::pow(state.beta1, static_cast<double>(state.t)));
    const double c2 = 1.0 / (1.0 - std::pow(state.beta2, static_cast<double>(state.t)));
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != grads[i].name)
            throw ShapeError("adam_step: name mismatch at slot " + std::to_string(i) +
                             ": " + params[i].name + " vs " + grads[i].name);
        if (params[i].values.size() != grads[i].values.size() ||
            params[i].values.size() != state.m[i].size())
            throw ShapeError("adam_step: size mismatch for " + params[i].name);
        detail::adam_update_array(params[i].values.data(), state.m[i].data(),
                                  state.v[i].data(), grads[i].values.data(),
                                  params[i].values.size(), state.lr, state.beta1,
                                  state.beta2, state.epsilon, c1, c2);
    }
}

}  // namespace estan::nn
