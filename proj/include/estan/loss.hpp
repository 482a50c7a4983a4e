#pragma once

#include <cmath>
#include <string>

#include "estan/tensor.hpp"

namespace estan::loss {

namespace detail {

template <typename T>
void validate_dice_inputs(const Tensor4<T>& p, const Tensor4<T>& g) {
    if (p.dims() != g.dims())
        throw ShapeError("dice loss: probability dims " + p.dims().str() +
                         " do not match mask dims " + g.dims().str());
    const T* pv = p.data();
    const T* gv = g.data();
    for (size_t i = 0; i < p.size(); ++i) {
        if (gv[i] != T(0) && gv[i] != T(1))
            throw ValueError("dice loss: mask element at flat index " +
                             std::to_string(i) + " is not binary");
        if (!(pv[i] >= T(0) && pv[i] <= T(1)))
            throw ValueError("dice loss: probability at flat index " +
                             std::to_string(i) + " is outside [0,1]");
    }
}

// Smoothed Dice terms over one flat range: numerator 1 + 2*sum(p*g),
// denominator 1 + sum(p^2) + sum(g^2). Double accumulation regardless of T.
template <typename T>
std::pair<double, double> dice_terms(const T* p, const T* g, size_t count) {
    double pg = 0.0, pp = 0.0, gg = 0.0;
    for (size_t i = 0; i < count; ++i) {
        const double pi = static_cast<double>(p[i]);
        const double gi = static_cast<double>(g[i]);
        pg += pi * gi;
        pp += pi * pi;
        gg += gi * gi;
    }
    return {1.0 + 2.0 * pg, 1.0 + pp + gg};
}

}  // namespace detail

/// Smoothed Dice loss, 1 - (1 + 2*sum(p*g)) / (1 + sum(p^2) + sum(g^2)),
/// summed over every pixel of the batch. per_image instead evaluates the
/// quotient per image and averages the losses.
template <typename T>
double dice_loss(const Tensor4<T>& p, const Tensor4<T>& g, bool per_image = false) {
    detail::validate_dice_inputs(p, g);
    if (!per_image) {
        auto [num, den] = detail::dice_terms(p.data(), g.data(), p.size());
        return 1.0 - num / den;
    }
    const size_t stride = p.size() / static_cast<size_t>(p.n());
    double total = 0.0;
    for (int n = 0; n < p.n(); ++n) {
        auto [num, den] =
            detail::dice_terms(p.data() + n * stride, g.data() + n * stride, stride);
        total += 1.0 - num / den;
    }
    return total / p.n();
}

/// Analytic dLoss/dp. With Nm and D the smoothed numerator and denominator,
/// dLoss/dp_i = (2*p_i*Nm - 2*g_i*D) / D^2.
template <typename T>
Tensor4<T> dice_loss_backward(const Tensor4<T>& p, const Tensor4<T>& g,
                              bool per_image = false) {
    detail::validate_dice_inputs(p, g);
    Tensor4<T> grad(p.dims(), T(0));
    const size_t stride =
        per_image ? p.size() / static_cast<size_t>(p.n()) : p.size();
    const int groups = per_image ? p.n() : 1;
    const double scale = per_image ? 1.0 / p.n() : 1.0;
    for (int n = 0; n < groups; ++n) {
        const T* pv = p.data() + n * stride;
        const T* gv = g.data() + n * stride;
        T* out = grad.data() + n * stride;
        auto [num, den] = detail::dice_terms(pv, gv, stride);
        const double inv_den2 = 1.0 / (den * den);
        for (size_t i = 0; i < stride; ++i) {
            const double pi = static_cast<double>(pv[i]);
            const double gi = static_cast<double>(gv[i]);
            out[i] = static_cast<T>(scale * (2.0 * pi * num - 2.0 * gi * den) * inv_den2);
        }
    }
    check_finite(grad, "dice_loss_backward");
    return grad;
}

}  // namespace estan::loss
