#include "estan/kernels.hpp"

#include <cmath>

// Reference backend. These loops define the semantics every SIMD variant is
// tested against; keep them free of reassociation and contraction (the build
// sets -ffp-contract=off).

namespace estan::kernels::scalar {

namespace {

void axpy_impl(float* dst, const float* src, float a, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] += a * src[i];
}

void vadd_impl(float* dst, const float* a, const float* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

float dot_impl(const float* a, const float* b, size_t n) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void relu_fwd_impl(float* dst, const float* src, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
}

void relu_bwd_impl(float* dst, const float* act, const float* go, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = act[i] > 0.0f ? go[i] : 0.0f;
}

void adam_impl(float* p, float* m, float* v, const float* g, size_t n,
               float lr, float b1, float b2, float eps, float c1, float c2) {
    for (size_t i = 0; i < n; ++i) {
        const float gi = g[i];
        m[i] = b1 * m[i] + (1.0f - b1) * gi;
        v[i] = b2 * v[i] + (1.0f - b2) * (gi * gi);
        const float mhat = m[i] * c1;
        const float vhat = v[i] * c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const KernelOps kOps = {
    axpy_impl, vadd_impl, dot_impl, relu_fwd_impl, relu_bwd_impl, adam_impl,
    "scalar",
};

}  // namespace estan::kernels::scalar
