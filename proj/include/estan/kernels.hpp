#pragma once

#include <cstddef>

namespace estan::kernels {

/// Table of the hot inner-loop primitives. One scalar reference backend and,
/// on machines that have it, an AVX2 backend selected at runtime. Every entry
/// except `dot` is elementwise and bitwise-identical across backends; `dot`
/// reorders its reduction in the SIMD lane (equivalence-tested at tolerance).
struct KernelOps {
    // dst[i] += a * src[i]
    void (*axpy)(float* dst, const float* src, float a, size_t n);
    // dst[i] = a[i] + b[i]
    void (*vadd)(float* dst, const float* a, const float* b, size_t n);
    // sum_i a[i] * b[i]
    float (*dot)(const float* a, const float* b, size_t n);
    // dst[i] = max(src[i], 0)
    void (*relu_fwd)(float* dst, const float* src, size_t n);
    // dst[i] = act[i] > 0 ? go[i] : 0
    void (*relu_bwd)(float* dst, const float* act, const float* go, size_t n);
    // Adam update, bias corrections c1 = 1/(1-b1^t), c2 = 1/(1-b2^t) precomputed.
    void (*adam)(float* p, float* m, float* v, const float* g, size_t n,
                 float lr, float b1, float b2, float eps, float c1, float c2);
    const char* name;
};

/// Active backend. First call picks AVX2 when the CPU supports it, unless the
/// ESTAN_KERNELS env var ("scalar", "avx2", "auto") says otherwise.
const KernelOps& ops();

/// Override the backend by name; "auto" re-runs detection. Throws ValueError
/// on an unknown name or an unsupported backend. Meant for tests.
void force_backend(const char* name);

bool avx2_supported();

namespace scalar {
extern const KernelOps kOps;
}
#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
extern const KernelOps kOps;
}
#endif

// Reference loops, any element type. The float specializations below route
// through the dispatched backend instead.
template <typename T>
inline void axpy(T* dst, const T* src, T a, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] += a * src[i];
}

template <typename T>
inline T dot(const T* a, const T* b, size_t n) {
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
inline void vadd(T* dst, const T* a, const T* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

template <typename T>
inline void relu_fwd(T* dst, const T* src, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
}

template <typename T>
inline void relu_bwd(T* dst, const T* act, const T* go, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = act[i] > T(0) ? go[i] : T(0);
}

template <>
inline void axpy<float>(float* dst, const float* src, float a, size_t n) {
    ops().axpy(dst, src, a, n);
}
template <>
inline float dot<float>(const float* a, const float* b, size_t n) {
    return ops().dot(a, b, n);
}
template <>
inline void vadd<float>(float* dst, const float* a, const float* b, size_t n) {
    ops().vadd(dst, a, b, n);
}
template <>
inline void relu_fwd<float>(float* dst, const float* src, size_t n) {
    ops().relu_fwd(dst, src, n);
}
template <>
inline void relu_bwd<float>(float* dst, const float* act, const float* go, size_t n) {
    ops().relu_bwd(dst, act, go, n);
}

}  // namespace estan::kernels
