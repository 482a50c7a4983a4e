// AVX2 backend. Built with -mavx2 -mno-fma: mul+add keeps the same two
// roundings as the scalar reference, so every kernel here except dot is
// bitwise-identical to it lane by lane. dot keeps one vector accumulator and
// folds it at the end, which reorders the reduction.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#include "estan/kernels.hpp"

namespace estan::kernels::avx2 {

namespace {

void axpy_impl(float* dst, const float* src, float a, size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 s = _mm256_loadu_ps(src + i);
        const __m256 d = _mm256_loadu_ps(dst + i);
        _mm256_storeu_ps(dst + i, _mm256_add_ps(d, _mm256_mul_ps(va, s)));
    }
    for (; i < n; ++i) dst[i] += a * src[i];
}

void vadd_impl(float* dst, const float* a, const float* b, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                                _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

float horizontal_sum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    const __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_movehdup_ps(lo));
    return _mm_cvtss_f32(lo);
}

float dot_impl(const float* a, const float* b, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                               _mm256_loadu_ps(b + i)));
    }
    float sum = horizontal_sum(acc);
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void relu_fwd_impl(float* dst, const float* src, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(dst + i, _mm256_max_ps(_mm256_loadu_ps(src + i), zero));
    }
    for (; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
}

void relu_bwd_impl(float* dst, const float* act, const float* go, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(act + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(dst + i, _mm256_and_ps(mask, _mm256_loadu_ps(go + i)));
    }
    for (; i < n; ++i) dst[i] = act[i] > 0.0f ? go[i] : 0.0f;
}

void adam_impl(float* p, float* m, float* v, const float* g, size_t n,
               float lr, float b1, float b2, float eps, float c1, float c2) {
    const __m256 vb1 = _mm256_set1_ps(b1);
    const __m256 vomb1 = _mm256_set1_ps(1.0f - b1);
    const __m256 vb2 = _mm256_set1_ps(b2);
    const __m256 vomb2 = _mm256_set1_ps(1.0f - b2);
    const __m256 vlr = _mm256_set1_ps(lr);
    const __m256 veps = _mm256_set1_ps(eps);
    const __m256 vc1 = _mm256_set1_ps(c1);
    const __m256 vc2 = _mm256_set1_ps(c2);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 vg = _mm256_loadu_ps(g + i);
        __m256 vm = _mm256_loadu_ps(m + i);
        __m256 vv = _mm256_loadu_ps(v + i);
        vm = _mm256_add_ps(_mm256_mul_ps(vb1, vm), _mm256_mul_ps(vomb1, vg));
        const __m256 gg = _mm256_mul_ps(vg, vg);
        vv = _mm256_add_ps(_mm256_mul_ps(vb2, vv), _mm256_mul_ps(vomb2, gg));
        _mm256_storeu_ps(m + i, vm);
        _mm256_storeu_ps(v + i, vv);
        const __m256 mhat = _mm256_mul_ps(vm, vc1);
        const __m256 vhat = _mm256_mul_ps(vv, vc2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
        const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
    }
    for (; i < n; ++i) {
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
    "avx2",
};

}  // namespace estan::kernels::avx2

#endif  // x86_64
