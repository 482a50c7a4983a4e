#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "estan/error.hpp"
#include "estan/kernels.hpp"
#include "oracles.hpp"

using estan::kernels::KernelOps;

namespace {

// Sizes straddling the SIMD width: empty, sub-lane, exact lanes, remainders.
const std::vector<size_t> kSizes = {0, 1, 2, 3, 7, 8, 9, 15, 16, 17, 31, 32, 33, 67};

std::vector<float> random_floats(size_t n, uint64_t seed, float lo, float hi) {
    oracle::Lcg g(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(g.range(lo, hi));
    return v;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * 4) == 0);
}

}  // namespace

TEST_CASE("backend dispatch and overrides") {
    estan::kernels::force_backend("scalar");
    CHECK(std::string(estan::kernels::ops().name) == "scalar");

    if (estan::kernels::avx2_supported()) {
        estan::kernels::force_backend("avx2");
        CHECK(std::string(estan::kernels::ops().name) == "avx2");
    }

    estan::kernels::force_backend("auto");
    const std::string picked = estan::kernels::ops().name;
    CHECK((picked == "scalar" || picked == "avx2"));
    if (estan::kernels::avx2_supported()) CHECK(picked == "avx2");

    CHECK_THROWS_AS(estan::kernels::force_backend("neon"), estan::ValueError);
    estan::kernels::force_backend("scalar");
}

TEST_CASE("AVX2 lanes match the scalar reference bitwise (dot at tolerance)") {
    if (!estan::kernels::avx2_supported()) {
        MESSAGE("AVX2 unavailable on this machine; dispatch equivalence skipped");
        return;
    }
    const KernelOps& s = estan::kernels::scalar::kOps;
    const KernelOps& v = estan::kernels::avx2::kOps;

    for (size_t n : kSizes) {
        CAPTURE(n);
        const auto x = random_floats(n, 100 + n, -3.0f, 3.0f);
        const auto y0 = random_floats(n, 200 + n, -3.0f, 3.0f);

        {
            auto a = y0, b = y0;
            s.axpy(a.data(), x.data(), 1.37f, n);
            v.axpy(b.data(), x.data(), 1.37f, n);
            CHECK(bitwise_equal(a, b));
        }
        {
            std::vector<float> a(n, -1.0f), b(n, -1.0f);
            s.vadd(a.data(), x.data(), y0.data(), n);
            v.vadd(b.data(), x.data(), y0.data(), n);
            CHECK(bitwise_equal(a, b));
        }
        {
            std::vector<float> a(n, -1.0f), b(n, -1.0f);
            s.relu_fwd(a.data(), x.data(), n);
            v.relu_fwd(b.data(), x.data(), n);
            CHECK(bitwise_equal(a, b));
        }
        {
            std::vector<float> a(n, -1.0f), b(n, -1.0f);
            s.relu_bwd(a.data(), x.data(), y0.data(), n);
            v.relu_bwd(b.data(), x.data(), y0.data(), n);
            CHECK(bitwise_equal(a, b));
        }
        {
            // one Adam step, c1/c2 for t=1
            const float lr = 1e-3f, b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
            const float c1 = 1.0f / (1.0f - b1), c2 = 1.0f / (1.0f - b2);
            auto ps = x, pv = x;
            auto ms = random_floats(n, 300 + n, -0.1f, 0.1f), mv = ms;
            auto vs = random_floats(n, 400 + n, 0.0f, 0.1f), vv = vs;
            const auto g = random_floats(n, 500 + n, -1.0f, 1.0f);
            s.adam(ps.data(), ms.data(), vs.data(), g.data(), n, lr, b1, b2, eps, c1, c2);
            v.adam(pv.data(), mv.data(), vv.data(), g.data(), n, lr, b1, b2, eps, c1, c2);
            CHECK(bitwise_equal(ps, pv));
            CHECK(bitwise_equal(ms, mv));
            CHECK(bitwise_equal(vs, vv));
        }
        {
            const float ds = s.dot(x.data(), y0.data(), n);
            const float dv = v.dot(x.data(), y0.data(), n);
            // SIMD reorders the reduction; compare against a double-precision
            // reference instead of each other.
            double ref = 0.0;
            for (size_t i = 0; i < n; ++i)
                ref += static_cast<double>(x[i]) * static_cast<double>(y0[i]);
            const double scale = std::max(1.0, std::abs(ref));
            CHECK(std::abs(ds - ref) / scale < 1e-5);
            CHECK(std::abs(dv - ref) / scale < 1e-5);
        }
    }
}

TEST_CASE("scalar kernel semantics") {
    const KernelOps& s = estan::kernels::scalar::kOps;

    float dst[3] = {1.0f, 2.0f, 3.0f};
    const float src[3] = {10.0f, 20.0f, 30.0f};
    s.axpy(dst, src, 0.5f, 3);
    CHECK(dst[0] == 6.0f);
    CHECK(dst[1] == 12.0f);
    CHECK(dst[2] == 18.0f);

    float sum[3];
    s.vadd(sum, dst, src, 3);
    CHECK(sum[2] == 48.0f);

    const float pre[4] = {-1.0f, 0.0f, 2.0f, -0.0f};
    float post[4];
    s.relu_fwd(post, pre, 4);
    CHECK(post[0] == 0.0f);
    CHECK(post[1] == 0.0f);
    CHECK(post[2] == 2.0f);
    CHECK(post[3] == 0.0f);

    const float go[4] = {5.0f, 6.0f, 7.0f, 8.0f};
    float gx[4];
    s.relu_bwd(gx, pre, go, 4);
    CHECK(gx[0] == 0.0f);
    CHECK(gx[1] == 0.0f);
    CHECK(gx[2] == 7.0f);
    CHECK(gx[3] == 0.0f);

    CHECK(s.dot(dst, src, 3) == doctest::Approx(6 * 10 + 12 * 20 + 18 * 30));
}

TEST_CASE("kernel-level Adam reproduces the worked single-step example") {
    // p=1, g=0.5, lr=0.1, fresh moments, t=1:
    //   m = 0.1*0.5 = 0.05, v = 0.001*0.25 = 2.5e-4,
    //   mhat = 0.5, vhat = 0.25, p' = 1 - 0.1*0.5/(0.5+eps) ~= 0.9
    const KernelOps& s = estan::kernels::scalar::kOps;
    float p = 1.0f, m = 0.0f, v = 0.0f;
    const float g = 0.5f;
    const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
    const float c1 = 1.0f / (1.0f - b1), c2 = 1.0f / (1.0f - b2);
    s.adam(&p, &m, &v, &g, 1, 0.1f, b1, b2, eps, c1, c2);
    CHECK(m == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(v == doctest::Approx(2.5e-4).epsilon(1e-6));
    CHECK(p == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("generic template kernels agree with the float path") {
    estan::kernels::force_backend("scalar");
    const size_t n = 19;
    const auto xf = random_floats(n, 7, -2.0f, 2.0f);
    const auto yf = random_floats(n, 8, -2.0f, 2.0f);
    std::vector<double> xd(xf.begin(), xf.end()), yd(yf.begin(), yf.end());

    auto dstf = yf;
    estan::kernels::axpy(dstf.data(), xf.data(), 0.25f, n);
    auto dstd = yd;
    estan::kernels::axpy(dstd.data(), xd.data(), 0.25, n);
    for (size_t i = 0; i < n; ++i)
        CHECK(dstf[i] == doctest::Approx(dstd[i]).epsilon(1e-6));

    CHECK(estan::kernels::dot(xf.data(), yf.data(), n) ==
          doctest::Approx(estan::kernels::dot(xd.data(), yd.data(), n)).epsilon(1e-5));
    estan::kernels::force_backend("auto");
}
