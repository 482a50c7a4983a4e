#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "estan/loss.hpp"
#include "oracles.hpp"

using estan::Tensor4;
using estan::loss::dice_loss;
using estan::loss::dice_loss_backward;

namespace {

Tensor4<double> constant(estan::Shape4 dims, double v) { return {dims, v}; }

}  // namespace

TEST_CASE("point values: perfect overlap scores zero, half-confidence a sixth") {
    const estan::Shape4 dims{1, 1, 2, 2};

    // perfect foreground prediction
    CHECK(dice_loss(constant(dims, 1.0), constant(dims, 1.0)) == 0.0);
    // both empty: the +1 smoothing keeps 1 - 1/1 = 0
    CHECK(dice_loss(constant(dims, 0.0), constant(dims, 0.0)) == 0.0);
    // p=0.5 everywhere, mask all ones, N=4:
    //   1 - (1 + 2*2)/(1 + 1 + 4) = 1 - 5/6 = 1/6
    CHECK(dice_loss(constant(dims, 0.5), constant(dims, 1.0)) ==
          doctest::Approx(1.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("gradient matches central differences in both normalizations") {
    for (bool per_image : {false, true}) {
        oracle::Lcg g(per_image ? 51 : 50);
        Tensor4<double> p({2, 1, 3, 4}, 0.0);
        oracle::fill_uniform(p, g, 0.05, 0.95);
        Tensor4<double> mask({2, 1, 3, 4}, 0.0);
        for (size_t i = 0; i < mask.size(); ++i)
            mask.data()[i] = g.unit() < 0.5 ? 1.0 : 0.0;

        auto f = [&] { return dice_loss(p, mask, per_image); };
        const auto gp = dice_loss_backward(p, mask, per_image);
        for (size_t i = 0; i < p.size(); ++i) {
            CAPTURE(per_image);
            CAPTURE(i);
            CHECK(oracle::rel_err(gp.data()[i], oracle::fd(f, p.data()[i])) <= 1e-4);
        }
    }
}

TEST_CASE("per-image mode is the mean of single-image losses") {
    oracle::Lcg g(60);
    Tensor4<double> p({3, 1, 4, 4}, 0.0);
    oracle::fill_uniform(p, g, 0.0, 1.0);
    Tensor4<double> mask({3, 1, 4, 4}, 0.0);
    for (size_t i = 0; i < mask.size(); ++i)
        mask.data()[i] = g.unit() < 0.5 ? 1.0 : 0.0;

    double mean = 0.0;
    for (int n = 0; n < 3; ++n) {
        Tensor4<double> pn({1, 1, 4, 4}, 0.0), mn({1, 1, 4, 4}, 0.0);
        for (int i = 0; i < 16; ++i) {
            pn.data()[i] = p.data()[n * 16 + i];
            mn.data()[i] = mask.data()[n * 16 + i];
        }
        mean += dice_loss(pn, mn);
    }
    mean /= 3.0;
    CHECK(dice_loss(p, mask, true) == doctest::Approx(mean).epsilon(1e-12));

    // batch of one: the two normalizations coincide
    Tensor4<double> p1({1, 1, 4, 4}, 0.3), m1({1, 1, 4, 4}, 1.0);
    CHECK(dice_loss(p1, m1, false) == dice_loss(p1, m1, true));
}

TEST_CASE("per-image gradient carries the 1/n batch factor") {
    Tensor4<double> p1({1, 1, 2, 2}, 0.0), m1({1, 1, 2, 2}, 0.0);
    oracle::Lcg g(61);
    oracle::fill_uniform(p1, g, 0.1, 0.9);
    m1.data()[0] = 1.0;
    m1.data()[3] = 1.0;

    // duplicate the image into a batch of two
    Tensor4<double> p2({2, 1, 2, 2}, 0.0), m2({2, 1, 2, 2}, 0.0);
    for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 4; ++i) {
            p2.data()[n * 4 + i] = p1.data()[i];
            m2.data()[n * 4 + i] = m1.data()[i];
        }

    const auto g1 = dice_loss_backward(p1, m1, true);
    const auto g2 = dice_loss_backward(p2, m2, true);
    for (int i = 0; i < 4; ++i) {
        CHECK(g2.data()[i] == doctest::Approx(g1.data()[i] / 2.0).epsilon(1e-12));
        CHECK(g2.data()[4 + i] == doctest::Approx(g1.data()[i] / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("zero exactly on the sixteen binary 2x2 grids iff prediction == mask") {
    for (int pm = 0; pm < 16; ++pm)
        for (int gm = 0; gm < 16; ++gm) {
            Tensor4<double> p({1, 1, 2, 2}, 0.0), m({1, 1, 2, 2}, 0.0);
            for (int i = 0; i < 4; ++i) {
                p.data()[i] = (pm >> i) & 1;
                m.data()[i] = (gm >> i) & 1;
            }
            const double l = dice_loss(p, m);
            CAPTURE(pm);
            CAPTURE(gm);
            CHECK(l >= 0.0);
            CHECK(l < 1.0);
            if (pm == gm)
                CHECK(l == 0.0);
            else
                CHECK(l > 0.0);
        }
}

TEST_CASE("loss is invariant under a shared pixel permutation") {
    oracle::Lcg g(62);
    const int n = 24;
    std::vector<double> pv(n), mv(n);
    for (int i = 0; i < n; ++i) {
        pv[i] = g.range(0.0, 1.0);
        mv[i] = g.unit() < 0.5 ? 1.0 : 0.0;
    }
    Tensor4<double> p({1, 1, 4, 6}, 0.0), m({1, 1, 4, 6}, 0.0);
    std::copy(pv.begin(), pv.end(), p.data());
    std::copy(mv.begin(), mv.end(), m.data());
    const double base = dice_loss(p, m);

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n; i > 1; --i) std::swap(perm[i - 1], perm[g.next() % i]);
    for (int i = 0; i < n; ++i) {
        p.data()[i] = pv[perm[i]];
        m.data()[i] = mv[perm[i]];
    }
    CHECK(dice_loss(p, m) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("input validation: shapes, probability range, binary masks") {
    Tensor4<double> p({1, 1, 2, 2}, 0.5), m({1, 1, 2, 2}, 1.0);
    CHECK_THROWS_AS(dice_loss(p, Tensor4<double>({1, 1, 2, 3}, 1.0)),
                    estan::ShapeError);

    Tensor4<double> bad_p = p;
    bad_p.data()[2] = 1.5;
    CHECK_THROWS_AS(dice_loss(bad_p, m), estan::ValueError);
    bad_p.data()[2] = -0.1;
    CHECK_THROWS_AS(dice_loss(bad_p, m), estan::ValueError);

    Tensor4<double> bad_m = m;
    bad_m.data()[3] = 0.75;
    try {
        dice_loss(p, bad_m);
        FAIL("expected a ValueError for a non-binary mask");
    } catch (const estan::ValueError& e) {
        CHECK(std::string(e.what()).find("flat index 3") != std::string::npos);
    }

    CHECK_THROWS_AS(dice_loss_backward(bad_p, m), estan::ValueError);
}
