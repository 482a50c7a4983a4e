#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>

#include "doctest.h"
#include "estan/tensor.hpp"

using estan::Shape4;
using estan::Tensor4;

TEST_CASE("shape equality and printing") {
    const Shape4 a{1, 2, 3, 4};
    CHECK(a == Shape4{1, 2, 3, 4});
    CHECK(a != Shape4{1, 2, 4, 3});
    CHECK(a.str() == "(1,2,3,4)");
}

TEST_CASE("construction zero-fills and indexing is row-major NCHW") {
    Tensor4<float> t({2, 3, 4, 5}, 0.0f);
    CHECK(t.size() == 120);
    for (size_t i = 0; i < t.size(); ++i) CHECK(t.data()[i] == 0.0f);

    // index(n,c,h,w) = ((n*C + c)*H + h)*W + w, w contiguous
    CHECK(t.index(0, 0, 0, 0) == 0);
    CHECK(t.index(0, 0, 0, 1) == 1);
    CHECK(t.index(0, 0, 1, 0) == 5);
    CHECK(t.index(0, 1, 0, 0) == 20);
    CHECK(t.index(1, 0, 0, 0) == 60);
    CHECK(t.index(1, 2, 3, 4) == 119);

    t.at(1, 2, 3, 4) = 9.5f;
    CHECK(t.data()[119] == 9.5f);
    CHECK(t.row(1, 2, 3)[4] == 9.5f);
    CHECK(t.plane(1, 2)[3 * 5 + 4] == 9.5f);
}

TEST_CASE("invalid dims are rejected") {
    CHECK_THROWS_AS(Tensor4<float>({0, 1, 1, 1}, 0.0f), estan::ShapeError);
    CHECK_THROWS_AS(Tensor4<float>({1, -2, 1, 1}, 0.0f), estan::ShapeError);
    CHECK_THROWS_AS(Tensor4<float>({1 << 20, 1 << 20, 1 << 20, 1}, 0.0f),
                    estan::ShapeError);
}

TEST_CASE("equality is elementwise") {
    Tensor4<double> a({1, 2, 2, 2}, 1.0);
    Tensor4<double> b = a;
    CHECK(a == b);
    b.at(0, 1, 1, 1) = 2.0;
    CHECK(a != b);
    CHECK(a != Tensor4<double>({1, 2, 2, 1}, 1.0));
}

TEST_CASE("finite guard catches NaN and infinity") {
    Tensor4<float> t({1, 1, 2, 2}, 0.5f);
    CHECK_NOTHROW(estan::check_finite(t, "test"));
    t.at(0, 0, 1, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(estan::check_finite(t, "test"), estan::NumericError);
    t.at(0, 0, 1, 0) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(estan::check_finite(t, "test"), estan::NumericError);
}

TEST_CASE("elementwise_add") {
    Tensor4<float> a({1, 1, 1, 2}, 0.0f), b({1, 1, 1, 2}, 0.0f);
    a.at(0, 0, 0, 0) = 1.0f;
    a.at(0, 0, 0, 1) = 2.0f;
    b.at(0, 0, 0, 0) = 3.0f;
    b.at(0, 0, 0, 1) = 4.0f;

    const auto sum = estan::elementwise_add(a, b);
    CHECK(sum.at(0, 0, 0, 0) == 4.0f);
    CHECK(sum.at(0, 0, 0, 1) == 6.0f);

    CHECK_THROWS_AS(estan::elementwise_add(a, Tensor4<float>({1, 1, 2, 1}, 0.0f)),
                    estan::ShapeError);

    b.at(0, 0, 0, 0) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(estan::elementwise_add(a, b), estan::NumericError);
}

TEST_CASE("he-normal init statistics and determinism") {
    const int fan_in = 9;
    estan::SeededRng rng(5);
    const auto t = estan::he_normal_init<float>({8, 8, 40, 40}, fan_in, rng);
    const size_t n = t.size();

    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += t.data()[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = t.data()[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);

    const double want_var = 2.0 / fan_in;
    CHECK(std::abs(mean) < 0.01);
    CHECK(var == doctest::Approx(want_var).epsilon(0.03));

    // Irwin-Hall support is +-6 sigma
    const double bound = 6.0 * std::sqrt(want_var) + 1e-9;
    for (size_t i = 0; i < n; ++i) CHECK(std::abs(t.data()[i]) <= bound);

    estan::SeededRng rng2(5);
    CHECK(t == estan::he_normal_init<float>({8, 8, 40, 40}, fan_in, rng2));
    estan::SeededRng rng3(6);
    CHECK(t != estan::he_normal_init<float>({8, 8, 40, 40}, fan_in, rng3));

    estan::SeededRng rng4(5);
    CHECK_THROWS_AS(estan::he_normal_init<float>({1, 1, 1, 1}, 0, rng4),
                    estan::ValueError);
}
