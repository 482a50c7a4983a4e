#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "estan/error.hpp"
#include "estan/rng.hpp"

// Finite checks walk every element after an operation; on by default except
// in release builds, where only the training loop keeps its loss check.
#ifndef ESTAN_FINITE_CHECKS
#ifdef NDEBUG
#define ESTAN_FINITE_CHECKS 0
#else
#define ESTAN_FINITE_CHECKS 1
#endif
#endif

namespace estan {

struct Shape4 {
    int n = 0, c = 0, h = 0, w = 0;

    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// Dense rank-4 array, NCHW, row-major with w contiguous.
template <typename T>
class Tensor4 {
public:
    Tensor4() = default;

    Tensor4(Shape4 dims, T fill) : dims_(dims) {
        validate_dims(dims);
        data_.assign(element_count(dims), fill);
    }

    static Tensor4 zeros(Shape4 dims) { return Tensor4(dims, T(0)); }

    const Shape4& dims() const { return dims_; }
    int n() const { return dims_.n; }
    int c() const { return dims_.c; }
    int h() const { return dims_.h; }
    int w() const { return dims_.w; }

    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<size_t>(in) * dims_.c + ic) * dims_.h + iy) * dims_.w + ix;
    }

    T& at(int in, int ic, int iy, int ix) { return data_[index(in, ic, iy, ix)]; }
    T at(int in, int ic, int iy, int ix) const { return data_[index(in, ic, iy, ix)]; }

    T* row(int in, int ic, int iy) { return data_.data() + index(in, ic, iy, 0); }
    const T* row(int in, int ic, int iy) const { return data_.data() + index(in, ic, iy, 0); }

    /// Start of one (n,c) plane, h*w contiguous elements.
    T* plane(int in, int ic) { return data_.data() + index(in, ic, 0, 0); }
    const T* plane(int in, int ic) const { return data_.data() + index(in, ic, 0, 0); }

    bool operator==(const Tensor4&) const = default;

    static void validate_dims(Shape4 d) {
        if (d.n < 1 || d.c < 1 || d.h < 1 || d.w < 1)
            throw ShapeError("tensor dims must all be >= 1, got " + d.str());
        // overflow guard on n*c*h*w
        const uint64_t limit = uint64_t(1) << 40;
        uint64_t total = uint64_t(d.n) * uint64_t(d.c);
        total *= uint64_t(d.h);
        total *= uint64_t(d.w);
        if (uint64_t(d.n) > limit || uint64_t(d.n) * d.c > limit ||
            uint64_t(d.n) * d.c * d.h > limit || total > limit)
            throw ShapeError("tensor dims overflow addressable budget: " + d.str());
    }

    static size_t element_count(Shape4 d) {
        return size_t(d.n) * size_t(d.c) * size_t(d.h) * size_t(d.w);
    }

private:
    Shape4 dims_{};
    std::vector<T> data_;
};

template <typename T>
Tensor4<T> tensor_new(Shape4 dims, T fill) {
    return Tensor4<T>(dims, fill);
}

template <typename T>
void check_finite(const Tensor4<T>& t, const char* where) {
#if ESTAN_FINITE_CHECKS
    for (size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t.data()[i]))
            throw NumericError(std::string("non-finite value in ") + where);
    }
#else
    (void)t;
    (void)where;
#endif
}

template <typename T>
[[nodiscard]] Tensor4<T> elementwise_add(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (a.dims() != b.dims())
        throw ShapeError("elementwise_add shape mismatch: " + a.dims().str() +
                         " vs " + b.dims().str());
    Tensor4<T> out = a;
    T* d = out.data();
    const T* s = b.data();
    for (size_t i = 0; i < out.size(); ++i) d[i] += s[i];
    check_finite(out, "elementwise_add");
    return out;
}

/// In-place accumulate: dst += src. The allocation-free sibling of
/// elementwise_add for gradient and branch merging on the hot path.
template <typename T>
void add_into(Tensor4<T>& dst, const Tensor4<T>& src) {
    if (dst.dims() != src.dims())
        throw ShapeError("add_into shape mismatch: " + dst.dims().str() +
                         " vs " + src.dims().str());
    T* d = dst.data();
    const T* s = src.data();
    for (size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
    check_finite(dst, "add_into");
}

/// Zero-mean normal draws with variance 2/fan_in. Draw order is flat
/// row-major, one deviate per element, so equal seeds replay exactly.
template <typename T>
Tensor4<T> he_normal_init(Shape4 dims, int fan_in, SeededRng& rng) {
    if (fan_in < 1) throw ValueError("he_normal_init: fan_in must be >= 1");
    Tensor4<T> out(dims, T(0));
    const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    T* d = out.data();
    for (size_t i = 0; i < out.size(); ++i)
        d[i] = static_cast<T>(sigma * rng.next_normal());
    return out;
}

}  // namespace estan
