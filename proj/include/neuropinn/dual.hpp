#pragma once

// Forward-mode scalar carrying N simultaneous tangents. Used to get exact
// partials of the model vector fields with respect to states and estimated
// parameters in a single evaluation.

#include <array>
#include <cmath>
#include <cstddef>

namespace neuropinn {

template <std::size_t N>
struct Dual {
    double v = 0.0;
    std::array<double, N> d{};

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit by design

    static Dual seeded(double value, std::size_t slot) {
        Dual r(value);
        r.d[slot] = 1.0;
        return r;
    }

    Dual operator-() const {
        Dual r(-v);
        for (std::size_t i = 0; i < N; ++i) r.d[i] = -d[i];
        return r;
    }
    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        for (std::size_t i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    Dual& operator/=(const Dual& o) {
        const double inv = 1.0 / o.v;
        v *= inv;
        for (std::size_t i = 0; i < N; ++i) d[i] = (d[i] - v * o.d[i]) * inv;
        return *this;
    }

    friend Dual operator+(Dual a, const Dual& b) { return a += b; }
    friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
    friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
    friend Dual operator/(Dual a, const Dual& b) { return a /= b; }
};

template <std::size_t N>
Dual<N> exp(const Dual<N>& x) {
    Dual<N> r(std::exp(x.v));
    for (std::size_t i = 0; i < N; ++i) r.d[i] = r.v * x.d[i];
    return r;
}

template <std::size_t N>
Dual<N> log(const Dual<N>& x) {
    Dual<N> r(std::log(x.v));
    const double inv = 1.0 / x.v;
    for (std::size_t i = 0; i < N; ++i) r.d[i] = inv * x.d[i];
    return r;
}

template <std::size_t N>
Dual<N> tanh(const Dual<N>& x) {
    Dual<N> r(std::tanh(x.v));
    const double sech2 = 1.0 - r.v * r.v;
    for (std::size_t i = 0; i < N; ++i) r.d[i] = sech2 * x.d[i];
    return r;
}

template <std::size_t N>
Dual<N> cosh(const Dual<N>& x) {
    Dual<N> r(std::cosh(x.v));
    const double s = std::sinh(x.v);
    for (std::size_t i = 0; i < N; ++i) r.d[i] = s * x.d[i];
    return r;
}

template <std::size_t N>
Dual<N> pow4(const Dual<N>& x) {
    const double x2 = x.v * x.v;
    Dual<N> r(x2 * x2);
    const double c = 4.0 * x2 * x.v;
    for (std::size_t i = 0; i < N; ++i) r.d[i] = c * x.d[i];
    return r;
}

template <std::size_t N>
Dual<N> pow3(const Dual<N>& x) {
    Dual<N> r(x.v * x.v * x.v);
    const double c = 3.0 * x.v * x.v;
    for (std::size_t i = 0; i < N; ++i) r.d[i] = c * x.d[i];
    return r;
}

// Plain-double fallbacks so model templates can be instantiated with double.
inline double pow4(double x) { return (x * x) * (x * x); }
inline double pow3(double x) { return x * x * x; }

}  // namespace neuropinn
