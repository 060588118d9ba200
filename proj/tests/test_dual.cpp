#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "neuropinn/dual.hpp"

using neuropinn::Dual;

namespace {

// f(a, b) = tanh(a*b) / cosh(a) + exp(-b) * log(a) + a^3 - b^4
template <class T>
T composite(const T& a, const T& b) {
    using std::exp;
    using std::log;
    using std::tanh;
    using std::cosh;
    using neuropinn::pow3;
    using neuropinn::pow4;
    return tanh(a * b) / cosh(a) + exp(-b) * log(a) + pow3(a) - pow4(b);
}

}  // namespace

TEST_CASE("dual partials match central differences") {
    const double a0 = 1.37, b0 = 0.61, h = 1e-6;
    auto d = composite(Dual<2>::seeded(a0, 0), Dual<2>::seeded(b0, 1));
    CHECK(d.v == Catch::Approx(composite(a0, b0)).epsilon(1e-14));
    const double da = (composite(a0 + h, b0) - composite(a0 - h, b0)) / (2 * h);
    const double db = (composite(a0, b0 + h) - composite(a0, b0 - h)) / (2 * h);
    CHECK(d.d[0] == Catch::Approx(da).epsilon(1e-8));
    CHECK(d.d[1] == Catch::Approx(db).epsilon(1e-8));
}

TEST_CASE("division and unary minus propagate tangents") {
    auto x = Dual<1>::seeded(2.0, 0);
    auto y = (-x) / (x * x + Dual<1>(1.0));
    // d/dx of -x/(x^2+1) = (x^2-1)/(x^2+1)^2
    CHECK(y.v == Catch::Approx(-0.4));
    CHECK(y.d[0] == Catch::Approx(3.0 / 25.0));
}

TEST_CASE("seeded slots are independent") {
    auto a = Dual<3>::seeded(1.0, 0);
    auto b = Dual<3>::seeded(2.0, 2);
    auto c = a * b;
    CHECK(c.d[0] == 2.0);
    CHECK(c.d[1] == 0.0);
    CHECK(c.d[2] == 1.0);
}
