#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "neuropinn/optim.hpp"

using namespace neuropinn;

TEST_CASE("first Adam step has magnitude close to the learning rate") {
    AdamState st(1);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd g(1);
    g << 3.0;
    adam_step(st, x, g, 1e-2);
    CHECK(x[0] == Catch::Approx(-1e-2).epsilon(1e-6));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    AdamState st(4);
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0);
    const Eigen::VectorXd before = x;
    adam_step(st, x, Eigen::VectorXd::Zero(4), 1e-2);
    CHECK((x - before).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("Adam minimizes a scalar quadratic") {
    AdamState st(1);
    Eigen::VectorXd x(1);
    x << 1.0;
    for (int i = 0; i < 1000; ++i) {
        Eigen::VectorXd g(1);
        g << 2.0 * x[0];
        adam_step(st, x, g, 1e-2);
    }
    CHECK(std::abs(x[0]) < 0.1);
}

TEST_CASE("staircase schedule halves at the decay boundary") {
    const LrSchedule s{1e-3, 0.5, 10000};
    CHECK(s.at(0) == 1e-3);
    CHECK(s.at(9999) == 1e-3);
    CHECK(s.at(10000) == 5e-4);
    CHECK(s.at(29999) == 2.5e-4);
    const LrSchedule c = LrSchedule::constant(1e-4);
    CHECK(c.at(0) == 1e-4);
    CHECK(c.at(1000000) == 1e-4);
}

TEST_CASE("adam_step validates shapes") {
    AdamState st(2);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(adam_step(st, x, Eigen::VectorXd::Zero(3), 1e-3), ContractViolation);
}
