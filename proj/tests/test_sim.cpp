#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "neuropinn/pipeline.hpp"
#include "neuropinn/sim.hpp"

using namespace neuropinn;

namespace {

ModelSpec decay_model() {  // dy/dt = -y
    ModelSpec spec;
    spec.id = "decay-test";
    spec.state_names = {"y"};
    spec.field = [](std::span<const double> x, const ModelParams&, std::span<double> dx) {
        dx[0] = -x[0];
    };
    return spec;
}

ModelSpec quadratic_growth() {  // dy/dt = y^2
    ModelSpec spec;
    spec.id = "blowup-test";
    spec.state_names = {"y"};
    spec.field = [](std::span<const double> x, const ModelParams&, std::span<double> dx) {
        dx[0] = x[0] * x[0];
    };
    return spec;
}

double heun_max_error(double dt) {
    const ModelSpec spec = decay_model();
    const ModelParams p;
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    const auto n = static_cast<std::size_t>(std::llround(1.0 / dt));
    const Trajectory traj = integrate(spec, p, y0, dt, n);
    double worst = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
        worst = std::max(worst, std::abs(traj.states(static_cast<Eigen::Index>(i), 0) -
                                         std::exp(-traj.time(i))));
    return worst;
}

}  // namespace

TEST_CASE("one Heun step by hand") {
    const Trajectory traj = integrate(decay_model(), ModelParams{}, Eigen::VectorXd::Ones(1), 0.1, 1);
    REQUIRE(traj.rows() == 2);
    // x* = 1 - 0.1, x1 = 1 + 0.05*(-1 - 0.9)
    CHECK(traj.states(1, 0) == Catch::Approx(0.905).margin(1e-15));
}

TEST_CASE("SML spiking window has 2001 rows") {
    const ModelSpec spec = make_model("sml");
    const ModelParams p = preset_params(spec, "hopf");
    const Trajectory traj = integrate(spec, p, initial_state(spec, p), 0.1, 2000);
    CHECK(traj.rows() == 2001);
    CHECK(traj.time(traj.rows() - 1) == Catch::Approx(200.0));
}

TEST_CASE("Heun global error scales as dt^2") {
    double prev = heun_max_error(0.1);
    for (int k = 0; k < 2; ++k) {
        const double cur = heun_max_error(0.1 / std::pow(2.0, k + 1));
        const double ratio = prev / cur;
        CHECK(ratio > 3.4);
        CHECK(ratio < 4.6);
        prev = cur;
    }
}

TEST_CASE("integration blow-up reports the step index") {
    try {
        integrate(quadratic_growth(), ModelParams{}, Eigen::VectorXd::Ones(1), 1.0, 100);
        FAIL("expected IntegrationBlowup");
    } catch (const IntegrationBlowup& e) {
        CHECK(e.step_index > 0);
        CHECK(e.step_index < 100);
    }
}

TEST_CASE("downsample keeps every stride-th row") {
    Trajectory traj;
    traj.dt = 0.01;
    traj.state_names = {"y"};
    traj.states.resize(11, 1);
    for (int i = 0; i < 11; ++i) traj.states(i, 0) = i;
    const Trajectory ds = downsample(traj, 5);
    REQUIRE(ds.rows() == 3);
    CHECK(ds.states(0, 0) == 0);
    CHECK(ds.states(1, 0) == 5);
    CHECK(ds.states(2, 0) == 10);
    CHECK(ds.dt == Catch::Approx(0.05));

    const Trajectory same = downsample(traj, 1);
    CHECK(same.rows() == traj.rows());
}

TEST_CASE("pBC observation grid has 60001 rows after stride 10") {
    // index arithmetic only; the full simulation runs in the acceptance suite
    Trajectory traj;
    traj.dt = 0.01;
    traj.state_names = {"y"};
    traj.states = Eigen::MatrixXd::Zero(600001, 1);
    CHECK(downsample(traj, 10).rows() == 60001);
}

TEST_CASE("zero noise level is the identity") {
    TimeSeries s;
    s.dt = 0.1;
    s.values = Eigen::VectorXd::LinSpaced(100, -60.0, 40.0);
    const TimeSeries out = add_noise(s, {NoiseSpec::Kind::Relative, 0.0, 99});
    CHECK((out.values - s.values).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("relative noise matches the requested scale") {
    const ModelSpec spec = make_model("bml");
    const ModelParams p = preset_params(spec, "square-wave");
    const Trajectory traj = integrate(spec, p, initial_state(spec, p), 0.1, 20000);
    const TimeSeries clean = traj.column(0);
    const double sigma = population_std(clean.values);

    const TimeSeries noisy = add_noise(clean, {NoiseSpec::Kind::Relative, 0.05, 7});
    const Eigen::VectorXd diff = noisy.values - clean.values;
    const double sd = std::sqrt(diff.squaredNorm() / diff.size());
    CHECK(sd == Catch::Approx(0.05 * sigma).epsilon(0.05));

    const TimeSeries again = add_noise(clean, {NoiseSpec::Kind::Relative, 0.05, 7});
    CHECK((again.values - noisy.values).lpNorm<Eigen::Infinity>() == 0.0);  // bitwise
}

TEST_CASE("absolute noise scales with the window mean") {
    TimeSeries s;
    s.dt = 0.1;
    s.values = Eigen::VectorXd::Constant(20001, -50.0).array() +
               Eigen::VectorXd::LinSpaced(20001, 0.0, 8.0).array();
    const double mean = s.values.mean();
    const TimeSeries noisy = add_noise(s, {NoiseSpec::Kind::Absolute, 0.03, 21});
    const Eigen::VectorXd diff = noisy.values - s.values;
    const double sd = std::sqrt(diff.squaredNorm() / diff.size());
    CHECK(sd == Catch::Approx(0.03 * std::abs(mean)).epsilon(0.05));
}

TEST_CASE("all three SML regimes oscillate at table parameters") {
    const ModelSpec spec = make_model("sml");
    for (const auto* regime : {"hopf", "snic", "homoclinic"}) {
        const RegimeSetup setup = regime_setup(spec, regime);
        const Trajectory traj = integrate(spec, setup.params, setup.x0, 0.1, 2000);
        const auto n = static_cast<Eigen::Index>(traj.rows());
        const auto tail = traj.states.col(0).segment(n / 2, n - n / 2);
        INFO(regime);
        CHECK(tail.maxCoeff() - tail.minCoeff() > 30.0);
        CHECK(tail.maxCoeff() < 60.0);
        CHECK(tail.minCoeff() > -100.0);
    }
}

TEST_CASE("trajectory CSV round-trips at full precision") {
    const ModelSpec spec = make_model("sml");
    const ModelParams p = preset_params(spec, "snic");
    const Trajectory traj = integrate(spec, p, initial_state(spec, p), 0.1, 500);
    const std::string path = "test_traj_roundtrip.csv";
    write_trajectory_csv(traj, path);
    const Trajectory back = read_trajectory_csv(path);
    REQUIRE(back.rows() == traj.rows());
    REQUIRE(back.state_names == traj.state_names);
    CHECK((back.states - traj.states).lpNorm<Eigen::Infinity>() == 0.0);
    std::remove(path.c_str());
}
