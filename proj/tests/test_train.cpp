#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "neuropinn/pipeline.hpp"
#include "support.hpp"

using namespace neuropinn;

TEST_CASE("balance update: equal norms move weights toward the equation count") {
    BalanceState bs = BalanceState::init(3, 0.9, 1e-6, 1000);
    const Eigen::VectorXd norms = Eigen::VectorXd::Constant(3, 2.5);
    bs = update_balance(bs, norms);
    for (int j = 0; j < 3; ++j) CHECK(bs.weights[j] == Catch::Approx(1.2).epsilon(1e-9));
}

TEST_CASE("balance update: a vanishing gradient norm stays finite") {
    BalanceState bs = BalanceState::init(3, 0.9, 1e-6, 1000);
    Eigen::VectorXd norms(3);
    norms << 0.0, 1.0, 1.0;
    bs = update_balance(bs, norms);
    const double what0 = (2.0 + 3e-6) / 1e-6;
    CHECK(std::isfinite(bs.weights[0]));
    CHECK(bs.weights[0] == Catch::Approx(0.9 + 0.1 * what0).epsilon(1e-9));
}

TEST_CASE("balance update: alpha = 1 freezes the weights") {
    BalanceState bs = BalanceState::init(2, 1.0, 1e-6, 1000);
    Eigen::VectorXd norms(2);
    norms << 5.0, 0.01;
    bs = update_balance(bs, norms);
    CHECK(bs.weights[0] == 1.0);
    CHECK(bs.weights[1] == 1.0);
}

TEST_CASE("balance fixed point is reached geometrically") {
    BalanceState bs = BalanceState::init(3, 0.9, 1e-6, 1000);
    const Eigen::VectorXd norms = Eigen::VectorXd::Constant(3, 0.7);
    for (int k = 0; k < 200; ++k) bs = update_balance(bs, norms);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(bs.weights[j] - 3.0) < 1e-6);
}

TEST_CASE("error metrics") {
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(50, 1.0, 5.0);
    CHECK(normalized_l2(x, x) == 0.0);
    CHECK(normalized_l2(x, (2.0 * x).eval()) == Catch::Approx(1.0));
    CHECK_THROWS_AS(normalized_l2(Eigen::VectorXd::Zero(50), x), UndefinedMetric);
    CHECK(param_rel_error(4.0, 3.968) == Catch::Approx(0.008));
    CHECK_THROWS_AS(param_rel_error(0.0, 1.0), UndefinedMetric);
}

TEST_CASE("constrained parameters honor declared signs") {
    const ModelSpec spec = make_model("sml");
    ModelParams ones = spec.default_params();
    for (const auto& m : spec.param_meta)
        if (m.role == Role::Estimated) ones.set(m.name, m.sign == Sign::Negative ? -1.0 : 1.0);
    const ConstrainedParams cp = ConstrainedParams::from_values(spec, ones);
    const Eigen::VectorXd lam = cp.lambda();
    REQUIRE(cp.names.size() == 8);
    CHECK(lam[0] == 1.0);   // g_L
    CHECK(lam[4] == -1.0);  // V1
    CHECK((cp.z.array() == 0.0).all());

    const ConstrainedParams hp =
        ConstrainedParams::from_values(spec, preset_params(spec, "hopf"));
    const Eigen::VectorXd lam2 = hp.lambda();
    CHECK(lam2[3] == Catch::Approx(0.04).epsilon(1e-12));
    CHECK(lam2[4] == Catch::Approx(-1.2).epsilon(1e-12));

    ModelParams bad = preset_params(spec, "hopf");
    bad.set("V1", 0.3);  // declared negative
    CHECK_THROWS_AS(ConstrainedParams::from_values(spec, bad), ContractViolation);
}

TEST_CASE("pretraining fits constant observations to machine precision") {
    FourierEmbedding emb;
    emb.fixed_freqs.resize(2);
    emb.fixed_freqs << 0.1, 0.35;
    FourierNet net = init_network(emb, {}, OutputMap::Identity, {0.5, 0.1}, 3, 0);
    TimeSeries obs;
    obs.dt = 1.0;
    obs.values = Eigen::VectorXd::Constant(128, 0.5);
    Stage1Config cfg;
    cfg.iterations = 2000;
    cfg.batch_size = 64;
    cfg.schedule = {1e-2, 0.5, 700};
    const auto hist = pretrain_voltage(net, obs, cfg);
    CHECK(hist.back().total < 1e-6);
}

TEST_CASE("full-batch pretraining loss trends downward") {
    FourierEmbedding emb;
    emb.fixed_freqs.resize(1);
    emb.fixed_freqs << 2.0 * M_PI / 64.0;
    FourierNet net = init_network(emb, {12}, OutputMap::Identity, {0.5, 0.1}, 5, 0);
    TimeSeries obs;
    obs.dt = 1.0;
    obs.values.resize(64);
    for (int i = 0; i < 64; ++i) obs.values[i] = std::sin(2.0 * M_PI * i / 64.0) + 0.2;
    Stage1Config cfg;
    cfg.iterations = 1500;
    cfg.batch_size = 64;  // = N_u: full-batch
    cfg.log_every = 1;
    const auto hist = pretrain_voltage(net, obs, cfg);
    auto window_mean = [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += hist[i].total;
        return s / static_cast<double>(hi - lo);
    };
    const double early = window_mean(0, 100);
    const double mid = window_mean(700, 800);
    const double late = window_mean(1400, 1500);
    CHECK(mid < early);
    CHECK(late < mid);
}

TEST_CASE("pretraining on noisy SML voltage reaches the noise floor") {
    const ModelSpec spec = make_model("sml");
    const RegimeSetup setup = regime_setup(spec, "hopf");
    const auto d = pipeline_defaults("sml");
    const GeneratedData g =
        generate_observations(spec, setup, {NoiseSpec::Kind::Relative, 0.01, 1}, d);
    const auto sel = select_dominant_frequencies(power_spectrum(g.noisy_voltage), d.fft_p);
    NetBundle bundle = make_net_bundle(spec, sel, d.hidden_widths, {0.5, 0.1}, 7);
    Stage1Config cfg = d.stage1;
    cfg.iterations = 10000;
    const auto hist = pretrain_voltage(bundle.nets[0], g.noisy_voltage, cfg);
    const double floor = 0.01 * population_std(g.clean_voltage.values);
    // full-grid RMS misfit against the noisy observations
    const Eigen::MatrixXd rec = reconstruct_states(bundle, g.noisy_voltage);
    const double rms = std::sqrt((rec.col(0) - g.noisy_voltage.values).squaredNorm() /
                                 static_cast<double>(g.noisy_voltage.size()));
    CHECK(rms <= 2.0 * floor);
}

TEST_CASE("constant nets sit on the n-nullcline with zero n-residual") {
    const ModelSpec spec = make_model("sml");
    const ModelParams truth = preset_params(spec, "hopf");
    const double v0 = -31.0;
    const double n0 = 0.5 * (1.0 + std::tanh((v0 - truth.at("V3")) / truth.at("V4")));

    FourierEmbedding emb;
    emb.fixed_freqs.resize(1);
    emb.fixed_freqs << 0.2;
    NetBundle bundle;
    bundle.nets.emplace_back(emb, std::vector<Eigen::Index>{}, OutputMap::Identity);
    bundle.nets.emplace_back(emb, std::vector<Eigen::Index>{}, OutputMap::Sigmoid);
    bundle.trainable = {false, true};
    bundle.nets[0].params[bundle.nets[0].layers()[0].b_off] = v0;
    bundle.nets[1].params[bundle.nets[1].layers()[0].b_off] = std::log(n0 / (1.0 - n0));

    const ConstrainedParams cp = ConstrainedParams::from_values(spec, truth);
    Eigen::VectorXd t(3);
    t << 1.0, 2.0, 3.0;
    const auto res = residual_losses(bundle, spec, truth, cp, t, Eigen::VectorXd::Ones(2));
    CHECK(res.losses[1] < 1e-20);
    CHECK(res.losses[0] > 0.0);  // dV/dt = 0 but f_V != 0 away from equilibrium
}

TEST_CASE("residual gradients match finite differences") {
    const ModelSpec spec = make_model("sml");
    const ModelParams truth = preset_params(spec, "hopf");
    const auto sel_freqs = [] {
        Eigen::VectorXd f(2);
        f << 0.15, 0.4;
        return f;
    }();
    FourierEmbedding emb_v, emb_n;
    emb_v.fixed_freqs = sel_freqs;
    emb_n.fixed_freqs = sel_freqs;
    emb_n.n_trainable = 2;
    NetBundle bundle;
    bundle.nets.push_back(init_network(emb_v, {6}, OutputMap::Identity, {0.5, 0.1}, 21, 0));
    bundle.nets.push_back(init_network(emb_n, {6}, OutputMap::Sigmoid, {0.5, 0.1}, 21, 1, 0.15, 0.4));
    bundle.trainable = {true, true};  // exercise every gradient path
    // make the V-net produce voltage-scale output
    bundle.nets[0].params[bundle.nets[0].layers().back().b_off] = -30.0;

    ModelParams init = truth;
    init.set("g_K", 3.0);
    init.set("V1", -0.7);
    ConstrainedParams cp = ConstrainedParams::from_values(spec, init);

    Eigen::VectorXd t(5);
    t << 10.0, 30.0, 77.0, 120.0, 190.0;
    Eigen::VectorXd w(2);
    w << 1.3, 0.6;

    std::vector<Eigen::VectorXd> tg(2);
    tg[0] = Eigen::VectorXd::Zero(bundle.nets[0].n_params());
    tg[1] = Eigen::VectorXd::Zero(bundle.nets[1].n_params());
    Eigen::VectorXd zg = Eigen::VectorXd::Zero(cp.z.size());
    residual_losses(bundle, spec, truth, cp, t, w, &tg, &zg);

    auto weighted_loss = [&]() {
        return residual_losses(bundle, spec, truth, cp, t, w).weighted_total;
    };
    for (Eigen::Index j = 0; j < cp.z.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(cp.z[j]));
        const double orig = cp.z[j];
        cp.z[j] = orig + h;
        const double lp = weighted_loss();
        cp.z[j] = orig - h;
        const double lm = weighted_loss();
        cp.z[j] = orig;
        CHECK(zg[j] == Catch::Approx((lp - lm) / (2 * h)).epsilon(1e-5).margin(1e-9));
    }
    for (std::size_t k = 0; k < 2; ++k) {
        auto& net = bundle.nets[k];
        for (Eigen::Index i = 0; i < net.n_params(); i += 7) {  // sampled subset
            const double h = 1e-6 * std::max(1.0, std::abs(net.params[i]));
            const double orig = net.params[i];
            net.params[i] = orig + h;
            const double lp = weighted_loss();
            net.params[i] = orig - h;
            const double lm = weighted_loss();
            net.params[i] = orig;
            INFO("net " << k << " param " << i);
            CHECK(tg[k][i] == Catch::Approx((lp - lm) / (2 * h)).epsilon(2e-5).margin(1e-9));
        }
    }
}

TEST_CASE("residual-scaled gradients match finite differences") {
    const ModelSpec spec = make_model("sml");
    const ModelParams truth = preset_params(spec, "snic");
    FourierEmbedding emb_v, emb_n;
    emb_v.fixed_freqs.resize(2);
    emb_v.fixed_freqs << 0.2, 0.55;
    emb_n = emb_v;
    emb_n.n_trainable = 1;
    NetBundle bundle;
    bundle.nets.push_back(init_network(emb_v, {5}, OutputMap::Identity, {0.5, 0.1}, 41, 0));
    bundle.nets.push_back(init_network(emb_n, {5}, OutputMap::Sigmoid, {0.5, 0.1}, 41, 1, 0.2, 0.55));
    bundle.trainable = {false, true};
    bundle.nets[0].params[bundle.nets[0].layers().back().b_off] = -25.0;

    ModelParams init = truth;
    init.set("phi", 0.4);
    ConstrainedParams cp = ConstrainedParams::from_values(spec, init);
    Eigen::VectorXd t(4);
    t << 5.0, 21.0, 60.0, 140.0;
    Eigen::VectorXd w(2);
    w << 0.8, 1.7;

    ResidualEvaluator ev(spec, truth);
    ev.prepare(bundle, cp, t);
    std::vector<Eigen::VectorXd> tg(2);
    tg[0] = Eigen::VectorXd::Zero(bundle.nets[0].n_params());
    tg[1] = Eigen::VectorXd::Zero(bundle.nets[1].n_params());
    Eigen::VectorXd zg = Eigen::VectorXd::Zero(cp.z.size());
    ev.accumulate_gradients(bundle, cp, w, tg, zg, true);

    auto scaled_total = [&]() {
        ResidualEvaluator e2(spec, truth);
        e2.prepare(bundle, cp, t);
        return w.dot(e2.scaled_losses());
    };
    for (Eigen::Index j = 0; j < cp.z.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(cp.z[j]));
        const double orig = cp.z[j];
        cp.z[j] = orig + h;
        const double lp = scaled_total();
        cp.z[j] = orig - h;
        const double lm = scaled_total();
        cp.z[j] = orig;
        CHECK(zg[j] == Catch::Approx((lp - lm) / (2 * h)).epsilon(2e-5).margin(1e-9));
    }
    auto& net = bundle.nets[1];
    for (Eigen::Index i = 0; i < net.n_params(); i += 5) {
        const double h = 1e-6 * std::max(1.0, std::abs(net.params[i]));
        const double orig = net.params[i];
        net.params[i] = orig + h;
        const double lp = scaled_total();
        net.params[i] = orig - h;
        const double lm = scaled_total();
        net.params[i] = orig;
        INFO("param " << i);
        CHECK(tg[1][i] == Catch::Approx((lp - lm) / (2 * h)).epsilon(2e-5).margin(1e-9));
    }
}

TEST_CASE("interpolating nets with true parameters leave tiny residuals") {
    const auto& f = testsupport::fitted_sml();
    NetBundle bundle = f.nets;  // copy: evaluation mutates workspace state
    const ConstrainedParams cp = ConstrainedParams::from_values(f.spec, f.truth);
    const auto res =
        residual_losses(bundle, f.spec, f.truth, cp, f.t_interior, Eigen::VectorXd::Ones(2));
    INFO("L_V = " << res.losses[0] << "  L_n = " << res.losses[1]);
    CHECK(res.losses[0] <= 1e-4);
    CHECK(res.losses[1] <= 1e-4);
}

TEST_CASE("physics stage with truth frozen reports zero parameter error") {
    const auto& f = testsupport::fitted_sml();
    EstimationProblem prob;
    prob.spec = &f.spec;
    prob.known = f.truth;
    prob.true_params = f.truth;
    prob.nets = f.nets;
    prob.cp = ConstrainedParams::from_values(f.spec, f.truth);
    prob.observations = f.voltage;
    prob.reference = f.window;
    prob.cfg.iterations = 400;
    prob.cfg.batch_size = 256;
    prob.cfg.lr_lambda = 0.0;  // lambda frozen at the truth
    prob.cfg.theta_schedule = LrSchedule::constant(1e-5);
    const EstimationResult r = run_physics_stage(prob);
    for (const auto& [name, err] : r.per_param_rel_error) {
        INFO(name);
        CHECK(err < 1e-12);
    }
    CHECK(r.state_errors.at("V") <= 0.005);
    CHECK(r.state_errors.at("n") <= 0.005);
}

TEST_CASE("physics stage is bitwise reproducible") {
    const auto& f = testsupport::fitted_sml();
    auto run = [&] {
        EstimationProblem prob;
        prob.spec = &f.spec;
        prob.known = f.truth;
        prob.true_params = f.truth;
        prob.nets = f.nets;
        ModelParams init = f.truth;
        init.set("g_K", 2.0);
        init.set("phi", 0.1);
        prob.cp = ConstrainedParams::from_values(f.spec, init);
        prob.observations = f.voltage;
        prob.reference = f.window;
        prob.cfg.iterations = 200;
        prob.cfg.batch_size = 128;
        prob.cfg.balance_every = 50;
        prob.cfg.batch_seed = 5;
        return run_physics_stage(prob);
    };
    const EstimationResult a = run();
    const EstimationResult b = run();
    const Eigen::VectorXd la = param_vector(f.spec, a.lambda_hat, RoleFilter::Estimated);
    const Eigen::VectorXd lb = param_vector(f.spec, b.lambda_hat, RoleFilter::Estimated);
    CHECK((la - lb).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.reconstructed - b.reconstructed).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("hidden-state error decreases over training with truth lambda") {
    const auto& f = testsupport::fitted_sml();
    const auto sel = select_dominant_frequencies(power_spectrum(f.voltage), 95.0);
    auto error_after = [&](std::size_t iters) {
        EstimationProblem prob;
        prob.spec = &f.spec;
        prob.known = f.truth;
        prob.true_params = f.truth;
        prob.nets = make_net_bundle(f.spec, sel, {24, 24}, {0.5, 0.1}, 31);
        prob.nets.nets[0] = testsupport::fourier_interpolant(f.voltage, 150);
        prob.cp = ConstrainedParams::from_values(f.spec, f.truth);
        prob.observations = f.voltage;
        prob.reference = f.window;
        prob.cfg.iterations = iters;
        prob.cfg.batch_size = 256;
        prob.cfg.lr_lambda = 0.0;
        prob.cfg.theta_schedule = LrSchedule::constant(1e-3);
        prob.cfg.balance_every = 200;
        return run_physics_stage(prob).state_errors.at("n");
    };
    const double e1 = error_after(300);
    const double e2 = error_after(1500);
    const double e3 = error_after(5000);
    INFO(e1 << " -> " << e2 << " -> " << e3);
    CHECK(e2 < e1);
    CHECK(e3 < e2);
}
