#pragma once

// Per-model pipeline defaults (window, step, spectral threshold, network
// layout, training configuration) and the shared data-generation path from a
// regime preset to the noisy voltage observations.

#include <cstdint>
#include <string>
#include <vector>

#include "neuropinn/model.hpp"
#include "neuropinn/net.hpp"
#include "neuropinn/sim.hpp"
#include "neuropinn/spectral.hpp"
#include "neuropinn/train.hpp"

namespace neuropinn {

struct PipelineDefaults {
    double total_time_ms = 200.0;
    double dt_ms = 0.1;
    std::size_t stride = 1;
    double fft_p = 95.0;
    std::size_t fft_max_freqs = 0;  // 0 = uncapped
    std::vector<Eigen::Index> hidden_widths{50, 50};
    Stage1Config stage1;
    Stage2Config stage2;
    double default_noise_level = 0.01;
};

inline PipelineDefaults pipeline_defaults(const std::string& model_id) {
    PipelineDefaults d;
    if (model_id == "sml") {
        d.total_time_ms = 200.0;
        d.dt_ms = 0.1;
        d.stride = 1;
        d.fft_p = 95.0;
        d.hidden_widths = {50, 50};
        d.stage1.batch_size = 500;
        d.stage2.batch_size = 500;
        d.stage2.iterations = 800000;
        d.stage2.theta_schedule = {1e-4, 0.5, 100000};
        d.stage2.lr_lambda = 1e-4;
    } else if (model_id == "bml") {
        d.total_time_ms = 2000.0;
        d.dt_ms = 0.1;
        d.stride = 1;
        d.fft_p = 99.0;
        d.fft_max_freqs = 35;
        d.hidden_widths = {50, 50, 50};
        d.stage1.batch_size = 1000;
        d.stage2.batch_size = 1000;
        d.stage2.iterations = 1000000;
        d.stage2.theta_schedule = {1e-4, 0.5, 100000};
        d.stage2.lr_lambda = 1e-4;
    } else if (model_id == "pbc") {
        d.total_time_ms = 6000.0;
        d.dt_ms = 0.01;
        d.stride = 10;
        d.fft_p = 99.92;
        d.fft_max_freqs = 49;
        d.hidden_widths = {50, 50, 50};
        d.stage1.batch_size = 1000;
        d.stage2.batch_size = 1000;
        d.stage2.iterations = 200000;
        d.stage2.theta_schedule = {1e-3, 0.5, 25000};
        d.stage2.lr_lambda = 1e-3;
    } else {
        throw ContractViolation("no pipeline defaults for model: " + model_id);
    }
    d.stage1.iterations = 20000;
    d.stage1.schedule = {1e-3, 0.5, 10000};
    return d;
}

/// Ground-truth parameters plus the initial condition and settle-in transient
/// the data generator uses for that regime. The observation window starts on
/// the attractor, matching trajectories that begin mid-oscillation.
struct RegimeSetup {
    ModelParams params;
    Eigen::VectorXd x0;
    double transient_ms = 0.0;
};

inline RegimeSetup regime_setup(const ModelSpec& spec, const std::string& regime) {
    RegimeSetup r;
    r.params = preset_params(spec, regime);
    r.x0 = initial_state(spec, r.params);
    if (spec.id == "sml") {
        r.transient_ms = 200.0;
        if (regime == "homoclinic") {
            // bistable with a stable node; start on the cycle
            r.x0 << -10.0, 0.2;
            r.transient_ms = 0.0;
        }
    } else if (spec.id == "bml") {
        r.transient_ms = 2000.0;
    } else if (spec.id == "pbc") {
        r.transient_ms = 10000.0;
    }
    return r;
}

struct GeneratedData {
    Trajectory full;          // simulation grid, all states
    Trajectory observed;      // observation grid (downsampled), all states (clean truth)
    TimeSeries clean_voltage; // observation grid
    TimeSeries noisy_voltage; // observation grid
};

/// Simulate the ground truth on the model's default grid and apply the noise
/// model to the voltage column. Time restarts at 0 after the transient.
inline GeneratedData generate_observations(const ModelSpec& spec, const RegimeSetup& setup,
                                           const NoiseSpec& noise, const PipelineDefaults& d) {
    GeneratedData g;
    Eigen::VectorXd x0 = setup.x0;
    if (setup.transient_ms > 0.0) {
        const auto n_trans = static_cast<std::size_t>(std::llround(setup.transient_ms / d.dt_ms));
        const Trajectory warm = integrate(spec, setup.params, x0, d.dt_ms, n_trans);
        x0 = warm.states.row(warm.states.rows() - 1).transpose();
    }
    const auto n_steps = static_cast<std::size_t>(std::llround(d.total_time_ms / d.dt_ms));
    g.full = integrate(spec, setup.params, x0, d.dt_ms, n_steps);
    g.observed = downsample(g.full, d.stride);
    g.clean_voltage = g.observed.column(spec.observed_index);
    g.noisy_voltage = add_noise(g.clean_voltage, noise);
    return g;
}

/// Keep only the strongest max_freqs frequencies (bins are already sorted by
/// descending PSD). A zero cap is a no-op.
inline FrequencySelection cap_selection(FrequencySelection sel, std::size_t max_freqs) {
    if (max_freqs == 0 || sel.m_star <= max_freqs) return sel;
    sel.bins.resize(max_freqs);
    sel.angular_freqs = sel.angular_freqs.head(static_cast<Eigen::Index>(max_freqs)).eval();
    sel.m_star = max_freqs;
    return sel;
}

/// Build the per-state network bundle: fixed spectrum frequencies for the
/// observed voltage, hybrid fixed+trainable embedding for the hidden states.
inline NetBundle make_net_bundle(const ModelSpec& spec, const FrequencySelection& sel,
                                 const std::vector<Eigen::Index>& hidden, const RwfInit& rwf,
                                 std::uint64_t net_seed) {
    NetBundle bundle;
    const double f_lo = sel.angular_freqs.minCoeff();
    const double f_hi = sel.angular_freqs.maxCoeff();
    for (std::size_t k = 0; k < spec.dim(); ++k) {
        FourierEmbedding emb;
        emb.fixed_freqs = sel.angular_freqs;
        emb.n_trainable = k == static_cast<std::size_t>(spec.observed_index) ? 0 : sel.m_star;
        OutputMap om = OutputMap::Identity;
        const std::string& name = spec.state_names[k];
        if (name == "n" || name == "h") om = OutputMap::Sigmoid;
        if (name == "Ca") om = OutputMap::Softplus;
        bundle.nets.push_back(
            init_network(std::move(emb), hidden, om, rwf, net_seed, k, f_lo, f_hi));
    }
    bundle.trainable.assign(spec.dim(), true);
    bundle.trainable[static_cast<std::size_t>(spec.observed_index)] = false;
    return bundle;
}

/// Initial guess for the estimated parameters: a regime name loads that
/// regime's table values; "ones" sets every magnitude to 1 with the declared
/// sign. Fixed parameters always come from the data-generating setup.
inline ModelParams initial_guess_params(const ModelSpec& spec, const ModelParams& known,
                                        const std::string& init_guess) {
    ModelParams init = known;
    if (init_guess == "ones") {
        for (const auto& m : spec.param_meta)
            if (m.role == Role::Estimated)
                init.set(m.name, m.sign == Sign::Negative ? -1.0 : 1.0);
        return init;
    }
    const ModelParams preset = preset_params(spec, init_guess);
    for (const auto& m : spec.param_meta)
        if (m.role == Role::Estimated) init.set(m.name, preset.at(m.name));
    return init;
}

struct RunConfig {
    std::string model = "sml";
    std::string regime = "hopf";
    std::string init_guess = "ones";
    NoiseSpec noise{NoiseSpec::Kind::Relative, 0.01, 1};
    std::uint64_t net_seed = 2;
    std::uint64_t batch_seed = 3;
    RwfInit rwf{0.5, 0.1};
    PipelineDefaults defaults;  // fft, widths, stage budgets

    static RunConfig for_model(const std::string& model_id, const std::string& regime_name) {
        RunConfig c;
        c.model = model_id;
        c.regime = regime_name;
        c.defaults = pipeline_defaults(model_id);
        c.noise.level = c.defaults.default_noise_level;
        return c;
    }
};

struct RunOutput {
    GeneratedData data;
    FrequencySelection selection;
    NetBundle nets;
    std::vector<LossRow> stage1_history;
    EstimationResult result;
};

/// The whole estimation pipeline: simulate, select frequencies, build and
/// pretrain the voltage network, then run the physics-constrained stage.
inline RunOutput run_estimation(const RunConfig& cfg) {
    RunOutput out;
    const ModelSpec spec = make_model(cfg.model);
    const RegimeSetup setup = regime_setup(spec, cfg.regime);
    out.data = generate_observations(spec, setup, cfg.noise, cfg.defaults);
    out.selection = cap_selection(
        select_dominant_frequencies(power_spectrum(out.data.noisy_voltage), cfg.defaults.fft_p),
        cfg.defaults.fft_max_freqs);
    out.nets =
        make_net_bundle(spec, out.selection, cfg.defaults.hidden_widths, cfg.rwf, cfg.net_seed);

    Stage1Config s1 = cfg.defaults.stage1;
    s1.batch_seed = cfg.batch_seed;
    out.stage1_history = pretrain_voltage(out.nets.nets[static_cast<std::size_t>(spec.observed_index)],
                                          out.data.noisy_voltage, s1);

    EstimationProblem prob;
    const ModelSpec spec_local = spec;  // keep alive for the call
    prob.spec = &spec_local;
    prob.known = setup.params;
    prob.true_params = setup.params;
    prob.nets = std::move(out.nets);
    prob.cp = ConstrainedParams::from_values(spec, initial_guess_params(spec, setup.params,
                                                                        cfg.init_guess));
    prob.observations = out.data.noisy_voltage;
    prob.reference = out.data.observed;
    prob.cfg = cfg.defaults.stage2;
    prob.cfg.batch_seed = cfg.batch_seed;
    out.result = run_physics_stage(prob);
    out.nets = std::move(prob.nets);
    return out;
}

}  // namespace neuropinn
