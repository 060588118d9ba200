#pragma once

// Shared fixtures for the training tests. The "interpolating nets" oracle is
// built directly from DFT coefficients over a period-aligned window: a single
// linear layer over a rich Fourier embedding reproduces the samples exactly
// and its time derivative analytically. Independent of the training path.

#include <Eigen/Dense>

#include "neuropinn/pipeline.hpp"

namespace testsupport {

using namespace neuropinn;

/// Pick [i0, i0+count) covering roughly k_periods of the attractor such that
/// the wrap-around mismatch is minimal: start at a slow phase and end at the
/// grid point closest to the start state.
inline std::pair<std::size_t, std::size_t> periodic_window(const Trajectory& traj,
                                                           const ModelSpec& spec,
                                                           const ModelParams& params,
                                                           int k_periods) {
    const auto n = traj.rows();
    // slow phase: minimal field magnitude over the first quarter
    std::size_t i0 = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n / 4; ++i) {
        const double speed =
            eval_vector_field(spec, traj.states.row(static_cast<Eigen::Index>(i)).transpose(),
                              params)
                .norm();
        if (speed < best) {
            best = speed;
            i0 = i;
        }
    }
    // period from upward mid-crossings of V
    const auto v = traj.states.col(0);
    const double mid = 0.5 * (v.minCoeff() + v.maxCoeff());
    std::vector<double> crossings;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v[i - 1] < mid && v[i] >= mid)
            crossings.push_back(traj.time(static_cast<std::size_t>(i)));
    const double period = (crossings.back() - crossings.front()) /
                          static_cast<double>(crossings.size() - 1);
    const auto steps_per_period = period / traj.dt;
    // as many requested periods as actually fit behind i0
    const auto fit = static_cast<int>((static_cast<double>(n - 1 - i0) - 31.0) / steps_per_period);
    k_periods = std::min(k_periods, fit);
    const auto target =
        i0 + static_cast<std::size_t>(std::llround(k_periods * steps_per_period));
    std::size_t jbest = target;
    double dbest = std::numeric_limits<double>::infinity();
    for (std::size_t j = target > 30 ? target - 30 : 1; j <= target + 30 && j < n; ++j) {
        const double dist = (traj.states.row(static_cast<Eigen::Index>(j)) -
                             traj.states.row(static_cast<Eigen::Index>(i0)))
                                .lpNorm<Eigen::Infinity>();
        if (dist < dbest) {
            dbest = dist;
            jbest = j;
        }
    }
    return {i0, jbest - i0};
}

/// Truncated-Fourier interpolant of a uniformly sampled near-periodic signal,
/// expressed as a FourierNet (single linear layer, identity output).
inline FourierNet fourier_interpolant(const TimeSeries& s, std::size_t max_bins) {
    const auto n = s.size();
    const double mean = s.values.mean();
    Eigen::VectorXd centered = s.values.array() - mean;
    const auto half = neuropinn::detail::dft_forward(centered);

    std::vector<std::size_t> order;
    for (std::size_t k = 1; k < half.size(); ++k) order.push_back(k);
    std::stable_sort(order.begin(), order.end(), [&half](std::size_t a, std::size_t b) {
        return std::norm(half[a]) > std::norm(half[b]);
    });
    if (order.size() > max_bins) order.resize(max_bins);

    FourierEmbedding emb;
    emb.fixed_freqs.resize(static_cast<Eigen::Index>(order.size()));
    // the window [t0, t0 + n*dt) defines the fundamental
    const double base = 2.0 * M_PI / (static_cast<double>(n) * s.dt);
    for (std::size_t q = 0; q < order.size(); ++q)
        emb.fixed_freqs[static_cast<Eigen::Index>(q)] = base * static_cast<double>(order[q]);

    FourierNet net(emb, {}, OutputMap::Identity);
    const auto& L = net.layers()[0];
    for (std::size_t q = 0; q < order.size(); ++q) {
        const auto c = half[order[q]];
        // phase reference is t = 0, consistent with sample times t0 + i*dt
        // when t0 = 0; callers must rebase the window to t0 = 0
        net.params[L.w_off + static_cast<Eigen::Index>(2 * q)] =
            -2.0 * c.imag() / static_cast<double>(n);
        net.params[L.w_off + static_cast<Eigen::Index>(2 * q + 1)] =
            2.0 * c.real() / static_cast<double>(n);
    }
    net.params[L.b_off] = mean;
    return net;
}

struct FittedSml {
    ModelSpec spec;
    ModelParams truth;
    Trajectory window;        // period-aligned clean window, t starts at 0
    TimeSeries voltage;       // column 0 of the window
    NetBundle nets;           // interpolating nets for V and n
    Eigen::VectorXd t_interior;  // collocation grid away from the wrap seam
};

/// SML Hopf, clean data, interpolating networks. Built once per process.
inline const FittedSml& fitted_sml() {
    static const FittedSml fixture = [] {
        FittedSml f;
        f.spec = make_model("sml");
        const RegimeSetup setup = regime_setup(f.spec, "hopf");
        f.truth = setup.params;
        const GeneratedData g = generate_observations(
            f.spec, setup, {NoiseSpec::Kind::Relative, 0.0, 1}, pipeline_defaults("sml"));
        const auto [i0, count] = periodic_window(g.observed, f.spec, f.truth, 5);

        f.window.dt = g.observed.dt;
        f.window.t0 = 0.0;
        f.window.model_id = g.observed.model_id;
        f.window.state_names = g.observed.state_names;
        f.window.states = g.observed.states.middleRows(static_cast<Eigen::Index>(i0),
                                                       static_cast<Eigen::Index>(count));
        f.voltage = f.window.column(0);

        f.nets.nets.push_back(fourier_interpolant(f.voltage, 400));
        f.nets.nets.push_back(fourier_interpolant(f.window.column(1), 400));
        f.nets.trainable = {false, true};

        const auto n = static_cast<Eigen::Index>(count);
        const Eigen::Index margin = n / 20;
        f.t_interior.resize(n - 2 * margin);
        for (Eigen::Index i = 0; i < f.t_interior.size(); ++i)
            f.t_interior[i] = f.window.time(static_cast<std::size_t>(i + margin));
        return f;
    }();
    return fixture;
}

}  // namespace testsupport
