#pragma once

// Ground-truth data generation: Heun (explicit trapezoid) integration,
// uniform downsampling, and the two observational noise models.

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "neuropinn/errors.hpp"
#include "neuropinn/model.hpp"
#include "neuropinn/rng.hpp"
#include "neuropinn/timeseries.hpp"

namespace neuropinn {

struct NoiseSpec {
    enum class Kind { Relative, Absolute };
    Kind kind = Kind::Relative;
    double level = 0.0;  // r, dimensionless
    std::uint64_t seed = 0;
};

inline NoiseSpec::Kind noise_kind_from_string(const std::string& s) {
    if (s == "relative") return NoiseSpec::Kind::Relative;
    if (s == "absolute") return NoiseSpec::Kind::Absolute;
    throw ContractViolation("unknown noise kind: " + s);
}

/// Heun's explicit trapezoid method:
///   x* = x + dt * F(x),  x_{k+1} = x + dt/2 * (F(x) + F(x*)).
/// Returns n_steps + 1 rows including the initial state.
inline Trajectory integrate(const ModelSpec& spec, const ModelParams& params,
                            const Eigen::VectorXd& x0, double dt, std::size_t n_steps,
                            double t0 = 0.0) {
    if (!(dt > 0.0)) throw ContractViolation("integrate: dt must be positive");
    if (static_cast<std::size_t>(x0.size()) != spec.dim())
        throw ContractViolation("integrate: initial state dimension mismatch");
    for (Eigen::Index i = 0; i < x0.size(); ++i)
        if (!std::isfinite(x0[i])) throw NonFiniteError("integrate: non-finite initial state");

    Trajectory traj;
    traj.t0 = t0;
    traj.dt = dt;
    traj.model_id = spec.id;
    traj.state_names = spec.state_names;
    const auto d = static_cast<Eigen::Index>(spec.dim());
    traj.states.resize(static_cast<Eigen::Index>(n_steps) + 1, d);
    traj.states.row(0) = x0.transpose();

    Eigen::VectorXd x = x0, f0(d), f1(d), xs(d);
    const std::span<const double> params_ok{};  // silence unused warnings on some compilers
    (void)params_ok;
    for (std::size_t k = 0; k < n_steps; ++k) {
        spec.field(std::span<const double>(x.data(), x.size()), params,
                   std::span<double>(f0.data(), f0.size()));
        xs = x + dt * f0;
        spec.field(std::span<const double>(xs.data(), xs.size()), params,
                   std::span<double>(f1.data(), f1.size()));
        x += 0.5 * dt * (f0 + f1);
        if (!x.allFinite())
            throw IntegrationBlowup("integrate: non-finite state at step " + std::to_string(k + 1),
                                    k + 1);
        traj.states.row(static_cast<Eigen::Index>(k) + 1) = x.transpose();
    }
    return traj;
}

/// Keep rows 0, stride, 2*stride, ...; dt is multiplied by stride.
inline Trajectory downsample(const Trajectory& traj, std::size_t stride) {
    if (stride < 1) throw ContractViolation("downsample: stride must be >= 1");
    if (stride == 1) return traj;
    Trajectory out;
    out.t0 = traj.t0;
    out.dt = traj.dt * static_cast<double>(stride);
    out.model_id = traj.model_id;
    out.state_names = traj.state_names;
    const std::size_t n = (traj.rows() - 1) / stride + 1;
    out.states.resize(static_cast<Eigen::Index>(n), traj.states.cols());
    for (std::size_t i = 0; i < n; ++i)
        out.states.row(static_cast<Eigen::Index>(i)) =
            traj.states.row(static_cast<Eigen::Index>(i * stride));
    return out;
}

/// Population (1/N) standard deviation.
inline double population_std(const Eigen::VectorXd& v) {
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().mean());
}

/// Observational noise. Relative: V + r*std(V)*eps_i; absolute: V +
/// r*mean(V)*eps_i. eps_i are i.i.d. standard normals from the counter-based
/// generator, so the result is a pure function of (series, spec).
inline TimeSeries add_noise(const TimeSeries& series, const NoiseSpec& ns) {
    if (!series.values.allFinite()) throw NonFiniteError("add_noise: non-finite input");
    if (ns.level < 0.0) throw ContractViolation("add_noise: negative noise level");
    TimeSeries out = series;
    if (ns.level == 0.0) return out;
    const double scale = ns.kind == NoiseSpec::Kind::Relative
                             ? ns.level * population_std(series.values)
                             : ns.level * series.values.mean();
    for (Eigen::Index i = 0; i < out.values.size(); ++i)
        out.values[i] += scale * rng::normal(ns.seed, rng::stream::kNoise,
                                             static_cast<std::uint64_t>(i));
    return out;
}

}  // namespace neuropinn
