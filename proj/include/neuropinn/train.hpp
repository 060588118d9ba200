#pragma once

// Two-stage PINN estimation.
//
// Stage 1 fits the voltage network to the observed voltage by mean squared
// misfit. Stage 2 holds the voltage network fixed (by default), and jointly
// optimizes the hidden-state networks and the sign-constrained biophysical
// parameters against the ODE residuals, with gradient-norm loss balancing,
// Adam, a staircase schedule for network parameters and a constant rate for
// the biophysical parameters.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neuropinn/errors.hpp"
#include "neuropinn/model.hpp"
#include "neuropinn/net.hpp"
#include "neuropinn/optim.hpp"
#include "neuropinn/rng.hpp"
#include "neuropinn/timeseries.hpp"

namespace neuropinn {

// ---------------------------------------------------------------------------
// Sign-constrained biophysical parameters: lambda_j = sign_j * exp(z_j).

struct ConstrainedParams {
    std::vector<std::string> names;  // estimated parameters, declaration order
    Eigen::VectorXd signs;           // +1 or -1
    Eigen::VectorXd z;               // unconstrained

    Eigen::VectorXd lambda() const {
        return signs.array() * z.array().exp();
    }

    /// z from initial values; signs come from the spec declaration.
    static ConstrainedParams from_values(const ModelSpec& spec, const ModelParams& init) {
        ConstrainedParams cp;
        for (const auto& m : spec.param_meta) {
            if (m.role != Role::Estimated) continue;
            const double v = init.at(m.name);
            double sign = 0.0;
            switch (m.sign) {
                case Sign::Positive: sign = 1.0; break;
                case Sign::Negative: sign = -1.0; break;
                case Sign::Free: sign = v >= 0.0 ? 1.0 : -1.0; break;
            }
            if (v * sign <= 0.0)
                throw ContractViolation("initial value for " + m.name +
                                        " violates its sign constraint");
            cp.names.push_back(m.name);
            cp.signs.conservativeResize(cp.signs.size() + 1);
            cp.z.conservativeResize(cp.z.size() + 1);
            cp.signs[cp.signs.size() - 1] = sign;
            cp.z[cp.z.size() - 1] = std::log(std::abs(v));
        }
        return cp;
    }

    ModelParams merged(const ModelParams& base) const {
        ModelParams out = base;
        const Eigen::VectorXd lam = lambda();
        for (std::size_t j = 0; j < names.size(); ++j)
            out.set(names[j], lam[static_cast<Eigen::Index>(j)]);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Gradient-norm loss balancing.

struct BalanceState {
    Eigen::VectorXd weights;  // one per residual equation, initialized to 1
    double alpha = 0.9;
    double eps = 1e-6;
    std::size_t update_every = 1000;

    static BalanceState init(Eigen::Index n_equations, double alpha, double eps,
                             std::size_t update_every) {
        BalanceState bs;
        bs.weights = Eigen::VectorXd::Ones(n_equations);
        bs.alpha = alpha;
        bs.eps = eps;
        bs.update_every = update_every;
        return bs;
    }
};

/// omega_hat_j = sum_k(|g_k| + eps) / (|g_j| + eps); moving average with
/// factor alpha. Stays positive and finite for any nonnegative norms.
inline BalanceState update_balance(const BalanceState& bs, const Eigen::VectorXd& grad_norms) {
    if (grad_norms.size() != bs.weights.size())
        throw ContractViolation("update_balance: norm count mismatch");
    if ((grad_norms.array() < 0.0).any())
        throw ContractViolation("update_balance: negative gradient norm");
    BalanceState out = bs;
    const double total = (grad_norms.array() + bs.eps).sum();
    const Eigen::VectorXd what = total / (grad_norms.array() + bs.eps);
    out.weights = bs.alpha * bs.weights + (1.0 - bs.alpha) * what;
    return out;
}

// ---------------------------------------------------------------------------
// Error metrics.

inline double normalized_l2(const Eigen::VectorXd& reference, const Eigen::VectorXd& prediction) {
    if (reference.size() != prediction.size())
        throw ContractViolation("normalized_l2: size mismatch");
    const double denom = reference.norm();
    if (!(denom > 0.0)) throw UndefinedMetric("normalized_l2: zero-norm reference");
    return (reference - prediction).norm() / denom;
}

inline double normalized_l2(const TimeSeries& reference, const TimeSeries& prediction) {
    if (reference.size() != prediction.size() || reference.dt != prediction.dt)
        throw ContractViolation("normalized_l2: grids differ");
    return normalized_l2(reference.values, prediction.values);
}

inline double param_rel_error(double true_value, double estimate) {
    if (true_value == 0.0) throw UndefinedMetric("param_rel_error: true value is zero");
    return std::abs(estimate - true_value) / std::abs(true_value);
}

// ---------------------------------------------------------------------------
// Residual losses and gradients.

struct NetBundle {
    std::vector<FourierNet> nets;  // one per state variable, spec order
    std::vector<bool> trainable;   // whether stage 2 updates this net
};

struct ResidualResult {
    Eigen::VectorXd losses;  // per equation, unweighted
    double weighted_total = 0.0;
};

/// Evaluates the per-equation residual losses over a batch of collocation
/// times and accumulates exact gradients for the trainable networks and the
/// constrained parameters. Keeps all scratch storage so the training loop is
/// allocation-free after the first call.
class ResidualEvaluator {
  public:
    ResidualEvaluator(const ModelSpec& spec, const ModelParams& known)
        : spec_(&spec), known_(known), d_(static_cast<Eigen::Index>(spec.dim())) {
        if (!spec.dual_field)
            throw ContractViolation("ResidualEvaluator requires a model with a dual field");
        n_est_ = 0;
        for (const auto& m : spec.param_meta)
            if (m.role == Role::Estimated) ++n_est_;
        dfdx_.resize(static_cast<std::size_t>(d_));
        dfdl_.resize(static_cast<std::size_t>(d_));
    }

    /// Forward all nets and the model partials at the batch times.
    void prepare(NetBundle& bundle, const ConstrainedParams& cp, const Eigen::VectorXd& t_batch) {
        const auto b = t_batch.size();
        if (bundle.nets.size() != static_cast<std::size_t>(d_))
            throw ContractViolation("residual: one network per state variable required");
        ws_.resize(bundle.nets.size());
        xhat_.resize(b, d_);
        dxhat_.resize(b, d_);
        for (Eigen::Index k = 0; k < d_; ++k) {
            forward_batch(bundle.nets[static_cast<std::size_t>(k)], t_batch,
                          ws_[static_cast<std::size_t>(k)], true);
            xhat_.col(k) = ws_[static_cast<std::size_t>(k)].value;
            dxhat_.col(k) = ws_[static_cast<std::size_t>(k)].dvalue;
        }
        lambda_ = cp.lambda();
        fval_.resize(b, d_);
        for (Eigen::Index eq = 0; eq < d_; ++eq) {
            dfdx_[static_cast<std::size_t>(eq)].resize(b, d_);
            dfdl_[static_cast<std::size_t>(eq)].resize(b, n_est_);
        }
        Dual12 xs[3], es[9], out[3];
        if (d_ > 3 || n_est_ > 9) throw ContractViolation("residual: model too large");
        for (Eigen::Index i = 0; i < b; ++i) {
            for (Eigen::Index k = 0; k < d_; ++k)
                xs[k] = Dual12::seeded(xhat_(i, k), static_cast<std::size_t>(k));
            for (Eigen::Index j = 0; j < n_est_; ++j)
                es[j] = Dual12::seeded(lambda_[j], static_cast<std::size_t>(d_ + j));
            spec_->dual_field(std::span<const Dual12>(xs, static_cast<std::size_t>(d_)),
                              std::span<const Dual12>(es, static_cast<std::size_t>(n_est_)),
                              known_, std::span<Dual12>(out, static_cast<std::size_t>(d_)));
            for (Eigen::Index eq = 0; eq < d_; ++eq) {
                fval_(i, eq) = out[eq].v;
                for (Eigen::Index k = 0; k < d_; ++k)
                    dfdx_[static_cast<std::size_t>(eq)](i, k) = out[eq].d[static_cast<std::size_t>(k)];
                for (Eigen::Index j = 0; j < n_est_; ++j)
                    dfdl_[static_cast<std::size_t>(eq)](i, j) =
                        out[eq].d[static_cast<std::size_t>(d_ + j)];
            }
        }
        resid_ = dxhat_ - fval_;
        batch_ = b;
        raw_loss_.resize(d_);
        dscale_.resize(d_);
        for (Eigen::Index eq = 0; eq < d_; ++eq) {
            raw_loss_[eq] = resid_.col(eq).squaredNorm() / static_cast<double>(b);
            dscale_[eq] = dxhat_.col(eq).squaredNorm() / static_cast<double>(b) + 1e-12;
        }
    }

    Eigen::VectorXd losses() const { return raw_loss_; }

    /// Residual-scaled losses: each equation's mean-square residual divided by
    /// the batch mean-square of its dX_hat/dt. Invariant under the joint
    /// rescaling (x_hat_k, lambda) that leaves the equations consistent, which
    /// removes the degenerate shrink-the-gating-variable optimum.
    Eigen::VectorXd scaled_losses() const {
        return raw_loss_.array() / dscale_.array();
    }

    const Eigen::MatrixXd& states() const { return xhat_; }
    const Eigen::MatrixXd& state_derivatives() const { return dxhat_; }
    const Eigen::MatrixXd& residuals() const { return resid_; }

    /// Gradient of sum_eq weights[eq] * L_eq with respect to trainable network
    /// parameters (accumulated into theta_grads, one buffer per net) and z.
    /// With `normalized`, L_eq is the residual-scaled loss and the scale is
    /// part of the differentiated graph.
    void accumulate_gradients(NetBundle& bundle, const ConstrainedParams& cp,
                              const Eigen::VectorXd& weights,
                              std::vector<Eigen::VectorXd>& theta_grads, Eigen::VectorXd& z_grad,
                              bool normalized = false) {
        const double inv_b = 1.0 / static_cast<double>(batch_);
        Eigen::VectorXd wc(d_);
        for (Eigen::Index eq = 0; eq < d_; ++eq)
            wc[eq] = normalized ? weights[eq] / dscale_[eq] : weights[eq];
        for (Eigen::Index k = 0; k < d_; ++k) {
            if (!bundle.trainable[static_cast<std::size_t>(k)]) continue;
            abar_.resize(batch_);
            adotbar_.resize(batch_);
            abar_.setZero();
            for (Eigen::Index eq = 0; eq < d_; ++eq)
                abar_.array() -= wc[eq] * 2.0 * inv_b * resid_.col(eq).array() *
                                 dfdx_[static_cast<std::size_t>(eq)].col(k).array();
            adotbar_ = wc[k] * 2.0 * inv_b * resid_.col(k);
            if (normalized)  // d/d(xdot) of the normalization denominator
                adotbar_.array() -= wc[k] * (raw_loss_[k] / dscale_[k]) * 2.0 * inv_b *
                                    dxhat_.col(k).array();
            backward_batch(bundle.nets[static_cast<std::size_t>(k)],
                           ws_[static_cast<std::size_t>(k)], abar_, &adotbar_,
                           theta_grads[static_cast<std::size_t>(k)]);
        }
        for (Eigen::Index j = 0; j < n_est_; ++j) {
            double g = 0.0;
            for (Eigen::Index eq = 0; eq < d_; ++eq)
                g -= wc[eq] * 2.0 * inv_b *
                     resid_.col(eq).dot(dfdl_[static_cast<std::size_t>(eq)].col(j));
            z_grad[j] += g * lambda_[j];  // chain rule through lambda = sign * exp(z)
        }
    }

    Eigen::Index n_equations() const { return d_; }
    Eigen::Index n_estimated() const { return n_est_; }

  private:
    const ModelSpec* spec_;
    ModelParams known_;
    Eigen::Index d_, n_est_ = 0;
    std::vector<NetBatch> ws_;
    Eigen::MatrixXd xhat_, dxhat_, fval_, resid_;
    std::vector<Eigen::MatrixXd> dfdx_, dfdl_;
    Eigen::VectorXd lambda_, abar_, adotbar_, raw_loss_, dscale_;
    Eigen::Index batch_ = 0;
};

/// One-shot convenience wrapper: losses plus gradients of the weighted sum.
inline ResidualResult residual_losses(NetBundle& bundle, const ModelSpec& spec,
                                      const ModelParams& known, const ConstrainedParams& cp,
                                      const Eigen::VectorXd& t_batch,
                                      const Eigen::VectorXd& weights,
                                      std::vector<Eigen::VectorXd>* theta_grads = nullptr,
                                      Eigen::VectorXd* z_grad = nullptr) {
    ResidualEvaluator ev(spec, known);
    ev.prepare(bundle, cp, t_batch);
    ResidualResult res;
    res.losses = ev.losses();
    if (!res.losses.allFinite()) {
        Eigen::Index eq_bad = 0;
        for (Eigen::Index eq = 0; eq < res.losses.size(); ++eq)
            if (!std::isfinite(res.losses[eq])) eq_bad = eq;
        throw NonFiniteError("residual loss non-finite for equation " +
                             spec.state_names[static_cast<std::size_t>(eq_bad)]);
    }
    res.weighted_total = weights.dot(res.losses);
    if (theta_grads && z_grad) ev.accumulate_gradients(bundle, cp, weights, *theta_grads, *z_grad);
    return res;
}

// ---------------------------------------------------------------------------
// Stage 1: data-driven pretraining of the voltage network.

struct Stage1Config {
    LrSchedule schedule{1e-3, 0.5, 10000};
    std::size_t iterations = 20000;
    std::size_t batch_size = 500;
    std::uint64_t batch_seed = 0;
    std::size_t log_every = 100;
};

struct LossRow {
    std::size_t iter = 0;
    double total = 0.0;
    Eigen::VectorXd per_equation;  // empty in stage 1
    Eigen::VectorXd weights;       // empty in stage 1
};

inline std::vector<LossRow> pretrain_voltage(FourierNet& v_net, const TimeSeries& observations,
                                             const Stage1Config& cfg) {
    const auto n = static_cast<std::uint64_t>(observations.size());
    if (cfg.batch_size == 0 || cfg.batch_size > n)
        throw ContractViolation("pretrain_voltage: batch size must be in [1, N_u]");
    AdamState adam(v_net.n_params());
    NetBatch ws;
    Eigen::VectorXd t_batch(static_cast<Eigen::Index>(cfg.batch_size));
    Eigen::VectorXd y_batch(static_cast<Eigen::Index>(cfg.batch_size));
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(v_net.n_params());
    Eigen::VectorXd abar(static_cast<Eigen::Index>(cfg.batch_size));
    std::vector<LossRow> history;
    history.reserve(cfg.iterations / cfg.log_every + 1);

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        for (std::size_t j = 0; j < cfg.batch_size; ++j) {
            const auto idx = rng::below(cfg.batch_seed, rng::stream::kStage1Batch,
                                        static_cast<std::uint64_t>(iter) * cfg.batch_size + j, n);
            t_batch[static_cast<Eigen::Index>(j)] = observations.time(idx);
            y_batch[static_cast<Eigen::Index>(j)] = observations.values[static_cast<Eigen::Index>(idx)];
        }
        forward_batch(v_net, t_batch, ws, false);
        abar = ws.value - y_batch;
        const double loss = abar.squaredNorm() / static_cast<double>(cfg.batch_size);
        if (!std::isfinite(loss))
            throw TrainingDiverged("pretraining loss diverged at iteration " + std::to_string(iter),
                                   iter);
        abar *= 2.0 / static_cast<double>(cfg.batch_size);
        grad.setZero();
        backward_batch(v_net, ws, abar, nullptr, grad);
        adam_step(adam, v_net.params, grad, cfg.schedule.at(static_cast<std::int64_t>(iter)));
        if (iter % cfg.log_every == 0 || iter + 1 == cfg.iterations)
            history.push_back({iter, loss, {}, {}});
    }
    return history;
}

// ---------------------------------------------------------------------------
// Stage 2: physics-constrained joint optimization.

struct Stage2Config {
    LrSchedule theta_schedule{1e-4, 0.5, 100000};
    double lr_lambda = 1e-4;
    std::size_t iterations = 800000;
    std::size_t batch_size = 500;
    double balance_alpha = 0.9;
    double balance_eps = 1e-6;
    std::size_t balance_every = 100;
    std::size_t log_every = 100;
    bool train_v = false;
    bool include_data_loss = false;  // adds the voltage misfit when train_v is set
    bool residual_scaling = true;    // normalize each equation by its dX_hat/dt scale
    std::uint64_t batch_seed = 0;
    // called every log_every iterations with the current constrained params
    std::function<void(std::size_t, const ConstrainedParams&)> monitor;
};

struct EstimationProblem {
    const ModelSpec* spec = nullptr;
    ModelParams known;        // source of the fixed parameter values
    ModelParams true_params;  // ground truth, for error metrics
    NetBundle nets;           // [0] pretrained voltage net, then gating nets
    ConstrainedParams cp;
    TimeSeries observations;  // noisy voltage on the observation grid
    Trajectory reference;     // clean trajectory on the observation grid
    Stage2Config cfg;
};

struct EstimationResult {
    ModelParams lambda_hat;
    std::map<std::string, double> per_param_rel_error;
    std::map<std::string, double> state_errors;
    std::vector<LossRow> history;
    Eigen::MatrixXd reconstructed;  // observation grid x state dimension
    Eigen::VectorXd final_weights;
    std::size_t iterations_run = 0;
};

/// Reconstruct every state on the full observation grid (values only).
inline Eigen::MatrixXd reconstruct_states(NetBundle& bundle, const TimeSeries& grid) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    const auto d = static_cast<Eigen::Index>(bundle.nets.size());
    Eigen::MatrixXd out(n, d);
    NetBatch ws;
    const Eigen::Index chunk = 4096;
    Eigen::VectorXd t_chunk;
    for (Eigen::Index start = 0; start < n; start += chunk) {
        const Eigen::Index len = std::min(chunk, n - start);
        t_chunk.resize(len);
        for (Eigen::Index i = 0; i < len; ++i)
            t_chunk[i] = grid.time(static_cast<std::size_t>(start + i));
        for (Eigen::Index k = 0; k < d; ++k) {
            forward_batch(bundle.nets[static_cast<std::size_t>(k)], t_chunk, ws, false);
            out.col(k).segment(start, len) = ws.value;
        }
    }
    return out;
}

inline EstimationResult run_physics_stage(EstimationProblem& problem) {
    const ModelSpec& spec = *problem.spec;
    const Stage2Config& cfg = problem.cfg;
    const auto d = static_cast<Eigen::Index>(spec.dim());
    const auto n_obs = static_cast<std::uint64_t>(problem.observations.size());
    NetBundle& bundle = problem.nets;
    ConstrainedParams& cp = problem.cp;

    if (bundle.nets.size() != spec.dim())
        throw ContractViolation("run_physics_stage: network bundle incomplete");
    bundle.trainable.assign(spec.dim(), true);
    bundle.trainable[static_cast<std::size_t>(spec.observed_index)] = cfg.train_v;

    ResidualEvaluator ev(spec, problem.known);
    BalanceState bs = BalanceState::init(d, cfg.balance_alpha, cfg.balance_eps, cfg.balance_every);

    std::vector<AdamState> theta_adam;
    std::vector<Eigen::VectorXd> theta_grads(bundle.nets.size());
    std::vector<std::vector<Eigen::VectorXd>> eq_theta_grads(static_cast<std::size_t>(d));
    for (auto& net : bundle.nets) theta_adam.emplace_back(net.n_params());
    for (std::size_t k = 0; k < bundle.nets.size(); ++k)
        theta_grads[k] = Eigen::VectorXd::Zero(bundle.nets[k].n_params());
    for (auto& per_eq : eq_theta_grads) {
        per_eq.resize(bundle.nets.size());
        for (std::size_t k = 0; k < bundle.nets.size(); ++k)
            per_eq[k] = Eigen::VectorXd::Zero(bundle.nets[k].n_params());
    }
    AdamState z_adam(cp.z.size());
    Eigen::VectorXd z_grad = Eigen::VectorXd::Zero(cp.z.size());
    std::vector<Eigen::VectorXd> eq_z_grads(static_cast<std::size_t>(d),
                                            Eigen::VectorXd::Zero(cp.z.size()));

    Eigen::VectorXd t_batch(static_cast<Eigen::Index>(cfg.batch_size));
    Eigen::VectorXd y_batch(static_cast<Eigen::Index>(cfg.batch_size));
    Eigen::VectorXd data_abar;
    NetBatch ws_unused;
    std::vector<LossRow> history;
    history.reserve(cfg.iterations / cfg.log_every + 2);

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        for (std::size_t j = 0; j < cfg.batch_size; ++j) {
            const auto idx = rng::below(cfg.batch_seed, rng::stream::kStage2Batch,
                                        static_cast<std::uint64_t>(iter) * cfg.batch_size + j,
                                        n_obs);
            t_batch[static_cast<Eigen::Index>(j)] = problem.observations.time(idx);
            y_batch[static_cast<Eigen::Index>(j)] =
                problem.observations.values[static_cast<Eigen::Index>(idx)];
        }
        ev.prepare(bundle, cp, t_batch);
        Eigen::VectorXd losses = cfg.residual_scaling ? ev.scaled_losses() : ev.losses();
        if (!losses.allFinite())
            throw TrainingDiverged("residual loss diverged at iteration " + std::to_string(iter),
                                   iter);

        const bool balance_now = cfg.balance_every > 0 && iter % cfg.balance_every == 0;
        for (auto& g : theta_grads) g.setZero();
        z_grad.setZero();
        if (balance_now) {
            // per-equation gradients over (gating theta, z) drive the weights
            Eigen::VectorXd norms(d);
            for (Eigen::Index eq = 0; eq < d; ++eq) {
                auto& tg = eq_theta_grads[static_cast<std::size_t>(eq)];
                auto& zg = eq_z_grads[static_cast<std::size_t>(eq)];
                for (auto& g : tg) g.setZero();
                zg.setZero();
                Eigen::VectorXd onehot = Eigen::VectorXd::Zero(d);
                onehot[eq] = 1.0;
                ev.accumulate_gradients(bundle, cp, onehot, tg, zg, cfg.residual_scaling);
                double sq = zg.squaredNorm();
                for (std::size_t k = 0; k < bundle.nets.size(); ++k)
                    if (bundle.trainable[k]) sq += tg[k].squaredNorm();
                norms[eq] = std::sqrt(sq);
            }
            bs = update_balance(bs, norms);
            if (!bs.weights.allFinite() || (bs.weights.array() <= 0.0).any())
                throw TrainingDiverged("balancing weights invalid at iteration " +
                                           std::to_string(iter),
                                       iter);
            const Eigen::VectorXd lam = cp.lambda();
            if (!lam.allFinite() || (lam.array() * cp.signs.array() <= 0.0).any())
                throw TrainingDiverged("estimated parameters left their sign orthant at iteration " +
                                           std::to_string(iter),
                                       iter);
            for (Eigen::Index eq = 0; eq < d; ++eq) {
                for (std::size_t k = 0; k < bundle.nets.size(); ++k)
                    theta_grads[k] += bs.weights[eq] * eq_theta_grads[static_cast<std::size_t>(eq)][k];
                z_grad += bs.weights[eq] * eq_z_grads[static_cast<std::size_t>(eq)];
            }
        } else {
            ev.accumulate_gradients(bundle, cp, bs.weights, theta_grads, z_grad,
                                    cfg.residual_scaling);
        }

        double total = bs.weights.dot(losses);
        if (cfg.train_v && cfg.include_data_loss) {
            // unit outer weight on the data misfit
            const auto vi = static_cast<std::size_t>(spec.observed_index);
            const Eigen::VectorXd& vhat = ev.states().col(spec.observed_index);
            data_abar = vhat - y_batch;
            total += data_abar.squaredNorm() / static_cast<double>(cfg.batch_size);
            data_abar *= 2.0 / static_cast<double>(cfg.batch_size);
            // reuse the residual forward caches via a dedicated value-only pass
            forward_batch(bundle.nets[vi], t_batch, ws_unused, false);
            backward_batch(bundle.nets[vi], ws_unused, data_abar, nullptr, theta_grads[vi]);
        }

        const double lr_theta = cfg.theta_schedule.at(static_cast<std::int64_t>(iter));
        for (std::size_t k = 0; k < bundle.nets.size(); ++k) {
            if (!bundle.trainable[k]) continue;
            adam_step(theta_adam[k], bundle.nets[k].params, theta_grads[k], lr_theta);
        }
        adam_step(z_adam, cp.z, z_grad, cfg.lr_lambda);
        if (!cp.z.allFinite())
            throw TrainingDiverged("constrained parameters diverged at iteration " +
                                       std::to_string(iter),
                                   iter);

        if (iter % cfg.log_every == 0 || iter + 1 == cfg.iterations) {
            history.push_back({iter, total, losses, bs.weights});
            if (cfg.monitor) cfg.monitor(iter, cp);
        }
    }

    EstimationResult result;
    result.lambda_hat = cp.merged(problem.known);
    result.history = std::move(history);
    result.final_weights = bs.weights;
    result.iterations_run = cfg.iterations;
    result.reconstructed = reconstruct_states(bundle, problem.observations);
    const Eigen::VectorXd lam = cp.lambda();
    if (!lam.allFinite())
        throw TrainingDiverged("estimated parameters non-finite after training", cfg.iterations);
    for (std::size_t j = 0; j < cp.names.size(); ++j)
        result.per_param_rel_error[cp.names[j]] = param_rel_error(
            problem.true_params.at(cp.names[j]), lam[static_cast<Eigen::Index>(j)]);
    for (Eigen::Index k = 0; k < d; ++k)
        result.state_errors[spec.state_names[static_cast<std::size_t>(k)]] =
            normalized_l2(problem.reference.states.col(k), result.reconstructed.col(k));
    return result;
}

}  // namespace neuropinn
