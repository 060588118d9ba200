#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "neuropinn/errors.hpp"

namespace neuropinn {

/// Staircase exponential decay: lr(k) = initial * factor^floor(k / every).
struct LrSchedule {
    double initial = 1e-3;
    double decay_factor = 0.5;
    std::int64_t decay_every = 10000;

    double at(std::int64_t k) const {
        if (decay_every <= 0) return initial;
        return initial * std::pow(decay_factor, static_cast<double>(k / decay_every));
    }

    static LrSchedule constant(double lr) { return {lr, 1.0, 0}; }
};

struct AdamState {
    Eigen::VectorXd m, v;
    std::int64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;

    explicit AdamState(Eigen::Index n = 0)
        : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// Bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads,
                      double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ContractViolation("adam_step: shape mismatch");
    ++state.step_count;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v.array() =
        state.beta2 * state.v.array() + (1.0 - state.beta2) * grads.array().square();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    params.array() -=
        lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps_adam);
}

}  // namespace neuropinn
