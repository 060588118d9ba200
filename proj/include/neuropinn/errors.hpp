#pragma once

#include <stdexcept>
#include <string>

namespace neuropinn {

/// Caller broke a documented precondition (wrong shape, unknown name, ...).
struct ContractViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A numeric quantity that must be finite is not.
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IntegrationBlowup : std::runtime_error {
    std::size_t step_index;
    IntegrationBlowup(const std::string& msg, std::size_t step)
        : std::runtime_error(msg), step_index(step) {}
};

struct TrainingDiverged : std::runtime_error {
    std::size_t iteration;
    TrainingDiverged(const std::string& msg, std::size_t iter)
        : std::runtime_error(msg), iteration(iter) {}
};

struct NoSignalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UndefinedMetric : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace neuropinn
