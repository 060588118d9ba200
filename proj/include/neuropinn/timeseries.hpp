#pragma once

// Uniformly sampled signals. Time is implicit: sample i lives at t0 + i*dt,
// dt in milliseconds.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neuropinn/errors.hpp"

namespace neuropinn {

struct TimeSeries {
    double t0 = 0.0;
    double dt = 1.0;  // ms
    Eigen::VectorXd values;

    std::size_t size() const { return static_cast<std::size_t>(values.size()); }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
};

struct Trajectory {
    double t0 = 0.0;
    double dt = 1.0;  // ms
    Eigen::MatrixXd states;  // row i = state at t0 + i*dt
    std::string model_id;
    std::vector<std::string> state_names;

    std::size_t rows() const { return static_cast<std::size_t>(states.rows()); }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }

    TimeSeries column(Eigen::Index j) const {
        return TimeSeries{t0, dt, states.col(j)};
    }
};

/// Full round-trip precision for doubles in text form.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ContractViolation("cannot open for writing: " + path);
    out << "t";
    for (const auto& n : traj.state_names) out << "," << n;
    out << "\n";
    for (std::size_t i = 0; i < traj.rows(); ++i) {
        out << format_double(traj.time(i));
        for (Eigen::Index j = 0; j < traj.states.cols(); ++j)
            out << "," << format_double(traj.states(static_cast<Eigen::Index>(i), j));
        out << "\n";
    }
}

inline Trajectory read_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractViolation("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ContractViolation("empty CSV: " + path);
    Trajectory traj;
    {
        std::stringstream header(line);
        std::string cell;
        bool first = true;
        while (std::getline(header, cell, ',')) {
            if (first) {
                if (cell != "t") throw ContractViolation("CSV header must start with t: " + path);
                first = false;
            } else {
                traj.state_names.push_back(cell);
            }
        }
    }
    std::vector<double> times;
    std::vector<double> data;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(row, cell, ',')) {
            const double v = std::strtod(cell.c_str(), nullptr);
            if (col == 0)
                times.push_back(v);
            else
                data.push_back(v);
            ++col;
        }
        if (col != traj.state_names.size() + 1)
            throw ContractViolation("ragged CSV row in " + path);
    }
    if (times.size() < 2) throw ContractViolation("need at least 2 samples: " + path);
    const auto n = static_cast<Eigen::Index>(times.size());
    const auto d = static_cast<Eigen::Index>(traj.state_names.size());
    traj.t0 = times.front();
    traj.dt = (times.back() - times.front()) / static_cast<double>(n - 1);
    traj.states = Eigen::Map<
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data.data(), n, d);
    return traj;
}

}  // namespace neuropinn
