#pragma once

// Dominant-frequency extraction from the observed voltage: one-sided power
// spectrum, cumulative-energy thresholding, and band-limited reconstruction.
//
// Conventions (fixed for the whole project):
//  - physical frequency of bin k is f_k = k / (N*dt) in cycles/ms;
//  - psd[k] = w_k * |Vhat_k|^2 / N with w_k = 2 for interior bins and 1 for
//    DC/Nyquist, so sum(psd) equals N * variance of the mean-removed signal;
//  - selection excludes DC and works on energy fractions, which are
//    insensitive to the psd scaling;
//  - embedding frequencies are angular, omega = 2*pi*f in rad/ms.

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "neuropinn/errors.hpp"
#include "neuropinn/timeseries.hpp"

namespace neuropinn {

struct Spectrum {
    Eigen::VectorXd freqs;  // cycles/ms, k = 0 .. floor(N/2)
    Eigen::VectorXd psd;
    std::size_t n_samples = 0;
    double dt = 0.0;
};

struct FrequencySelection {
    double p = 0.0;                  // percent of retained spectral energy
    Eigen::VectorXd angular_freqs;   // rad/ms, sorted by descending PSD
    std::size_t m_star = 0;
    std::vector<std::size_t> bins;   // selected one-sided bin indices
};

namespace detail {

// FFTW planning is not thread-safe.
inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

inline std::vector<std::complex<double>> dft_forward(const Eigen::VectorXd& x) {
    const auto n = static_cast<std::size_t>(x.size());
    std::vector<double> in(x.data(), x.data() + n);
    std::vector<std::complex<double>> out(n / 2 + 1);
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                              reinterpret_cast<fftw_complex*>(out.data()),
                                              FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }
    return out;
}

inline Eigen::VectorXd dft_inverse(std::vector<std::complex<double>>& half, std::size_t n) {
    std::vector<double> out(n);
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_plan plan = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                              reinterpret_cast<fftw_complex*>(half.data()),
                                              out.data(), FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }
    Eigen::VectorXd r = Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(n));
    r /= static_cast<double>(n);
    return r;
}

}  // namespace detail

inline Spectrum power_spectrum(const TimeSeries& series) {
    const std::size_t n = series.size();
    if (n < 4) throw ContractViolation("power_spectrum: need at least 4 samples");
    if (!(series.dt > 0.0)) throw ContractViolation("power_spectrum: dt must be positive");

    Eigen::VectorXd centered = series.values.array() - series.values.mean();
    const auto half = detail::dft_forward(centered);

    Spectrum spec;
    spec.n_samples = n;
    spec.dt = series.dt;
    const std::size_t k_max = n / 2;
    spec.freqs.resize(static_cast<Eigen::Index>(k_max) + 1);
    spec.psd.resize(static_cast<Eigen::Index>(k_max) + 1);
    const double df = 1.0 / (static_cast<double>(n) * series.dt);
    for (std::size_t k = 0; k <= k_max; ++k) {
        spec.freqs[static_cast<Eigen::Index>(k)] = df * static_cast<double>(k);
        const bool edge = k == 0 || (n % 2 == 0 && k == k_max);
        const double w = edge ? 1.0 : 2.0;
        spec.psd[static_cast<Eigen::Index>(k)] = w * std::norm(half[k]) / static_cast<double>(n);
    }
    return spec;
}

/// Smallest set of non-DC bins, taken in descending PSD order, whose
/// cumulative energy fraction reaches p percent.
inline FrequencySelection select_dominant_frequencies(const Spectrum& spec, double p) {
    if (!(p > 0.0 && p < 100.0))
        throw ContractViolation("select_dominant_frequencies: p must lie in (0, 100)");
    const auto k_max = static_cast<std::size_t>(spec.psd.size()) - 1;
    std::vector<std::size_t> order;
    order.reserve(k_max);
    for (std::size_t k = 1; k <= k_max; ++k) order.push_back(k);
    std::stable_sort(order.begin(), order.end(), [&spec](std::size_t a, std::size_t b) {
        return spec.psd[static_cast<Eigen::Index>(a)] > spec.psd[static_cast<Eigen::Index>(b)];
    });
    const double total =
        spec.psd.sum() - spec.psd[0];
    if (!(total > 0.0)) throw NoSignalError("select_dominant_frequencies: all-zero spectrum");

    FrequencySelection sel;
    sel.p = p;
    double acc = 0.0;
    for (std::size_t k : order) {
        sel.bins.push_back(k);
        acc += spec.psd[static_cast<Eigen::Index>(k)];
        if (acc >= p / 100.0 * total) break;
    }
    sel.m_star = sel.bins.size();
    sel.angular_freqs.resize(static_cast<Eigen::Index>(sel.m_star));
    for (std::size_t i = 0; i < sel.m_star; ++i)
        sel.angular_freqs[static_cast<Eigen::Index>(i)] =
            2.0 * M_PI * spec.freqs[static_cast<Eigen::Index>(sel.bins[i])];
    return sel;
}

/// Inverse DFT keeping only the selected bins (plus conjugates) and the mean.
inline TimeSeries filtered_reconstruction(const TimeSeries& series,
                                          const FrequencySelection& sel) {
    const std::size_t n = series.size();
    const double mean = series.values.mean();
    Eigen::VectorXd centered = series.values.array() - mean;
    auto half = detail::dft_forward(centered);

    std::vector<bool> keep(half.size(), false);
    for (std::size_t k : sel.bins)
        if (k < keep.size()) keep[k] = true;
    for (std::size_t k = 0; k < half.size(); ++k)
        if (!keep[k]) half[k] = 0.0;

    TimeSeries out = series;
    out.values = detail::dft_inverse(half, n).array() + mean;
    return out;
}

}  // namespace neuropinn
