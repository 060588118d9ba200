#pragma once

// One-parameter bifurcation diagrams: equilibrium branches by pseudo-arclength
// continuation with Newton correction, stability from Jacobian eigenvalues,
// fold/Hopf events refined by bisection, and stable periodic-orbit voltage
// extrema by direct simulation.
//
// The bifurcation parameter may be a model parameter (I_app for the
// Morris-Lecar systems) or a frozen state variable (the slow variable h for
// the pBC fast subsystem); in the latter case continuation runs on the
// reduced system with that variable treated as the parameter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "neuropinn/errors.hpp"
#include "neuropinn/model.hpp"
#include "neuropinn/rng.hpp"
#include "neuropinn/sim.hpp"

namespace neuropinn {

struct EquilibriumPoint {
    double bif_param = 0.0;
    Eigen::VectorXd state;  // reduced state (frozen variable excluded)
    Eigen::VectorXd eigen_real_parts;
    bool stable = false;
};

struct BranchEvent {
    enum class Kind { Fold, Hopf };
    Kind kind = Kind::Fold;
    double bif_param = 0.0;
};

inline std::string to_string(BranchEvent::Kind k) {
    return k == BranchEvent::Kind::Fold ? "fold" : "hopf";
}

struct EquilibriumBranch {
    std::vector<EquilibriumPoint> points;
    std::vector<BranchEvent> events;
};

struct OrbitSample {
    double bif_param = 0.0;
    double v_min = 0.0;
    double v_max = 0.0;
    std::optional<double> period;
};

struct OrbitExtremaBranch {
    std::vector<OrbitSample> samples;
};

struct BifurcationDiagram {
    std::string bif_param_name;
    double range_lo = 0.0, range_hi = 0.0;
    std::vector<EquilibriumBranch> branches;
    OrbitExtremaBranch orbits;
};

struct ContinuationOptions {
    int coarse_grid = 64;
    int multistarts = 4;       // random extra Newton starts per grid value
    double newton_tol = 1e-10;
    int newton_max_iters = 50;
    double event_tol = 1e-4;   // bisection bracket width in the parameter
    int max_points = 2000;
    std::uint64_t seed = 0;
    double state0_lo = -90.0;  // search window for the first state component
    double state0_hi = 60.0;
};

namespace detail {

/// Wraps a model so continuation sees a reduced field F(x; p) where p is
/// either a model parameter or a frozen state variable.
class ContinuationSystem {
  public:
    ContinuationSystem(const ModelSpec& spec, const ModelParams& params, const std::string& name)
        : spec_(&spec), params_(params), name_(name) {
        const auto it = std::find(spec.state_names.begin(), spec.state_names.end(), name);
        if (it != spec.state_names.end()) {
            frozen_ = static_cast<int>(it - spec.state_names.begin());
        } else if (params.has(name)) {
            frozen_ = -1;
        } else {
            throw ContractViolation("bifurcation parameter is neither a state nor a parameter: " +
                                    name);
        }
        full_dim_ = static_cast<int>(spec.dim());
    }

    int dim() const { return frozen_ < 0 ? full_dim_ : full_dim_ - 1; }
    int frozen_state() const { return frozen_; }
    const ModelSpec& spec() const { return *spec_; }

    Eigen::VectorXd full_state(const Eigen::VectorXd& xr, double p) const {
        if (frozen_ < 0) return xr;
        Eigen::VectorXd x(full_dim_);
        int j = 0;
        for (int i = 0; i < full_dim_; ++i) x[i] = i == frozen_ ? p : xr[j++];
        return x;
    }

    void eval(const Eigen::VectorXd& xr, double p, Eigen::VectorXd& out) const {
        const ModelParams* prm = &params_;
        ModelParams tmp;
        if (frozen_ < 0) {
            tmp = params_;
            tmp.set(name_, p);
            prm = &tmp;
        }
        const Eigen::VectorXd x = full_state(xr, p);
        Eigen::VectorXd f(full_dim_);
        spec_->field(std::span<const double>(x.data(), x.size()), *prm,
                     std::span<double>(f.data(), f.size()));
        if (frozen_ < 0) {
            out = f;
        } else {
            out.resize(dim());
            int j = 0;
            for (int i = 0; i < full_dim_; ++i)
                if (i != frozen_) out[j++] = f[i];
        }
    }

    Eigen::MatrixXd jac_x(const Eigen::VectorXd& xr, double p) const {
        const int m = dim();
        Eigen::MatrixXd jac(m, m);
        Eigen::VectorXd xp = xr, xm = xr, fp(m), fm(m);
        for (int j = 0; j < m; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(xr[j]));
            xp[j] = xr[j] + h;
            xm[j] = xr[j] - h;
            eval(xp, p, fp);
            eval(xm, p, fm);
            jac.col(j) = (fp - fm) / (2.0 * h);
            xp[j] = xr[j];
            xm[j] = xr[j];
        }
        return jac;
    }

    Eigen::VectorXd df_dp(const Eigen::VectorXd& xr, double p) const {
        const double h = 1e-6 * std::max(1.0, std::abs(p));
        Eigen::VectorXd fp(dim()), fm(dim());
        eval(xr, p + h, fp);
        eval(xr, p - h, fm);
        return (fp - fm) / (2.0 * h);
    }

    /// Reduced model for direct simulation (orbit extrema with a frozen state).
    ModelSpec reduced_spec(double p) const {
        if (frozen_ < 0) return *spec_;
        ModelSpec red;
        red.id = spec_->id + "-reduced";
        for (int i = 0; i < full_dim_; ++i)
            if (i != frozen_) red.state_names.push_back(spec_->state_names[static_cast<std::size_t>(i)]);
        red.param_meta = spec_->param_meta;
        red.observed_index = 0;
        const ModelSpec* base = spec_;
        const int frozen = frozen_;
        const int full_dim = full_dim_;
        red.field = [base, frozen, full_dim, p](std::span<const double> xr, const ModelParams& prm,
                                                std::span<double> out) {
            Eigen::VectorXd x(full_dim);
            int j = 0;
            for (int i = 0; i < full_dim; ++i)
                x[i] = i == frozen ? p : xr[static_cast<std::size_t>(j++)];
            Eigen::VectorXd f(full_dim);
            base->field(std::span<const double>(x.data(), x.size()), prm,
                        std::span<double>(f.data(), f.size()));
            j = 0;
            for (int i = 0; i < full_dim; ++i)
                if (i != frozen) out[static_cast<std::size_t>(j++)] = f[i];
        };
        return red;
    }

    const ModelParams& base_params() const { return params_; }
    const std::string& name() const { return name_; }

  private:
    const ModelSpec* spec_;
    ModelParams params_;
    std::string name_;
    int frozen_ = -1;
    int full_dim_ = 0;
};

inline bool newton_equilibrium(const ContinuationSystem& sys, Eigen::VectorXd& x, double p,
                               double tol, int max_iters) {
    const int m = sys.dim();
    Eigen::VectorXd f(m);
    for (int it = 0; it < max_iters; ++it) {
        sys.eval(x, p, f);
        if (!f.allFinite()) return false;
        if (f.lpNorm<Eigen::Infinity>() < tol) return true;
        const Eigen::MatrixXd jac = sys.jac_x(x, p);
        const Eigen::VectorXd dx = jac.fullPivLu().solve(-f);
        if (!dx.allFinite()) return false;
        x += dx;
        if (x.lpNorm<Eigen::Infinity>() > 1e6) return false;
    }
    sys.eval(x, p, f);
    return f.allFinite() && f.lpNorm<Eigen::Infinity>() < tol;
}

/// Eigen-structure summary at an equilibrium.
struct EigInfo {
    Eigen::VectorXd real_parts;
    double max_real = 0.0;
    double max_complex_real = std::numeric_limits<double>::quiet_NaN();  // NaN if no complex pair
};

inline EigInfo eigen_info(const Eigen::MatrixXd& jac) {
    EigInfo info;
    Eigen::EigenSolver<Eigen::MatrixXd> es(jac, false);
    const auto vals = es.eigenvalues();
    info.real_parts.resize(vals.size());
    info.max_real = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < vals.size(); ++i) {
        info.real_parts[i] = vals[i].real();
        info.max_real = std::max(info.max_real, vals[i].real());
        if (std::abs(vals[i].imag()) > 1e-9) {
            if (std::isnan(info.max_complex_real))
                info.max_complex_real = vals[i].real();
            else
                info.max_complex_real = std::max(info.max_complex_real, vals[i].real());
        }
    }
    return info;
}

/// Continuation runs in scaled coordinates (voltage-like states divided by a
/// representative magnitude, the parameter by its range width) so arclength
/// steps and dedup tolerances behave uniformly across models.
struct Scaling {
    Eigen::VectorXd sx;
    double sp = 1.0;

    static Scaling make(const ContinuationSystem& sys, double range_width) {
        Scaling s;
        s.sx = Eigen::VectorXd::Ones(sys.dim());
        int j = 0;
        const auto& names = sys.spec().state_names;
        for (int i = 0; i < static_cast<int>(names.size()); ++i) {
            if (i == sys.frozen_state()) continue;
            if (names[static_cast<std::size_t>(i)] == "V") s.sx[j] = 50.0;
            ++j;
        }
        s.sp = range_width;
        return s;
    }

    double dist(const Eigen::VectorXd& xa, double pa, const Eigen::VectorXd& xb, double pb) const {
        const double dp = (pa - pb) / sp;
        double d2 = dp * dp;
        for (Eigen::Index i = 0; i < xa.size(); ++i) {
            const double dx = (xa[i] - xb[i]) / sx[i];
            d2 += dx * dx;
        }
        return std::sqrt(d2);
    }
};

/// Nullspace tangent of the bordered system in scaled coordinates, oriented
/// along `orient`.
inline Eigen::VectorXd branch_tangent(const ContinuationSystem& sys, const Scaling& scal,
                                      const Eigen::VectorXd& x, double p,
                                      const Eigen::VectorXd& orient) {
    const int m = sys.dim();
    Eigen::MatrixXd a(m, m + 1);
    a.leftCols(m) = sys.jac_x(x, p) * scal.sx.asDiagonal();
    a.col(m) = sys.df_dp(x, p) * scal.sp;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    Eigen::VectorXd tau = svd.matrixV().col(m);
    tau.normalize();
    if (orient.size() == tau.size() && tau.dot(orient) < 0.0) tau = -tau;
    return tau;
}

/// Newton corrector for the pseudo-arclength system; (x, p) stay raw while
/// the arclength constraint lives in scaled coordinates.
inline bool correct_arclength(const ContinuationSystem& sys, const Scaling& scal,
                              Eigen::VectorXd& x, double& p, const Eigen::VectorXd& x0, double p0,
                              const Eigen::VectorXd& tau, double ds, double tol, int max_iters) {
    const int m = sys.dim();
    Eigen::VectorXd f(m), rhs(m + 1), step(m + 1);
    Eigen::MatrixXd jac(m + 1, m + 1);
    for (int it = 0; it < max_iters; ++it) {
        sys.eval(x, p, f);
        if (!f.allFinite()) return false;
        double arc = -ds + tau[m] * (p - p0) / scal.sp;
        for (int i = 0; i < m; ++i) arc += tau[i] * (x[i] - x0[i]) / scal.sx[i];
        if (f.lpNorm<Eigen::Infinity>() < tol && std::abs(arc) < 1e-10) return true;
        jac.topLeftCorner(m, m) = sys.jac_x(x, p) * scal.sx.asDiagonal();
        jac.topRightCorner(m, 1) = sys.df_dp(x, p) * scal.sp;
        jac.bottomRows(1) = tau.transpose();
        rhs.head(m) = -f;
        rhs[m] = -arc;
        step = jac.fullPivLu().solve(rhs);
        if (!step.allFinite()) return false;
        x += scal.sx.asDiagonal() * step.head(m);
        p += scal.sp * step[m];
        if (x.lpNorm<Eigen::Infinity>() > 1e6) return false;
    }
    return false;
}

/// Solve F(x, p) = 0 with state component k pinned to `value`; unknowns are
/// the remaining state components and p. Used for fold refinement.
inline bool solve_pinned(const ContinuationSystem& sys, int k, double value, Eigen::VectorXd& x,
                         double& p, double tol, int max_iters) {
    const int m = sys.dim();
    x[k] = value;
    Eigen::VectorXd f(m);
    for (int it = 0; it < max_iters; ++it) {
        sys.eval(x, p, f);
        if (!f.allFinite()) return false;
        if (f.lpNorm<Eigen::Infinity>() < tol) return true;
        Eigen::MatrixXd jac(m, m);  // columns: free state comps, then p
        const Eigen::MatrixXd jx = sys.jac_x(x, p);
        int c = 0;
        for (int j = 0; j < m; ++j)
            if (j != k) jac.col(c++) = jx.col(j);
        jac.col(m - 1) = sys.df_dp(x, p);
        const Eigen::VectorXd step = jac.fullPivLu().solve(-f);
        if (!step.allFinite()) return false;
        c = 0;
        for (int j = 0; j < m; ++j)
            if (j != k) x[j] += step[c++];
        p += step[m - 1];
        if (x.lpNorm<Eigen::Infinity>() > 1e6 || !std::isfinite(p)) return false;
    }
    return false;
}

inline Eigen::VectorXd nullcline_guess(const ModelSpec& spec, const ModelParams& params, double v,
                                       int frozen) {
    Eigen::VectorXd x(spec.dim());
    x.setZero();
    x[0] = v;
    if (spec.id == "sml" || spec.id == "bml") {
        x[1] = 0.5 * (1.0 + std::tanh((v - params.at("V3")) / params.at("V4")));
        if (spec.id == "bml") {
            const double m_inf = 0.5 * (1.0 + std::tanh((v - params.at("V1")) / params.at("V2")));
            const double ica = params.at("g_Ca") * m_inf * (v - params.at("E_Ca"));
            x[2] = -params.at("mu") * ica;  // dCa/dt = 0
        }
    } else if (spec.id == "pbc") {
        x[1] = 1.0 / (1.0 + std::exp((v - params.at("theta_n")) / params.at("sigma_n")));
        x[2] = 1.0 / (1.0 + std::exp((v - params.at("theta_h")) / params.at("sigma_h")));
    }
    if (frozen >= 0) {
        Eigen::VectorXd xr(spec.dim() - 1);
        int j = 0;
        for (int i = 0; i < static_cast<int>(spec.dim()); ++i)
            if (i != frozen) xr[j++] = x[i];
        return xr;
    }
    return x;
}

}  // namespace detail

/// Continue all equilibrium branches of F(.; p) over p in [lo, hi].
inline std::vector<EquilibriumBranch> continue_equilibria(const ModelSpec& spec,
                                                          const ModelParams& params,
                                                          const std::string& bif_param_name,
                                                          double lo, double hi,
                                                          const ContinuationOptions& opt = {}) {
    if (!(hi > lo)) throw ContractViolation("continue_equilibria: empty parameter range");
    detail::ContinuationSystem sys(spec, params, bif_param_name);
    const int m = sys.dim();
    const double span = hi - lo;
    const detail::Scaling scal = detail::Scaling::make(sys, span);
    const double ds_init = 0.01, ds_max = 0.03, ds_min = 1e-10;  // scaled arclength
    const double dedup_tol = 2.5 * ds_max;

    // registry of accepted points from completed branches (dedup of seeds and
    // merge-stop of continuations that run into an existing branch)
    std::vector<std::pair<double, Eigen::VectorXd>> registry;
    auto near_registry = [&](double p, const Eigen::VectorXd& x, std::size_t limit) {
        for (std::size_t r = 0; r < limit; ++r)
            if (scal.dist(registry[r].second, registry[r].first, x, p) < dedup_tol) return true;
        return false;
    };

    // coarse grid of Newton solves with deterministic multi-starts
    std::vector<std::pair<double, Eigen::VectorXd>> seeds;
    std::uint64_t draw = 0;
    for (int gi = 0; gi < opt.coarse_grid; ++gi) {
        const double p = lo + span * (static_cast<double>(gi) + 0.5) /
                                  static_cast<double>(opt.coarse_grid);
        std::vector<Eigen::VectorXd> starts;
        for (double v = opt.state0_lo; v <= opt.state0_hi + 1e-12;
             v += (opt.state0_hi - opt.state0_lo) / 6.0)
            starts.push_back(detail::nullcline_guess(spec, params, v, sys.frozen_state()));
        for (int r = 0; r < opt.multistarts; ++r) {
            Eigen::VectorXd x(m);
            for (int j = 0; j < m; ++j)
                x[j] = rng::uniform(opt.seed, rng::stream::kMultistart, draw++,
                                    j == 0 ? opt.state0_lo : -1.0, j == 0 ? opt.state0_hi : 2.0);
            starts.push_back(x);
        }
        for (auto& x : starts) {
            Eigen::VectorXd xi = x;
            if (!detail::newton_equilibrium(sys, xi, p, opt.newton_tol, opt.newton_max_iters))
                continue;
            bool dup = false;
            for (const auto& [sp, sx] : seeds)
                if (std::abs(sp - p) < 1e-9 && (sx - xi).lpNorm<Eigen::Infinity>() < 1e-6) dup = true;
            if (!dup) seeds.emplace_back(p, xi);
        }
    }

    std::vector<EquilibriumBranch> branches;
    auto make_point = [&sys](const Eigen::VectorXd& x, double p) {
        EquilibriumPoint pt;
        pt.bif_param = p;
        pt.state = x;
        const auto info = detail::eigen_info(sys.jac_x(x, p));
        pt.eigen_real_parts = info.real_parts;
        pt.stable = info.max_real < 0.0;
        return pt;
    };

    for (const auto& [p_seed, x_seed] : seeds) {
        const std::size_t other_branches_end = registry.size();
        if (near_registry(p_seed, x_seed, other_branches_end)) continue;
        EquilibriumBranch branch;
        std::vector<Eigen::VectorXd> tangents;  // parallel to branch.points, traversal-oriented

        for (int dir = 0; dir < 2; ++dir) {
            Eigen::VectorXd x = x_seed;
            double p = p_seed;
            Eigen::VectorXd orient = Eigen::VectorXd::Zero(m + 1);
            orient[m] = dir == 0 ? 1.0 : -1.0;
            Eigen::VectorXd tau = detail::branch_tangent(sys, scal, x, p, orient);
            double ds = ds_init;
            std::vector<EquilibriumPoint> half;
            std::vector<Eigen::VectorXd> half_tau;

            // include the seed point once (forward direction only)
            if (dir == 0) {
                half.push_back(make_point(x, p));
                half_tau.push_back(tau);
                registry.emplace_back(p, x);
            }

            int steps = 0;
            while (steps < opt.max_points) {
                Eigen::VectorXd xn = x + ds * (scal.sx.array() * tau.head(m).array()).matrix();
                double pn = p + ds * scal.sp * tau[m];
                if (!detail::correct_arclength(sys, scal, xn, pn, x, p, tau, ds, opt.newton_tol,
                                               opt.newton_max_iters)) {
                    ds *= 0.5;
                    if (ds < ds_min) break;
                    continue;
                }
                if (pn < lo - 1e-12 || pn > hi + 1e-12) break;
                if (near_registry(pn, xn, other_branches_end)) break;  // ran into another branch
                x = xn;
                p = pn;
                half.push_back(make_point(x, p));
                registry.emplace_back(p, x);
                tau = detail::branch_tangent(sys, scal, x, p, tau);
                half_tau.push_back(tau);
                ds = std::min(ds * 1.3, ds_max);
                ++steps;
            }

            if (dir == 0) {
                branch.points = half;
                tangents = half_tau;
            } else {
                // reverse the backward half and flip its tangents so every
                // stored tangent follows the merged traversal order
                std::reverse(half.begin(), half.end());
                std::reverse(half_tau.begin(), half_tau.end());
                for (auto& t : half_tau) t = -t;
                half.insert(half.end(), branch.points.begin(), branch.points.end());
                half_tau.insert(half_tau.end(), tangents.begin(), tangents.end());
                branch.points = std::move(half);
                tangents = std::move(half_tau);
            }
        }
        if (branch.points.size() < 2) continue;

        // fold events: sign change of the tangent's parameter component
        for (std::size_t i = 0; i + 1 < branch.points.size(); ++i) {
            const double ta = tangents[i][m], tb = tangents[i + 1][m];
            if (ta * tb >= 0.0) continue;
            // near the fold the branch is parameterized by its dominant state
            // component; bisect on it and watch the parameter bracket collapse
            int k = 0;
            tangents[i].head(m).cwiseAbs().maxCoeff(&k);
            double va = branch.points[i].state[k], vb = branch.points[i + 1].state[k];
            double pa = branch.points[i].bif_param, pb = branch.points[i + 1].bif_param;
            Eigen::VectorXd x = branch.points[i].state;
            double p = pa;
            const double sign_a = ta;
            for (int it = 0; it < 80 && std::abs(pa - pb) > opt.event_tol; ++it) {
                const double vm = 0.5 * (va + vb);
                if (!detail::solve_pinned(sys, k, vm, x, p, opt.newton_tol, opt.newton_max_iters))
                    break;
                const Eigen::VectorXd tm = detail::branch_tangent(sys, scal, x, p, tangents[i]);
                if (tm[m] * sign_a > 0.0) {
                    va = vm;
                    pa = p;
                } else {
                    vb = vm;
                    pb = p;
                }
            }
            branch.events.push_back({BranchEvent::Kind::Fold, 0.5 * (pa + pb)});
        }

        // Hopf events: a complex pair's real part changes sign
        for (std::size_t i = 0; i + 1 < branch.points.size(); ++i) {
            const auto& a = branch.points[i];
            const auto& b = branch.points[i + 1];
            const auto ia = detail::eigen_info(sys.jac_x(a.state, a.bif_param));
            const auto ib = detail::eigen_info(sys.jac_x(b.state, b.bif_param));
            if (std::isnan(ia.max_complex_real) || std::isnan(ib.max_complex_real)) continue;
            if (ia.max_complex_real * ib.max_complex_real >= 0.0) continue;
            double pa = a.bif_param, pb = b.bif_param;
            Eigen::VectorXd xa = a.state, xb = b.state;
            double sign_a = ia.max_complex_real;
            for (int it = 0; it < 80 && std::abs(pb - pa) > opt.event_tol; ++it) {
                const double pm = 0.5 * (pa + pb);
                Eigen::VectorXd xm = 0.5 * (xa + xb);
                if (!detail::newton_equilibrium(sys, xm, pm, opt.newton_tol, opt.newton_max_iters))
                    break;
                const auto im = detail::eigen_info(sys.jac_x(xm, pm));
                if (std::isnan(im.max_complex_real)) break;
                if (im.max_complex_real * sign_a > 0.0) {
                    pa = pm;
                    xa = xm;
                } else {
                    pb = pm;
                    xb = xm;
                }
            }
            branch.events.push_back({BranchEvent::Kind::Hopf, 0.5 * (pa + pb)});
        }

        branches.push_back(std::move(branch));
    }
    return branches;
}

struct OrbitOptions {
    double t_transient = 2000.0;  // ms
    double t_measure = 2000.0;    // ms
    double dt = 0.1;              // ms
};

inline OrbitOptions default_orbit_options(const std::string& model_id) {
    if (model_id == "pbc") return {4000.0, 4000.0, 0.01};
    return {2000.0, 2000.0, 0.1};
}

/// Simulate at one parameter value and report the voltage envelope plus an
/// estimated period (upward crossings of the mid-range level; none when the
/// attractor is quiescent).
inline OrbitSample orbit_extrema(const ModelSpec& spec, const ModelParams& params,
                                 const std::string& bif_param_name, double value,
                                 const OrbitOptions& opt) {
    if (!(opt.t_transient > 0.0) || !(opt.t_measure > 0.0))
        throw ContractViolation("orbit_extrema: durations must be positive");
    detail::ContinuationSystem sys(spec, params, bif_param_name);
    ModelSpec run_spec;
    ModelParams run_params = params;
    Eigen::VectorXd x0;
    if (sys.frozen_state() >= 0) {
        run_spec = sys.reduced_spec(value);
        const Eigen::VectorXd full0 = initial_state(spec, params);
        x0.resize(spec.dim() - 1);
        int j = 0;
        for (int i = 0; i < static_cast<int>(spec.dim()); ++i)
            if (i != sys.frozen_state()) x0[j++] = full0[i];
    } else {
        run_spec = spec;
        run_params.set(bif_param_name, value);
        x0 = initial_state(spec, run_params);
    }

    const auto n_trans = static_cast<std::size_t>(std::ceil(opt.t_transient / opt.dt));
    const auto n_meas = static_cast<std::size_t>(std::ceil(opt.t_measure / opt.dt));
    const Trajectory warm = integrate(run_spec, run_params, x0, opt.dt, n_trans);
    const Trajectory meas = integrate(run_spec, run_params,
                                      warm.states.row(warm.states.rows() - 1).transpose(), opt.dt,
                                      n_meas, warm.time(warm.rows() - 1));

    OrbitSample s;
    s.bif_param = value;
    const auto v = meas.states.col(0);
    s.v_min = v.minCoeff();
    s.v_max = v.maxCoeff();
    if (s.v_max - s.v_min > 1e-6) {
        const double mid = 0.5 * (s.v_min + s.v_max);
        std::vector<double> crossings;
        for (Eigen::Index i = 1; i < v.size(); ++i) {
            if (v[i - 1] < mid && v[i] >= mid) {
                const double frac = (mid - v[i - 1]) / (v[i] - v[i - 1]);
                crossings.push_back(meas.time(static_cast<std::size_t>(i - 1)) + frac * opt.dt);
            }
        }
        if (crossings.size() >= 3) {
            const double total = crossings.back() - crossings.front();
            s.period = total / static_cast<double>(crossings.size() - 1);
        }
    }
    return s;
}

inline BifurcationDiagram sweep_diagram(const ModelSpec& spec, const ModelParams& params,
                                        const std::string& bif_param_name, double lo, double hi,
                                        int n_orbit_samples,
                                        const ContinuationOptions& copt = {},
                                        std::optional<OrbitOptions> oopt = std::nullopt) {
    BifurcationDiagram diag;
    diag.bif_param_name = bif_param_name;
    diag.range_lo = lo;
    diag.range_hi = hi;
    diag.branches = continue_equilibria(spec, params, bif_param_name, lo, hi, copt);
    const OrbitOptions orbit_opt = oopt ? *oopt : default_orbit_options(spec.id);
    for (int i = 0; i < n_orbit_samples; ++i) {
        const double p = n_orbit_samples == 1
                             ? lo
                             : lo + (hi - lo) * static_cast<double>(i) /
                                        static_cast<double>(n_orbit_samples - 1);
        diag.orbits.samples.push_back(orbit_extrema(spec, params, bif_param_name, p, orbit_opt));
    }
    return diag;
}

struct DiagramDistance {
    double orbit_term = 0.0;         // mean |dv_min| + |dv_max| over the shared grid
    double equilibrium_hausdorff = 0.0;  // symmetric, in (bif_param, V) space
};

inline DiagramDistance diagram_distance(const BifurcationDiagram& a, const BifurcationDiagram& b) {
    if (a.orbits.samples.size() != b.orbits.samples.size())
        throw ContractViolation("diagram_distance: orbit grids differ");
    DiagramDistance d;
    for (std::size_t i = 0; i < a.orbits.samples.size(); ++i) {
        d.orbit_term += std::abs(a.orbits.samples[i].v_min - b.orbits.samples[i].v_min) +
                        std::abs(a.orbits.samples[i].v_max - b.orbits.samples[i].v_max);
    }
    if (!a.orbits.samples.empty()) d.orbit_term /= static_cast<double>(a.orbits.samples.size());

    auto cloud = [](const BifurcationDiagram& diag) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& br : diag.branches)
            for (const auto& pt : br.points) pts.emplace_back(pt.bif_param, pt.state[0]);
        return pts;
    };
    const auto ca = cloud(a), cb = cloud(b);
    auto directed = [](const std::vector<std::pair<double, double>>& from,
                       const std::vector<std::pair<double, double>>& to) {
        double worst = 0.0;
        for (const auto& [p, v] : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [q, w] : to)
                best = std::min(best, std::hypot(p - q, v - w));
            worst = std::max(worst, best);
        }
        return worst;
    };
    if (!ca.empty() && !cb.empty())
        d.equilibrium_hausdorff = std::max(directed(ca, cb), directed(cb, ca));
    return d;
}

/// All events of one kind across the branches, sorted by parameter.
inline std::vector<double> diagram_events(const BifurcationDiagram& diag, BranchEvent::Kind kind) {
    std::vector<double> out;
    for (const auto& br : diag.branches)
        for (const auto& ev : br.events)
            if (ev.kind == kind) out.push_back(ev.bif_param);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace neuropinn
