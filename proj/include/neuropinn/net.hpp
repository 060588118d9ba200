#pragma once

// Fourier-feature MLP surrogate for one state variable.
//
// Input is a sinusoidal embedding of time (no raw-t channel): fixed
// frequencies come from the voltage spectrum, trainable ones are appended for
// unobserved variables. Every layer is factorized as W = diag(exp(s)) * W_N
// with s over the layer input width, so the effective weight scale and
// direction train independently.
//
// Differentiation is forward-mode in the scalar t (a value/tangent pair is
// pushed through the whole net) composed with reverse-mode over parameters:
// backward() consumes adjoints for both the output value and its time
// derivative and yields exact gradients for W_N, s, b and the trainable
// frequencies.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "neuropinn/errors.hpp"
#include "neuropinn/rng.hpp"

namespace neuropinn {

enum class OutputMap { Identity, Sigmoid, Softplus };

inline std::string to_string(OutputMap m) {
    switch (m) {
        case OutputMap::Identity: return "identity";
        case OutputMap::Sigmoid: return "sigmoid";
        case OutputMap::Softplus: return "softplus";
    }
    return "identity";
}

inline OutputMap output_map_from_string(const std::string& s) {
    if (s == "identity") return OutputMap::Identity;
    if (s == "sigmoid") return OutputMap::Sigmoid;
    if (s == "softplus") return OutputMap::Softplus;
    throw ContractViolation("unknown output map: " + s);
}

struct FourierEmbedding {
    Eigen::VectorXd fixed_freqs;   // rad/ms
    std::size_t n_trainable = 0;   // trainable values live in the parameter vector

    std::size_t n_freqs() const {
        return static_cast<std::size_t>(fixed_freqs.size()) + n_trainable;
    }
    std::size_t dim() const { return 2 * n_freqs(); }
};

class FourierNet {
  public:
    struct LayerShape {
        Eigen::Index in = 0, out = 0;
        Eigen::Index s_off = 0, w_off = 0, b_off = 0;
    };

    FourierEmbedding embedding;
    std::vector<Eigen::Index> hidden_widths;
    OutputMap output_map = OutputMap::Identity;
    Eigen::VectorXd params;

    FourierNet() = default;
    FourierNet(FourierEmbedding emb, std::vector<Eigen::Index> hidden, OutputMap om)
        : embedding(std::move(emb)), hidden_widths(std::move(hidden)), output_map(om) {
        build_layout();
        params = Eigen::VectorXd::Zero(n_params_);
    }

    Eigen::Index n_params() const { return n_params_; }
    const std::vector<LayerShape>& layers() const { return layers_; }

    double trainable_freq(std::size_t j) const { return params[static_cast<Eigen::Index>(j)]; }

    /// Angular frequency of global feature-pair q (fixed first, then trainable).
    double freq(std::size_t q) const {
        const auto nf = static_cast<std::size_t>(embedding.fixed_freqs.size());
        return q < nf ? embedding.fixed_freqs[static_cast<Eigen::Index>(q)]
                      : params[static_cast<Eigen::Index>(q - nf)];
    }

  private:
    void build_layout() {
        layers_.clear();
        Eigen::Index off = static_cast<Eigen::Index>(embedding.n_trainable);
        Eigen::Index in = static_cast<Eigen::Index>(embedding.dim());
        auto push = [&](Eigen::Index out) {
            LayerShape l;
            l.in = in;
            l.out = out;
            l.s_off = off;
            l.w_off = off + in;
            l.b_off = off + in + in * out;
            off = l.b_off + out;
            layers_.push_back(l);
            in = out;
        };
        for (Eigen::Index w : hidden_widths) push(w);
        push(1);
        n_params_ = off;
    }

    std::vector<LayerShape> layers_;
    Eigen::Index n_params_ = 0;
};

/// Per-batch evaluation cache; reuse across iterations to avoid allocation.
struct NetBatch {
    Eigen::VectorXd t;
    Eigen::MatrixXd feats, dfeats;
    std::vector<Eigen::VectorXd> es;           // exp(s) per layer
    std::vector<Eigen::MatrixXd> u, udot;      // scaled layer inputs
    std::vector<Eigen::MatrixXd> a, adot;      // activations (a.back() unused)
    Eigen::VectorXd value, dvalue;
    Eigen::VectorXd sig_out;                   // sigma(z) of output layer (softplus only)
    bool has_tangent = false;

    // scratch for backward
    Eigen::MatrixXd gz, gzdot, gu, gudot, ga, gadot;
};

namespace detail {

inline void fill_embedding(const FourierNet& net, const Eigen::VectorXd& t, NetBatch& ws,
                           bool with_tangent) {
    const auto b = t.size();
    const auto nf = static_cast<Eigen::Index>(net.embedding.n_freqs());
    ws.t = t;
    ws.feats.resize(b, 2 * nf);
    if (with_tangent) ws.dfeats.resize(b, 2 * nf);
    for (Eigen::Index q = 0; q < nf; ++q) {
        const double w = net.freq(static_cast<std::size_t>(q));
        for (Eigen::Index i = 0; i < b; ++i) {
            const double arg = w * t[i];
            const double s = std::sin(arg);
            const double c = std::cos(arg);
            ws.feats(i, 2 * q) = s;
            ws.feats(i, 2 * q + 1) = c;
            if (with_tangent) {
                ws.dfeats(i, 2 * q) = w * c;
                ws.dfeats(i, 2 * q + 1) = -w * s;
            }
        }
    }
}

}  // namespace detail

/// Batched forward pass; fills the workspace so backward_batch can run.
/// With with_tangent the exact time derivative is propagated alongside.
inline void forward_batch(const FourierNet& net, const Eigen::VectorXd& t, NetBatch& ws,
                          bool with_tangent) {
    const auto b = t.size();
    const auto& layers = net.layers();
    const std::size_t nl = layers.size();
    ws.has_tangent = with_tangent;
    ws.es.resize(nl);
    ws.u.resize(nl);
    ws.udot.resize(nl);
    ws.a.resize(nl);
    ws.adot.resize(nl);
    detail::fill_embedding(net, t, ws, with_tangent);

    const Eigen::MatrixXd* x = &ws.feats;
    const Eigen::MatrixXd* xdot = &ws.dfeats;
    for (std::size_t l = 0; l < nl; ++l) {
        const auto& L = layers[l];
        ws.es[l] = net.params.segment(L.s_off, L.in).array().exp();
        const auto W = Eigen::Map<const Eigen::MatrixXd>(net.params.data() + L.w_off, L.in, L.out);
        const auto bias = net.params.segment(L.b_off, L.out);

        ws.u[l] = x->array().rowwise() * ws.es[l].transpose().array();
        Eigen::MatrixXd& z = ws.a[l];  // reuse activation storage for z, overwrite in place
        z.noalias() = ws.u[l] * W;
        z.rowwise() += bias.transpose();
        if (with_tangent) {
            ws.udot[l] = xdot->array().rowwise() * ws.es[l].transpose().array();
            ws.adot[l].noalias() = ws.udot[l] * W;
        }

        const bool last = l + 1 == nl;
        if (!last) {
            // hidden sigmoid; adot currently holds zdot
            ws.a[l] = (1.0 + (-z.array()).exp()).inverse();
            if (with_tangent)
                ws.adot[l].array() *= ws.a[l].array() * (1.0 - ws.a[l].array());
            x = &ws.a[l];
            xdot = &ws.adot[l];
        } else {
            switch (net.output_map) {
                case OutputMap::Identity:
                    ws.value = z.col(0);
                    if (with_tangent) ws.dvalue = ws.adot[l].col(0);
                    break;
                case OutputMap::Sigmoid:
                    ws.value = (1.0 + (-z.col(0).array()).exp()).inverse();
                    if (with_tangent)
                        ws.dvalue = ws.adot[l].col(0).array() * ws.value.array() *
                                    (1.0 - ws.value.array());
                    break;
                case OutputMap::Softplus: {
                    ws.sig_out = (1.0 + (-z.col(0).array()).exp()).inverse();
                    // stable log(1 + e^z)
                    ws.value = z.col(0).array().max(0.0) +
                               (1.0 + (-z.col(0).array().abs()).exp()).log();
                    if (with_tangent) ws.dvalue = ws.adot[l].col(0).array() * ws.sig_out.array();
                    break;
                }
            }
        }
    }
    if (b == 0) throw ContractViolation("forward_batch: empty batch");
}

/// Reverse pass over the (value, tangent) computation. `abar` and `adotbar`
/// are per-sample adjoints of the output value and its time derivative;
/// gradients are summed into `grad` (layout identical to net.params).
/// Pass adotbar = nullptr when the forward ran without tangents.
inline void backward_batch(const FourierNet& net, NetBatch& ws, const Eigen::VectorXd& abar,
                           const Eigen::VectorXd* adotbar, Eigen::VectorXd& grad) {
    if (grad.size() != net.n_params())
        throw ContractViolation("backward_batch: gradient buffer size mismatch");
    const auto& layers = net.layers();
    const std::size_t nl = layers.size();
    const auto b = ws.t.size();
    const bool tangent = ws.has_tangent && adotbar != nullptr;
    if ((adotbar != nullptr) && !ws.has_tangent)
        throw ContractViolation("backward_batch: tangent adjoint without tangent forward");

    // Output map: produce gz, gzdot (B x 1).
    ws.gz.resize(b, 1);
    ws.gzdot.resize(b, 1);
    switch (net.output_map) {
        case OutputMap::Identity:
            ws.gz.col(0) = abar;
            if (tangent) ws.gzdot.col(0) = *adotbar;
            break;
        case OutputMap::Sigmoid: {
            const auto sp = (ws.value.array() * (1.0 - ws.value.array())).eval();
            ws.gz.col(0) = abar.array() * sp;
            if (tangent) {
                ws.gz.col(0).array() +=
                    adotbar->array() * ws.dvalue.array() * (1.0 - 2.0 * ws.value.array());
                ws.gzdot.col(0) = adotbar->array() * sp;
            }
            break;
        }
        case OutputMap::Softplus: {
            ws.gz.col(0) = abar.array() * ws.sig_out.array();
            if (tangent) {
                ws.gz.col(0).array() +=
                    adotbar->array() * ws.dvalue.array() * (1.0 - ws.sig_out.array());
                ws.gzdot.col(0) = adotbar->array() * ws.sig_out.array();
            }
            break;
        }
    }

    for (std::size_t li = nl; li-- > 0;) {
        const auto& L = layers[li];
        const auto W = Eigen::Map<const Eigen::MatrixXd>(net.params.data() + L.w_off, L.in, L.out);
        auto gW = Eigen::Map<Eigen::MatrixXd>(grad.data() + L.w_off, L.in, L.out);
        auto gb = grad.segment(L.b_off, L.out);
        auto gs = grad.segment(L.s_off, L.in);
        const Eigen::MatrixXd& x = li == 0 ? ws.feats : ws.a[li - 1];
        const Eigen::MatrixXd* xdot = li == 0 ? &ws.dfeats : &ws.adot[li - 1];

        gW.noalias() += ws.u[li].transpose() * ws.gz;
        gb += ws.gz.colwise().sum().transpose();
        ws.gu.noalias() = ws.gz * W.transpose();
        if (tangent) {
            gW.noalias() += ws.udot[li].transpose() * ws.gzdot;
            ws.gudot.noalias() = ws.gzdot * W.transpose();
            gs.array() += ws.es[li].array() *
                          ((x.array() * ws.gu.array()) + (xdot->array() * ws.gudot.array()))
                              .colwise()
                              .sum()
                              .transpose();
        } else {
            gs.array() +=
                ws.es[li].array() * (x.array() * ws.gu.array()).colwise().sum().transpose();
        }

        if (li == 0) break;
        // propagate to previous activation, then through its sigmoid
        ws.ga = ws.gu.array().rowwise() * ws.es[li].transpose().array();
        const auto& ap = ws.a[li - 1];
        if (tangent) {
            ws.gadot = ws.gudot.array().rowwise() * ws.es[li].transpose().array();
            const auto sp = (ap.array() * (1.0 - ap.array())).eval();
            ws.gz = (ws.ga.array() * sp +
                     ws.gadot.array() * ws.adot[li - 1].array() * (1.0 - 2.0 * ap.array()))
                        .matrix();
            ws.gzdot = (ws.gadot.array() * sp).matrix();
        } else {
            ws.gz = (ws.ga.array() * ap.array() * (1.0 - ap.array())).matrix();
        }
    }

    // Embedding: gradients reach trainable frequencies only.
    if (net.embedding.n_trainable > 0) {
        // gu/gudot currently hold layer-0 values; map back through the input scaling
        ws.ga = ws.gu.array().rowwise() * ws.es[0].transpose().array();
        if (tangent) ws.gadot = ws.gudot.array().rowwise() * ws.es[0].transpose().array();
        const auto nf_fixed = static_cast<Eigen::Index>(net.embedding.fixed_freqs.size());
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(net.embedding.n_trainable); ++j) {
            const Eigen::Index q = nf_fixed + j;
            const double nu = net.params[j];
            double g = 0.0;
            for (Eigen::Index i = 0; i < b; ++i) {
                const double s = ws.feats(i, 2 * q);
                const double c = ws.feats(i, 2 * q + 1);
                const double ti = ws.t[i];
                g += ws.ga(i, 2 * q) * ti * c - ws.ga(i, 2 * q + 1) * ti * s;
                if (tangent) {
                    g += ws.gadot(i, 2 * q) * (c - nu * ti * s);
                    g += ws.gadot(i, 2 * q + 1) * (-s - nu * ti * c);
                }
            }
            grad[j] += g;
        }
    }
}

// ---------------------------------------------------------------------------
// Scalar convenience wrappers (tests and spot evaluation).

inline double forward(const FourierNet& net, double t) {
    NetBatch ws;
    Eigen::VectorXd tv(1);
    tv[0] = t;
    forward_batch(net, tv, ws, false);
    return ws.value[0];
}

inline std::pair<double, double> forward_dt(const FourierNet& net, double t) {
    NetBatch ws;
    Eigen::VectorXd tv(1);
    tv[0] = t;
    forward_batch(net, tv, ws, true);
    return {ws.value[0], ws.dvalue[0]};
}

inline Eigen::VectorXd backward(const FourierNet& net, double t, double adjoint_value,
                                double adjoint_dvalue_dt) {
    NetBatch ws;
    Eigen::VectorXd tv(1);
    tv[0] = t;
    forward_batch(net, tv, ws, true);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.n_params());
    Eigen::VectorXd av(1), ad(1);
    av[0] = adjoint_value;
    ad[0] = adjoint_dvalue_dt;
    backward_batch(net, ws, av, &ad, grad);
    return grad;
}

// ---------------------------------------------------------------------------
// Initialization

struct RwfInit {
    double mu = 0.5;
    double sigma = 0.1;
};

inline std::uint64_t net_stream(std::size_t net_index, std::uint64_t substream) {
    return (rng::stream::kNetInit << 16) | (static_cast<std::uint64_t>(net_index) << 2) | substream;
}

/// Glorot-uniform W_N and b, N(mu, sigma^2) scales, trainable frequencies
/// uniform over [freq_lo, freq_hi]. Deterministic in (seed, net_index).
inline FourierNet init_network(FourierEmbedding emb, const std::vector<Eigen::Index>& hidden,
                               OutputMap om, const RwfInit& rwf, std::uint64_t seed,
                               std::size_t net_index, double freq_lo = 0.0, double freq_hi = 0.0) {
    FourierNet net(std::move(emb), hidden, om);
    std::uint64_t c_freq = 0, c_s = 0, c_w = 0, c_b = 0;
    for (std::size_t j = 0; j < net.embedding.n_trainable; ++j)
        net.params[static_cast<Eigen::Index>(j)] =
            rng::uniform(seed, net_stream(net_index, 0), c_freq++, freq_lo, freq_hi);
    for (const auto& L : net.layers()) {
        for (Eigen::Index i = 0; i < L.in; ++i)
            net.params[L.s_off + i] =
                rwf.mu + rwf.sigma * rng::normal(seed, net_stream(net_index, 1), c_s++);
        const double lim = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
        for (Eigen::Index k = 0; k < L.in * L.out; ++k)
            net.params[L.w_off + k] =
                rng::uniform(seed, net_stream(net_index, 2), c_w++, -lim, lim);
        for (Eigen::Index k = 0; k < L.out; ++k)
            net.params[L.b_off + k] =
                rng::uniform(seed, net_stream(net_index, 3), c_b++, -lim, lim);
    }
    return net;
}

// ---------------------------------------------------------------------------
// Checkpoints: portable JSON, full round-trip precision.

inline nlohmann::json net_to_json(const FourierNet& net) {
    nlohmann::json j;
    j["fixed_freqs"] = std::vector<double>(net.embedding.fixed_freqs.data(),
                                           net.embedding.fixed_freqs.data() +
                                               net.embedding.fixed_freqs.size());
    j["n_trainable"] = net.embedding.n_trainable;
    j["hidden_widths"] = net.hidden_widths;
    j["output_map"] = to_string(net.output_map);
    j["params"] = std::vector<double>(net.params.data(), net.params.data() + net.params.size());
    return j;
}

inline FourierNet net_from_json(const nlohmann::json& j) {
    FourierEmbedding emb;
    const auto ff = j.at("fixed_freqs").get<std::vector<double>>();
    emb.fixed_freqs = Eigen::Map<const Eigen::VectorXd>(ff.data(), static_cast<Eigen::Index>(ff.size()));
    emb.n_trainable = j.at("n_trainable").get<std::size_t>();
    FourierNet net(std::move(emb), j.at("hidden_widths").get<std::vector<Eigen::Index>>(),
                   output_map_from_string(j.at("output_map").get<std::string>()));
    const auto pv = j.at("params").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(pv.size()) != net.n_params())
        throw ContractViolation("net_from_json: parameter count mismatch");
    net.params = Eigen::Map<const Eigen::VectorXd>(pv.data(), static_cast<Eigen::Index>(pv.size()));
    return net;
}

}  // namespace neuropinn
