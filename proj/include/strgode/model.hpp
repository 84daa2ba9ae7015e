#pragma once

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "strgode/autodiff.hpp"
#include "strgode/normalize.hpp"
#include "strgode/ode.hpp"
#include "strgode/params.hpp"
#include "strgode/relation_graph.hpp"
#include "strgode/series.hpp"

namespace strgode {

struct ModelConfig {
    OdeMethod method = OdeMethod::Rk4;
    int n_intermediate = 3;
    enum class Anchor { LastObservation, FirstObservation } anchor = Anchor::LastObservation;
    bool transform_hidden = true;
};

inline ModelConfig::Anchor parse_anchor(const std::string& s) {
    if (s == "last") return ModelConfig::Anchor::LastObservation;
    if (s == "first") return ModelConfig::Anchor::FirstObservation;
    throw std::invalid_argument("unknown anchor mode: " + s);
}

inline const char* anchor_name(ModelConfig::Anchor a) {
    return a == ModelConfig::Anchor::LastObservation ? "last" : "first";
}

struct LatentState {
    Tensor Z;
    Tensor hidden;
};

// ---------------------------------------------------------------------------
// Graph-building layer: every piece below appends to an ad::Graph so the
// whole forecast stays differentiable end to end.
// ---------------------------------------------------------------------------

struct ModelVars {
    int d = 0;
    ad::Var theta0;
    std::array<ad::Var, kNumRelations> theta_r;
    ad::Var gru_Wr, gru_br, gru_Wz, gru_bz, gru_WN, gru_bN;
    ad::Var tz_W1, tz_b1, tz_W2, tz_b2;
    ad::Var th_W1, th_b1, th_W2, th_b2;
    ad::Var out_W, out_b;
};

inline ModelVars register_params(ad::Graph& g, int d) {
    if (d < 1) throw std::invalid_argument("register_params: d must be >= 1");
    const auto du = static_cast<std::size_t>(d);
    ModelVars v;
    v.d = d;
    v.theta0 = g.param("theta0", du, du);
    v.theta_r[0] = g.param("theta_r.0", du, du);
    v.theta_r[1] = g.param("theta_r.1", du, du);
    v.theta_r[2] = g.param("theta_r.2", du, du);
    v.gru_Wr = g.param("gru.Wr", 2 * du + 2, du);
    v.gru_br = g.param("gru.br", 1, du);
    v.gru_Wz = g.param("gru.Wz", 2 * du + 2, du);
    v.gru_bz = g.param("gru.bz", 1, du);
    v.gru_WN = g.param("gru.WN", du + 2, du);
    v.gru_bN = g.param("gru.bN", 1, du);
    v.tz_W1 = g.param("transform_z.W1", du, du);
    v.tz_b1 = g.param("transform_z.b1", 1, du);
    v.tz_W2 = g.param("transform_z.W2", du, du);
    v.tz_b2 = g.param("transform_z.b2", 1, du);
    v.th_W1 = g.param("transform_h.W1", du, du);
    v.th_b1 = g.param("transform_h.b1", 1, du);
    v.th_W2 = g.param("transform_h.W2", du, du);
    v.th_b2 = g.param("transform_h.b2", 1, du);
    v.out_W = g.param("out.W", du, 2);
    v.out_b = g.param("out.b", 1, 2);
    return v;
}

inline ad::Bindings param_bindings(const ModelParams& p) {
    ad::Bindings b;
    p.for_each([&](const std::string& name, const Tensor& t) { b[name] = t; });
    return b;
}

// Uniform neighbor-mean aggregation matrices, one per relation graph,
// registered as constants.
struct GraphMats {
    int n = 0;
    std::array<ad::Var, kNumRelations> neighbor_mean;
};

inline GraphMats register_graphs(ad::Graph& g, const TriGraph& graphs) {
    graphs.validate();
    GraphMats m;
    m.n = graphs.n_stations();
    m.neighbor_mean[0] = g.constant(graphs.physical.neighbor_mean_matrix(), "nbr.physical");
    m.neighbor_mean[1] = g.constant(graphs.similarity.neighbor_mean_matrix(), "nbr.similarity");
    m.neighbor_mean[2] = g.constant(graphs.correlation.neighbor_mean_matrix(), "nbr.correlation");
    return m;
}

// Per-station derivative: relu(z_i * theta0 + sum_r mean_{j in N_r(i)} z_j * theta_r).
// Relations with an empty neighborhood contribute zero; there is no bias.
inline ad::Var gode_dynamics(ad::Graph& g, ad::Var Z, const ModelVars& p, const GraphMats& gm) {
    ad::Var acc = g.matmul(Z, p.theta0);
    for (int r = 0; r < kNumRelations; ++r) {
        ad::Var agg = g.matmul(gm.neighbor_mean[static_cast<std::size_t>(r)], Z);
        acc = g.add(acc, g.matmul(agg, p.theta_r[static_cast<std::size_t>(r)]));
    }
    return g.relu(acc);
}

inline Dynamics model_dynamics(const ModelVars& p, const GraphMats& gm) {
    return [p, gm](ad::Graph& g, ad::Var z, double) { return gode_dynamics(g, z, p, gm); };
}

struct GruVars {
    ad::Var Z;
    ad::Var hidden;
};

// Correction cell. Gates read [Z_prev, h_prev, x]; the candidate reads
// [r * h_prev, x] only; both the memory and the latent state blend through
// the same update gate.
inline GruVars gru_cell(ad::Graph& g, ad::Var Z_prev, ad::Var h_prev, ad::Var x,
                        const ModelVars& p) {
    ad::Var gate_in = g.concat_cols({Z_prev, h_prev, x});
    ad::Var r = g.sigmoid(g.add(g.matmul(gate_in, p.gru_Wr), p.gru_br));
    ad::Var z = g.sigmoid(g.add(g.matmul(gate_in, p.gru_Wz), p.gru_bz));
    ad::Var cand_in = g.concat_cols({g.mul(r, h_prev), x});
    ad::Var n = g.tanh(g.add(g.matmul(cand_in, p.gru_WN), p.gru_bN));
    ad::Var one_minus_z = g.affine(z, -1.0, 1.0);
    ad::Var blend_n = g.mul(one_minus_z, n);
    GruVars out;
    out.hidden = g.add(blend_n, g.mul(z, h_prev));
    out.Z = g.add(blend_n, g.mul(z, Z_prev));
    return out;
}

// Two-layer map FC2(tanh(FC1(.))) applied per station row; Z and hidden each
// get their own weights, and the hidden pass can be disabled.
inline GruVars transform_block(ad::Graph& g, ad::Var h0, ad::Var hidden, const ModelVars& p,
                               bool transform_hidden) {
    GruVars out;
    out.Z = g.add(g.matmul(g.tanh(g.add(g.matmul(h0, p.tz_W1), p.tz_b1)), p.tz_W2), p.tz_b2);
    out.hidden = transform_hidden
                     ? g.add(g.matmul(g.tanh(g.add(g.matmul(hidden, p.th_W1), p.th_b1)), p.th_W2),
                             p.th_b2)
                     : hidden;
    return out;
}

inline ad::Var output_layer(ad::Graph& g, ad::Var Z, const ModelVars& p) {
    return g.add(g.matmul(Z, p.out_W), p.out_b);
}

struct EncodedVars {
    ad::Var Z;
    ad::Var hidden;
    double anchor_time = 0.0;
};

// Reverse-chronological sweep: starting from zero state and memory, the
// state is integrated backward across each observation gap and corrected by
// the GRU cell at each observation. The swept state (earliest time) passes
// through the transform block; with the last-observation anchor it is then
// carried forward across the window by one final integration so decoding can
// start at the newest observation.
inline EncodedVars build_encoder(ad::Graph& g, const std::vector<double>& times,
                                 const std::vector<ad::Var>& xs, const ModelVars& p,
                                 const GraphMats& gm, const ModelConfig& cfg) {
    if (times.empty()) throw std::invalid_argument("encode: need at least one observation");
    if (times.size() != xs.size())
        throw std::invalid_argument("encode: times/values length mismatch");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw std::invalid_argument("encode: timestamps not strictly increasing");

    const auto nu = static_cast<std::size_t>(gm.n);
    const auto du = static_cast<std::size_t>(p.d);
    ad::Var state = g.constant(Tensor(nu, du), "enc.zero_state");
    ad::Var hidden = g.constant(Tensor(nu, du), "enc.zero_hidden");
    const Dynamics f = model_dynamics(p, gm);

    const int n = static_cast<int>(times.size());
    for (int i = n - 1; i >= 0; --i) {
        if (i < n - 1) {
            TimeGrid grid{times[static_cast<std::size_t>(i + 1)],
                          times[static_cast<std::size_t>(i)], cfg.n_intermediate};
            state = integrate(g, f, state, grid, cfg.method);
        }
        GruVars cell = gru_cell(g, state, hidden, xs[static_cast<std::size_t>(i)], p);
        state = cell.Z;
        hidden = cell.hidden;
    }

    GruVars transformed = transform_block(g, state, hidden, p, cfg.transform_hidden);
    EncodedVars out;
    out.hidden = transformed.hidden;
    out.Z = transformed.Z;
    out.anchor_time = times.front();
    if (cfg.anchor == ModelConfig::Anchor::LastObservation && n > 1) {
        // step size matched to the per-gap resolution of the sweep
        TimeGrid grid{times.front(), times.back(), cfg.n_intermediate * (n - 1)};
        out.Z = integrate(g, f, out.Z, grid, cfg.method);
        out.anchor_time = times.back();
    }
    return out;
}

// Rollout with optional observation correction. For each target time the
// state is integrated forward, read out BEFORE any correction (so y_i never
// sees the observation at t_i or later), then the GRU cell folds in either
// the available observation or the model's own prediction.
inline std::vector<ad::Var> build_decoder(ad::Graph& g, const EncodedVars& init,
                                          const std::vector<double>& times,
                                          const std::map<std::size_t, ad::Var>& available,
                                          const ModelVars& p, const GraphMats& gm,
                                          const ModelConfig& cfg) {
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw std::invalid_argument("decode: target times not strictly increasing");
    if (!times.empty() && times.front() < init.anchor_time)
        throw std::invalid_argument("decode: target time precedes the anchor");

    const Dynamics f = model_dynamics(p, gm);
    ad::Var Z = init.Z;
    ad::Var hidden = init.hidden;
    double t_prev = init.anchor_time;
    std::vector<ad::Var> ys;
    ys.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        TimeGrid grid{t_prev, times[i], cfg.n_intermediate};
        ad::Var evolved = integrate(g, f, Z, grid, cfg.method);
        ad::Var y = output_layer(g, evolved, p);
        ys.push_back(y);
        auto it = available.find(i);
        ad::Var x = it != available.end() ? it->second : y;
        GruVars cell = gru_cell(g, evolved, hidden, x, p);
        Z = cell.Z;
        hidden = cell.hidden;
        t_prev = times[i];
    }
    return ys;
}

// ---------------------------------------------------------------------------
// Value-level forecasting
// ---------------------------------------------------------------------------

// Owns parameters, graphs and normalization, and reuses one tape per distinct
// time structure / injection pattern. Not safe for concurrent use; clone per
// thread instead (copies are cheap at desk scale).
class Forecaster {
public:
    Forecaster(ModelParams params, TriGraph graphs, NormStats stats, ModelConfig cfg)
        : params_(std::move(params)), graphs_(std::move(graphs)), stats_(stats), cfg_(cfg) {
        graphs_.validate();
        bindings_ = param_bindings(params_);
    }

    const ModelParams& params() const { return params_; }
    const TriGraph& graphs() const { return graphs_; }
    const NormStats& stats() const { return stats_; }
    const ModelConfig& config() const { return cfg_; }

    void set_params(const ModelParams& p) {
        params_ = p;
        bindings_ = param_bindings(params_);
    }

    // Raw-count observations in, raw-count predictions out. injected_raw maps
    // a horizon index to the ground-truth observation that becomes available
    // at that target time.
    std::vector<Tensor> predict(const SeriesWindow& obs_raw,
                                const std::vector<double>& horizon_times,
                                const std::map<std::size_t, Tensor>& injected_raw = {}) const {
        obs_raw.check("forecast observations");
        if (obs_raw.empty())
            throw std::invalid_argument("forecast: need at least one observation");
        if (horizon_times.empty()) return {};

        Tape& tape = tape_for(obs_raw.times, horizon_times, injected_raw);
        ad::Bindings b = bindings_;
        for (std::size_t i = 0; i < obs_raw.size(); ++i)
            b[tape.obs_names[i]] = zscore_apply(obs_raw.values[i], stats_);
        for (const auto& [idx, value] : injected_raw)
            b[tape.inj_names.at(idx)] = zscore_apply(value, stats_);
        tape.graph.forward(b);

        std::vector<Tensor> out;
        out.reserve(horizon_times.size());
        for (ad::Var y : tape.preds)
            out.push_back(zscore_invert(tape.graph.value(y), stats_));
        return out;
    }

private:
    struct Tape {
        ad::Graph graph;
        std::vector<std::string> obs_names;
        std::map<std::size_t, std::string> inj_names;
        std::vector<ad::Var> preds;
    };

    struct TapeKey {
        std::vector<double> rel_times;
        std::vector<std::size_t> injected;
        bool operator<(const TapeKey& o) const {
            if (rel_times != o.rel_times) return rel_times < o.rel_times;
            return injected < o.injected;
        }
    };

    Tape& tape_for(const std::vector<double>& obs_times, const std::vector<double>& horizons,
                   const std::map<std::size_t, Tensor>& injected) const {
        // autonomous dynamics: only time differences matter
        TapeKey key;
        const double origin = obs_times.back();
        for (double t : obs_times) key.rel_times.push_back(t - origin);
        for (double t : horizons) key.rel_times.push_back(t - origin);
        for (const auto& [idx, _] : injected) key.injected.push_back(idx);

        auto it = cache_.find(key);
        if (it != cache_.end()) return *it->second;

        auto tape = std::make_unique<Tape>();
        ad::Graph& g = tape->graph;
        ModelVars mv = register_params(g, params_.d);
        GraphMats gm = register_graphs(g, graphs_);
        const auto nu = static_cast<std::size_t>(gm.n);

        std::vector<ad::Var> xs;
        for (std::size_t i = 0; i < obs_times.size(); ++i) {
            std::string name = "x." + std::to_string(i);
            tape->obs_names.push_back(name);
            xs.push_back(g.input(name, nu, 2));
        }
        std::vector<double> rel_obs(key.rel_times.begin(),
                                    key.rel_times.begin() + static_cast<long>(obs_times.size()));
        std::vector<double> rel_hor(key.rel_times.begin() + static_cast<long>(obs_times.size()),
                                    key.rel_times.end());

        std::map<std::size_t, ad::Var> avail;
        for (std::size_t idx : key.injected) {
            std::string name = "inj." + std::to_string(idx);
            tape->inj_names[idx] = name;
            avail[idx] = g.input(name, nu, 2);
        }

        EncodedVars enc = build_encoder(g, rel_obs, xs, mv, gm, cfg_);
        tape->preds = build_decoder(g, enc, rel_hor, avail, mv, gm, cfg_);

        Tape& ref = *tape;
        cache_.emplace(std::move(key), std::move(tape));
        return ref;
    }

    ModelParams params_;
    TriGraph graphs_;
    NormStats stats_;
    ModelConfig cfg_;
    ad::Bindings bindings_;
    mutable std::map<TapeKey, std::unique_ptr<Tape>> cache_;
};

// One-shot convenience wrapper.
inline std::vector<Tensor> forecast(const SeriesWindow& obs_raw,
                                    const std::vector<double>& horizon_times,
                                    const ModelParams& params, const TriGraph& graphs,
                                    const NormStats& stats, const ModelConfig& cfg) {
    Forecaster f(params, graphs, stats, cfg);
    return f.predict(obs_raw, horizon_times);
}

} // namespace strgode
