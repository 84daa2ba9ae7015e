#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "strgode/dtw.hpp"
#include "strgode/relation_graph.hpp"
#include "strgode/tensor.hpp"

namespace strgode {

// Edge selection rule for the similarity and correlation graphs: keep scores
// at or above a threshold, or the k best per row.
struct Selection {
    enum class Kind { Threshold, TopK } kind = Kind::Threshold;
    double tau = 0.1;
    int k = 10;

    static Selection threshold(double tau) { return Selection{Kind::Threshold, tau, 0}; }
    static Selection top_k(int k) { return Selection{Kind::TopK, 0.0, k}; }
};

inline Selection::Kind parse_selection_kind(const std::string& s) {
    if (s == "threshold") return Selection::Kind::Threshold;
    if (s == "topk") return Selection::Kind::TopK;
    throw std::invalid_argument("unknown selection kind: " + s);
}

inline const char* selection_kind_name(Selection::Kind k) {
    return k == Selection::Kind::Threshold ? "threshold" : "topk";
}

namespace detail {

inline void check_selection(const Selection& sel, int n) {
    if (sel.kind == Selection::Kind::TopK && sel.k >= n)
        throw std::invalid_argument("selection: k must be smaller than the station count");
    if (sel.kind == Selection::Kind::TopK && sel.k < 1)
        throw std::invalid_argument("selection: k must be positive");
    if (sel.kind == Selection::Kind::Threshold && sel.tau <= 0.0)
        throw std::invalid_argument("selection: threshold must be positive");
}

// Applies a selection rule to a score matrix and row-normalizes the surviving
// scores. Zero scores are never selected (weights must stay positive). Ties
// in top-k go to the lower station index.
inline RelationGraph select_and_normalize(const Tensor& score, const Selection& sel,
                                          GraphKind kind) {
    const int n = static_cast<int>(score.rows());
    RelationGraph g;
    g.n_stations = n;
    g.kind = kind;
    for (int i = 0; i < n; ++i) {
        std::vector<int> picked;
        if (sel.kind == Selection::Kind::Threshold) {
            for (int j = 0; j < n; ++j)
                if (j != i && score(i, j) >= sel.tau && score(i, j) > 0.0)
                    picked.push_back(j);
        } else {
            std::vector<int> order;
            for (int j = 0; j < n; ++j)
                if (j != i && score(i, j) > 0.0) order.push_back(j);
            std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
                if (score(i, x) != score(i, y)) return score(i, x) > score(i, y);
                return x < y;
            });
            if (static_cast<int>(order.size()) > sel.k) order.resize(sel.k);
            picked = order;
            std::sort(picked.begin(), picked.end());
        }
        double sum = 0.0;
        for (int j : picked) sum += score(i, j);
        for (int j : picked)
            g.edges.push_back({i, j, score(i, j) / sum});
    }
    g.validate();
    return g;
}

} // namespace detail

// Binary connectivity with row normalization: W(i,j) = P(i,j) / sum_k P(i,k).
// Pairs are undirected, deduplicated, with no self-loops; isolated stations
// keep empty rows.
inline RelationGraph build_physical(const std::vector<std::pair<int, int>>& pairs, int n) {
    if (n < 1) throw std::invalid_argument("build_physical: need at least one station");
    std::vector<std::vector<bool>> adj(static_cast<std::size_t>(n),
                                       std::vector<bool>(static_cast<std::size_t>(n), false));
    for (const auto& [a, b] : pairs) {
        if (a < 0 || a >= n || b < 0 || b >= n)
            throw std::invalid_argument("build_physical: station index out of range");
        if (a == b)
            throw std::invalid_argument("build_physical: self-pair not allowed");
        adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = true;
        adj[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = true;
    }
    RelationGraph g;
    g.n_stations = n;
    g.kind = GraphKind::Physical;
    for (int i = 0; i < n; ++i) {
        int deg = 0;
        for (int j = 0; j < n; ++j)
            if (adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) ++deg;
        if (deg == 0) continue;
        for (int j = 0; j < n; ++j)
            if (adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
                g.edges.push_back({i, j, 1.0 / static_cast<double>(deg)});
    }
    g.validate();
    return g;
}

struct SimilarityOptions {
    Selection sel = Selection::threshold(0.1);
    enum class Channels { Both, InflowOnly, OutflowOnly } channels = Channels::Both;
    bool zscore = true;               // per-channel standardization before DTW
    std::optional<int> band;          // optional DTW band for long series
};

inline SimilarityOptions::Channels parse_dtw_channels(const std::string& s) {
    if (s == "both") return SimilarityOptions::Channels::Both;
    if (s == "inflow") return SimilarityOptions::Channels::InflowOnly;
    if (s == "outflow") return SimilarityOptions::Channels::OutflowOnly;
    throw std::invalid_argument("unknown dtw channel selection: " + s);
}

inline const char* dtw_channels_name(SimilarityOptions::Channels c) {
    switch (c) {
    case SimilarityOptions::Channels::Both: return "both";
    case SimilarityOptions::Channels::InflowOnly: return "inflow";
    case SimilarityOptions::Channels::OutflowOnly: return "outflow";
    }
    return "?";
}

// S(i,j) = exp(-dtw(X_i, X_j)) with the selected edges row-normalized over S.
inline RelationGraph build_similarity(const std::vector<Series2>& per_station,
                                      const SimilarityOptions& opt) {
    const int n = static_cast<int>(per_station.size());
    if (n < 1) throw std::invalid_argument("build_similarity: need at least one station");
    detail::check_selection(opt.sel, n);
    const std::size_t len = per_station.front().size();
    if (len == 0) throw std::invalid_argument("build_similarity: empty series");
    for (const auto& s : per_station)
        if (s.size() != len)
            throw std::invalid_argument("build_similarity: series lengths differ");

    std::vector<Series2> prepared(per_station.begin(), per_station.end());
    for (auto& s : prepared) {
        for (auto& v : s) {
            if (opt.channels == SimilarityOptions::Channels::InflowOnly) v[1] = 0.0;
            if (opt.channels == SimilarityOptions::Channels::OutflowOnly) v[0] = 0.0;
        }
    }
    if (opt.zscore) {
        // channel statistics over all stations and timestamps
        for (int ch = 0; ch < 2; ++ch) {
            double sum = 0.0;
            std::size_t cnt = 0;
            for (const auto& s : prepared)
                for (const auto& v : s) {
                    sum += v[static_cast<std::size_t>(ch)];
                    ++cnt;
                }
            const double mean = sum / static_cast<double>(cnt);
            double sq = 0.0;
            for (const auto& s : prepared)
                for (const auto& v : s) {
                    const double d = v[static_cast<std::size_t>(ch)] - mean;
                    sq += d * d;
                }
            const double sd = std::max(std::sqrt(sq / static_cast<double>(cnt)), 1e-8);
            for (auto& s : prepared)
                for (auto& v : s)
                    v[static_cast<std::size_t>(ch)] =
                        (v[static_cast<std::size_t>(ch)] - mean) / sd;
        }
    }

    Tensor score(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        score(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            const double s = std::exp(-dtw_distance(prepared[static_cast<std::size_t>(i)],
                                                    prepared[static_cast<std::size_t>(j)],
                                                    opt.band));
            score(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = s;
            score(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = s;
        }
    }
    return detail::select_and_normalize(score, opt.sel, GraphKind::Similarity);
}

// od(i, j) counts passengers that traveled from station j to station i.
// C(i,j) = od(i,j) / sum_k od(i,k), with all-zero rows staying empty, then
// edges are selected on C and row-normalized.
inline RelationGraph build_correlation(const Tensor& od, const Selection& sel) {
    if (od.rows() != od.cols())
        throw std::invalid_argument("build_correlation: OD matrix must be square");
    const int n = static_cast<int>(od.rows());
    detail::check_selection(sel, n);
    Tensor ratio(od.rows(), od.cols());
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            const double v = od(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            if (v < 0.0)
                throw std::invalid_argument("build_correlation: negative count");
            row += v;
        }
        if (row == 0.0) continue;
        for (int j = 0; j < n; ++j)
            ratio(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                od(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) / row;
    }
    return detail::select_and_normalize(ratio, sel, GraphKind::Correlation);
}

} // namespace strgode
