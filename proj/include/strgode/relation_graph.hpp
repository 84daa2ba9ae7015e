#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "strgode/tensor.hpp"
#include "strgode/util.hpp"

namespace strgode {

enum class GraphKind { Physical, Similarity, Correlation };

inline const char* graph_kind_name(GraphKind k) {
    switch (k) {
    case GraphKind::Physical: return "physical";
    case GraphKind::Similarity: return "similarity";
    case GraphKind::Correlation: return "correlation";
    }
    return "?";
}

inline GraphKind parse_graph_kind(const std::string& s) {
    if (s == "physical") return GraphKind::Physical;
    if (s == "similarity") return GraphKind::Similarity;
    if (s == "correlation") return GraphKind::Correlation;
    throw std::invalid_argument("unknown graph kind: " + s);
}

struct GraphEdge {
    int i = 0; // row station (the one aggregating)
    int j = 0; // neighbor station
    double weight = 0.0;
};

// A weighted directed station relation. Rows with at least one edge carry
// weights summing to 1; rows without edges are simply absent.
struct RelationGraph {
    int n_stations = 0;
    GraphKind kind = GraphKind::Physical;
    std::vector<GraphEdge> edges; // sorted by (i, j)

    void validate() const {
        std::vector<double> row_sum(static_cast<std::size_t>(n_stations), 0.0);
        std::vector<bool> has(static_cast<std::size_t>(n_stations), false);
        int prev_i = -1, prev_j = -1;
        for (const auto& e : edges) {
            if (e.i < 0 || e.i >= n_stations || e.j < 0 || e.j >= n_stations)
                throw std::invalid_argument("relation graph: station index out of range");
            if (e.weight <= 0.0)
                throw std::invalid_argument("relation graph: non-positive weight");
            if (kind == GraphKind::Physical && e.i == e.j)
                throw std::invalid_argument("physical graph: self-loop");
            if (e.i < prev_i || (e.i == prev_i && e.j <= prev_j))
                throw std::invalid_argument("relation graph: edges not sorted by (i, j)");
            prev_i = e.i;
            prev_j = e.j;
            row_sum[static_cast<std::size_t>(e.i)] += e.weight;
            has[static_cast<std::size_t>(e.i)] = true;
        }
        for (int i = 0; i < n_stations; ++i)
            if (has[static_cast<std::size_t>(i)] &&
                std::abs(row_sum[static_cast<std::size_t>(i)] - 1.0) > 1e-9)
                throw std::invalid_argument("relation graph: row " + std::to_string(i) +
                                            " does not sum to 1");
    }

    Tensor dense_weights() const {
        Tensor w(static_cast<std::size_t>(n_stations), static_cast<std::size_t>(n_stations));
        for (const auto& e : edges)
            w(static_cast<std::size_t>(e.i), static_cast<std::size_t>(e.j)) = e.weight;
        return w;
    }

    // M(i, j) = 1/|N(i)| over the edge pattern; the uniform neighbor
    // averaging used by the dynamics, independent of the stored weights.
    Tensor neighbor_mean_matrix() const {
        std::vector<int> deg(static_cast<std::size_t>(n_stations), 0);
        for (const auto& e : edges) deg[static_cast<std::size_t>(e.i)]++;
        Tensor m(static_cast<std::size_t>(n_stations), static_cast<std::size_t>(n_stations));
        for (const auto& e : edges)
            m(static_cast<std::size_t>(e.i), static_cast<std::size_t>(e.j)) =
                1.0 / static_cast<double>(deg[static_cast<std::size_t>(e.i)]);
        return m;
    }
};

struct TriGraph {
    RelationGraph physical;
    RelationGraph similarity;
    RelationGraph correlation;

    int n_stations() const { return physical.n_stations; }

    void validate() const {
        if (physical.n_stations != similarity.n_stations ||
            physical.n_stations != correlation.n_stations)
            throw std::invalid_argument("TriGraph: station counts disagree");
        physical.validate();
        similarity.validate();
        correlation.validate();
    }
};

// File format: header `strgode-graph v1 <kind> <n>`, then one `i j weight`
// line per edge, weights with 17 significant digits.
inline void save_graph(std::ostream& os, const RelationGraph& g) {
    os << "strgode-graph v1 " << graph_kind_name(g.kind) << " " << g.n_stations << "\n";
    for (const auto& e : g.edges)
        os << e.i << " " << e.j << " " << g17(e.weight) << "\n";
}

inline void save_graph(const std::string& path, const RelationGraph& g) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    save_graph(os, g);
}

inline RelationGraph load_graph(std::istream& is, const std::string& origin = "<stream>") {
    RelationGraph g;
    std::string line;
    if (!std::getline(is, line))
        throw std::runtime_error(origin + ": empty graph file");
    {
        std::istringstream hs(line);
        std::string magic, version, kind;
        if (!(hs >> magic >> version >> kind >> g.n_stations) || magic != "strgode-graph" ||
            version != "v1")
            throw std::runtime_error(origin + ":1: bad graph header");
        g.kind = parse_graph_kind(kind);
    }
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        GraphEdge e;
        if (!(ls >> e.i >> e.j >> e.weight))
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": bad edge line");
        g.edges.push_back(e);
    }
    g.validate();
    return g;
}

inline RelationGraph load_graph(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return load_graph(is, path);
}

} // namespace strgode
