#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace strgode {

using Obs2 = std::array<double, 2>;
using Series2 = std::vector<Obs2>;

// Classic dynamic time warping with Euclidean local cost between 2-vectors:
//   D(0,0) = c(0,0)
//   D(u,v) = c(u,v) + min(D(u-1,v), D(u,v-1), D(u-1,v-1))
// Returns D(len(a)-1, len(b)-1). The optional band restricts |u - v| for
// long series; leaving it unset keeps the exact distance.
inline double dtw_distance(const Series2& a, const Series2& b,
                           std::optional<int> band = std::nullopt) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("dtw_distance: empty series");
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    constexpr double kInf = std::numeric_limits<double>::infinity();

    auto cost = [&](std::size_t u, std::size_t v) {
        const double dx = a[u][0] - b[v][0];
        const double dy = a[u][1] - b[v][1];
        return std::sqrt(dx * dx + dy * dy);
    };
    auto in_band = [&](std::size_t u, std::size_t v) {
        if (!band) return true;
        const long diff = static_cast<long>(u) - static_cast<long>(v);
        return std::labs(diff) <= *band;
    };

    // rolling rows
    std::vector<double> prev(m, kInf), cur(m, kInf);
    for (std::size_t u = 0; u < n; ++u) {
        std::fill(cur.begin(), cur.end(), kInf);
        for (std::size_t v = 0; v < m; ++v) {
            if (!in_band(u, v)) continue;
            double best;
            if (u == 0 && v == 0) {
                best = 0.0;
            } else {
                best = kInf;
                if (u > 0) best = std::min(best, prev[v]);
                if (v > 0) best = std::min(best, cur[v - 1]);
                if (u > 0 && v > 0) best = std::min(best, prev[v - 1]);
            }
            if (best < kInf) cur[v] = cost(u, v) + best;
        }
        std::swap(prev, cur);
    }
    const double d = prev[m - 1];
    if (!std::isfinite(d))
        throw std::invalid_argument("dtw_distance: band too narrow for series lengths");
    return d;
}

} // namespace strgode
