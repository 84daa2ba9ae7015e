#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "strgode/series.hpp"
#include "strgode/tensor.hpp"

namespace strgode {

// Per-channel standardization statistics, fitted on the training split only.
// Population standard deviation; the floor keeps constant channels usable
// both ways (apply maps them to 0, invert restores the mean).
struct NormStats {
    static constexpr double kStdFloor = 1e-8;
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> std{1.0, 1.0};

    double guarded_std(int ch) const { return std::max(std[static_cast<std::size_t>(ch)], kStdFloor); }
};

inline NormStats zscore_fit(const std::vector<Tensor>& values) {
    if (values.empty()) throw std::invalid_argument("zscore_fit: no data");
    NormStats s;
    for (int ch = 0; ch < 2; ++ch) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (const auto& v : values) {
            if (v.cols() != 2) throw std::invalid_argument("zscore_fit: values must be N x 2");
            for (std::size_t i = 0; i < v.rows(); ++i) {
                sum += v(i, static_cast<std::size_t>(ch));
                ++cnt;
            }
        }
        const double mean = sum / static_cast<double>(cnt);
        double sq = 0.0;
        for (const auto& v : values)
            for (std::size_t i = 0; i < v.rows(); ++i) {
                const double d = v(i, static_cast<std::size_t>(ch)) - mean;
                sq += d * d;
            }
        s.mean[static_cast<std::size_t>(ch)] = mean;
        s.std[static_cast<std::size_t>(ch)] = std::sqrt(sq / static_cast<double>(cnt));
    }
    return s;
}

inline Tensor zscore_apply(const Tensor& x, const NormStats& s) {
    if (x.cols() != 2) throw std::invalid_argument("zscore_apply: values must be N x 2");
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (int ch = 0; ch < 2; ++ch)
            out(i, static_cast<std::size_t>(ch)) =
                (x(i, static_cast<std::size_t>(ch)) - s.mean[static_cast<std::size_t>(ch)]) /
                s.guarded_std(ch);
    return out;
}

inline Tensor zscore_invert(const Tensor& x, const NormStats& s) {
    if (x.cols() != 2) throw std::invalid_argument("zscore_invert: values must be N x 2");
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (int ch = 0; ch < 2; ++ch)
            out(i, static_cast<std::size_t>(ch)) =
                x(i, static_cast<std::size_t>(ch)) * s.guarded_std(ch) +
                s.mean[static_cast<std::size_t>(ch)];
    return out;
}

inline SeriesWindow zscore_apply(const SeriesWindow& w, const NormStats& s) {
    SeriesWindow out;
    out.times = w.times;
    out.values.reserve(w.values.size());
    for (const auto& v : w.values) out.values.push_back(zscore_apply(v, s));
    return out;
}

} // namespace strgode
