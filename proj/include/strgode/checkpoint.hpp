#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "strgode/model.hpp"
#include "strgode/normalize.hpp"
#include "strgode/params.hpp"

namespace strgode {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores little-endian doubles");

// Everything needed to run a trained model: weights, normalization, and the
// solver/window settings it was trained with (stored as 1x1 entries).
struct Checkpoint {
    ModelParams params;
    NormStats stats;
    ModelConfig model_cfg;
    int n_in = 4;
    int n_out = 4;
};

namespace detail {

inline std::vector<std::pair<std::string, Tensor>> checkpoint_entries(const Checkpoint& c) {
    std::vector<std::pair<std::string, Tensor>> out;
    c.params.for_each(
        [&](const std::string& name, const Tensor& t) { out.emplace_back(name, t); });
    Tensor mean(1, 2), sd(1, 2);
    for (int ch = 0; ch < 2; ++ch) {
        mean(0, static_cast<std::size_t>(ch)) = c.stats.mean[static_cast<std::size_t>(ch)];
        sd(0, static_cast<std::size_t>(ch)) = c.stats.std[static_cast<std::size_t>(ch)];
    }
    out.emplace_back("norm.mean", mean);
    out.emplace_back("norm.std", sd);
    out.emplace_back("cfg.method",
                     Tensor::scalar(c.model_cfg.method == OdeMethod::Rk4 ? 1.0 : 0.0));
    out.emplace_back("cfg.n_intermediate",
                     Tensor::scalar(static_cast<double>(c.model_cfg.n_intermediate)));
    out.emplace_back("cfg.anchor",
                     Tensor::scalar(c.model_cfg.anchor == ModelConfig::Anchor::LastObservation
                                        ? 1.0
                                        : 0.0));
    out.emplace_back("cfg.transform_hidden",
                     Tensor::scalar(c.model_cfg.transform_hidden ? 1.0 : 0.0));
    out.emplace_back("cfg.n_in", Tensor::scalar(static_cast<double>(c.n_in)));
    out.emplace_back("cfg.n_out", Tensor::scalar(static_cast<double>(c.n_out)));
    return out;
}

} // namespace detail

// Format: `strgode-ckpt v1`, one `name rows cols` line per tensor, a blank
// line, then the tensors' row-major little-endian doubles in header order.
inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    const auto entries = detail::checkpoint_entries(c);
    os << "strgode-ckpt v1\n";
    for (const auto& [name, t] : entries)
        os << name << " " << t.rows() << " " << t.cols() << "\n";
    os << "\n";
    for (const auto& [name, t] : entries)
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != "strgode-ckpt v1")
        throw std::runtime_error(path + ": bad checkpoint header");
    std::vector<std::pair<std::string, Tensor>> entries;
    while (std::getline(is, line)) {
        if (line.empty()) break;
        std::istringstream ls(line);
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(ls >> name >> rows >> cols))
            throw std::runtime_error(path + ": bad checkpoint entry line: " + line);
        entries.emplace_back(name, Tensor(rows, cols));
    }
    for (auto& [name, t] : entries) {
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!is) throw std::runtime_error(path + ": truncated checkpoint data at " + name);
    }

    std::map<std::string, Tensor> by_name(entries.begin(), entries.end());
    auto take = [&](const std::string& name) -> Tensor {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error(path + ": checkpoint missing entry " + name);
        return it->second;
    };
    auto take_scalar = [&](const std::string& name, double fallback) -> double {
        auto it = by_name.find(name);
        return it == by_name.end() ? fallback : it->second(0, 0);
    };

    const Tensor theta0 = take("theta0");
    if (theta0.rows() != theta0.cols())
        throw std::runtime_error(path + ": theta0 must be square");
    const int d = static_cast<int>(theta0.rows());

    Checkpoint c;
    c.params = ModelParams::zeros(d);
    c.params.for_each([&](const std::string& name, Tensor& t) {
        Tensor loaded = take(name);
        if (!loaded.same_shape(t))
            throw std::runtime_error(path + ": unexpected shape for " + name);
        t = std::move(loaded);
    });
    const Tensor mean = take("norm.mean");
    const Tensor sd = take("norm.std");
    for (int ch = 0; ch < 2; ++ch) {
        c.stats.mean[static_cast<std::size_t>(ch)] = mean(0, static_cast<std::size_t>(ch));
        c.stats.std[static_cast<std::size_t>(ch)] = sd(0, static_cast<std::size_t>(ch));
    }
    c.model_cfg.method = take_scalar("cfg.method", 1.0) != 0.0 ? OdeMethod::Rk4 : OdeMethod::Euler;
    c.model_cfg.n_intermediate = static_cast<int>(take_scalar("cfg.n_intermediate", 3.0));
    c.model_cfg.anchor = take_scalar("cfg.anchor", 1.0) != 0.0
                             ? ModelConfig::Anchor::LastObservation
                             : ModelConfig::Anchor::FirstObservation;
    c.model_cfg.transform_hidden = take_scalar("cfg.transform_hidden", 1.0) != 0.0;
    c.n_in = static_cast<int>(take_scalar("cfg.n_in", 4.0));
    c.n_out = static_cast<int>(take_scalar("cfg.n_out", 4.0));
    return c;
}

} // namespace strgode
