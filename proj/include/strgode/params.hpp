#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "strgode/rng.hpp"
#include "strgode/tensor.hpp"

namespace strgode {

inline constexpr int kNumRelations = 3;

// All learnable weights. Station features are rows, so every map is applied
// as x * W (+ b): gate inputs concatenate [Z, h, x] to width 2d+2, the
// candidate input concatenates [r*h, x] to width d+2, and the dynamics carry
// no biases.
struct ModelParams {
    int d = 0;
    Tensor theta0;                              // d x d self-transition
    std::array<Tensor, kNumRelations> theta_r;  // d x d per relation graph
    Tensor gru_Wr, gru_br;                      // (2d+2) x d, 1 x d
    Tensor gru_Wz, gru_bz;
    Tensor gru_WN, gru_bN;                      // (d+2) x d, 1 x d
    Tensor tz_W1, tz_b1, tz_W2, tz_b2;          // transform block for Z
    Tensor th_W1, th_b1, th_W2, th_b2;          // transform block for hidden
    Tensor out_W, out_b;                        // d x 2, 1 x 2

    static ModelParams zeros(int d) {
        if (d < 1) throw std::invalid_argument("ModelParams: d must be >= 1");
        ModelParams p;
        p.d = d;
        const auto du = static_cast<std::size_t>(d);
        p.theta0 = Tensor(du, du);
        for (auto& t : p.theta_r) t = Tensor(du, du);
        p.gru_Wr = Tensor(2 * du + 2, du);
        p.gru_br = Tensor(1, du);
        p.gru_Wz = Tensor(2 * du + 2, du);
        p.gru_bz = Tensor(1, du);
        p.gru_WN = Tensor(du + 2, du);
        p.gru_bN = Tensor(1, du);
        p.tz_W1 = Tensor(du, du);
        p.tz_b1 = Tensor(1, du);
        p.tz_W2 = Tensor(du, du);
        p.tz_b2 = Tensor(1, du);
        p.th_W1 = Tensor(du, du);
        p.th_b1 = Tensor(1, du);
        p.th_W2 = Tensor(du, du);
        p.th_b2 = Tensor(1, du);
        p.out_W = Tensor(du, 2);
        p.out_b = Tensor(1, 2);
        return p;
    }

    // Weights uniform in (-1/sqrt(d), 1/sqrt(d)), biases zero.
    static ModelParams init(int d, std::uint64_t seed) {
        ModelParams p = zeros(d);
        Rng rng(seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(d));
        p.for_each([&](const std::string& name, Tensor& t) {
            if (name.find(".b") != std::string::npos) return; // biases stay zero
            for (auto& v : t.vec()) v = rng.uniform(-bound, bound);
        });
        return p;
    }

    template <typename F>
    void for_each(F&& f) {
        f("theta0", theta0);
        f("theta_r.0", theta_r[0]);
        f("theta_r.1", theta_r[1]);
        f("theta_r.2", theta_r[2]);
        f("gru.Wr", gru_Wr);
        f("gru.br", gru_br);
        f("gru.Wz", gru_Wz);
        f("gru.bz", gru_bz);
        f("gru.WN", gru_WN);
        f("gru.bN", gru_bN);
        f("transform_z.W1", tz_W1);
        f("transform_z.b1", tz_b1);
        f("transform_z.W2", tz_W2);
        f("transform_z.b2", tz_b2);
        f("transform_h.W1", th_W1);
        f("transform_h.b1", th_b1);
        f("transform_h.W2", th_W2);
        f("transform_h.b2", th_b2);
        f("out.W", out_W);
        f("out.b", out_b);
    }

    template <typename F>
    void for_each(F&& f) const {
        const_cast<ModelParams*>(this)->for_each(
            [&](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }

    std::vector<std::pair<std::string, Tensor*>> entries() {
        std::vector<std::pair<std::string, Tensor*>> out;
        for_each([&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
        return out;
    }
};

} // namespace strgode
