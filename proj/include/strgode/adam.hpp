#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "strgode/tensor.hpp"

namespace strgode {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias-corrected moments. A non-finite gradient rejects
// the whole step before any parameter is touched.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<std::pair<std::string, Tensor*>>& params,
              const std::map<std::string, Tensor>& grads, double lr) {
        for (const auto& [name, p] : params) {
            auto it = grads.find(name);
            if (it == grads.end())
                throw std::invalid_argument("adam: missing gradient for " + name);
            if (!it->second.same_shape(*p))
                throw std::invalid_argument("adam: gradient shape mismatch for " + name);
            if (!it->second.all_finite())
                throw std::invalid_argument("adam: non-finite gradient for " + name);
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const auto& [name, p] : params) {
            const Tensor& g = grads.at(name);
            Moments& m = moments_[name];
            if (m.m.empty()) {
                m.m = Tensor(p->rows(), p->cols());
                m.v = Tensor(p->rows(), p->cols());
            }
            for (std::size_t k = 0; k < p->numel(); ++k) {
                const double gk = g.vec()[k];
                m.m.vec()[k] = cfg_.beta1 * m.m.vec()[k] + (1.0 - cfg_.beta1) * gk;
                m.v.vec()[k] = cfg_.beta2 * m.v.vec()[k] + (1.0 - cfg_.beta2) * gk * gk;
                const double mhat = m.m.vec()[k] / bc1;
                const double vhat = m.v.vec()[k] / bc2;
                p->vec()[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    long step_count() const { return t_; }

private:
    struct Moments {
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::map<std::string, Moments> moments_;
    long t_ = 0;
};

// Mean absolute error over all entries; plain value-level version used by
// evaluation (the differentiable one is the tape's mean_abs of a difference).
inline double mae_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mae_loss: shape mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < pred.numel(); ++k)
        s += std::abs(pred.vec()[k] - target.vec()[k]);
    return s / static_cast<double>(pred.numel());
}

} // namespace strgode
