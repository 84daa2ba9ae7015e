#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "strgode/autodiff.hpp"

namespace strgode {

// Time is measured in scheduling intervals (one bin = 1.0) so the dynamics
// stay O(1) regardless of dataset granularity.
struct TimeGrid {
    double t_start = 0.0;
    double t_end = 0.0;
    int n_intermediate = 3; // number of equal sub-steps across [t_start, t_end]
};

enum class OdeMethod { Euler, Rk4 };

inline const char* ode_method_name(OdeMethod m) {
    return m == OdeMethod::Euler ? "euler" : "rk4";
}

inline OdeMethod parse_ode_method(const std::string& s) {
    if (s == "euler") return OdeMethod::Euler;
    if (s == "rk4") return OdeMethod::Rk4;
    throw std::invalid_argument("unknown ODE method: " + s);
}

// Dynamics are graph builders so every solver step stays differentiable.
using Dynamics = std::function<ad::Var(ad::Graph&, ad::Var z, double t)>;

inline ad::Var euler_step(ad::Graph& g, const Dynamics& f, ad::Var z, double t, double h) {
    if (h == 0.0) return z;
    ad::Var k = f(g, z, t);
    return g.add(z, g.affine(k, h, 0.0));
}

inline ad::Var rk4_step(ad::Graph& g, const Dynamics& f, ad::Var z, double t, double h) {
    if (h == 0.0) return z;
    ad::Var k1 = f(g, z, t);
    ad::Var k2 = f(g, g.add(z, g.affine(k1, h / 2.0, 0.0)), t + h / 2.0);
    ad::Var k3 = f(g, g.add(z, g.affine(k2, h / 2.0, 0.0)), t + h / 2.0);
    ad::Var k4 = f(g, g.add(z, g.affine(k3, h, 0.0)), t + h);
    ad::Var sum = g.add(g.add(k1, g.affine(k2, 2.0, 0.0)),
                        g.add(g.affine(k3, 2.0, 0.0), k4));
    return g.add(z, g.affine(sum, h / 6.0, 0.0));
}

// Fixed-step integration across [t_start, t_end] with n_intermediate equal
// sub-steps. A zero-length interval returns z0 itself; t_end < t_start steps
// backward with negative h.
inline ad::Var integrate(ad::Graph& g, const Dynamics& f, ad::Var z0, const TimeGrid& grid,
                         OdeMethod method) {
    if (grid.n_intermediate < 1)
        throw std::invalid_argument("integrate: n_intermediate must be >= 1");
    if (grid.t_start == grid.t_end) return z0;
    const double h = (grid.t_end - grid.t_start) / static_cast<double>(grid.n_intermediate);
    ad::Var z = z0;
    for (int s = 0; s < grid.n_intermediate; ++s) {
        const double t = grid.t_start + h * static_cast<double>(s);
        z = method == OdeMethod::Euler ? euler_step(g, f, z, t, h)
                                       : rk4_step(g, f, z, t, h);
    }
    return z;
}

} // namespace strgode
