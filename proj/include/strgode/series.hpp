#pragma once

#include <stdexcept>
#include <vector>

#include "strgode/tensor.hpp"

namespace strgode {

// An ordered run of observations: times in interval units (strictly
// increasing) and one N x 2 (inflow, outflow) matrix per timestamp.
struct SeriesWindow {
    std::vector<double> times;
    std::vector<Tensor> values;

    std::size_t size() const { return times.size(); }
    bool empty() const { return times.empty(); }

    void check(const char* who = "SeriesWindow") const {
        if (times.size() != values.size())
            throw std::invalid_argument(std::string(who) + ": times/values length mismatch");
        for (std::size_t i = 1; i < times.size(); ++i)
            if (!(times[i] > times[i - 1]))
                throw std::invalid_argument(std::string(who) +
                                            ": timestamps not strictly increasing");
        for (const auto& v : values)
            if (v.cols() != 2)
                throw std::invalid_argument(std::string(who) + ": values must be N x 2");
    }
};

} // namespace strgode
