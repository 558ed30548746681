#pragma once

#include <vector>

#include "trsoc/common.hpp"

namespace trsoc {

// Discretization 0 = s_0 < s_1 < ... < s_J = T. Time integrals everywhere use
// left-endpoint Riemann sums on this grid, matching the Euler-Maruyama and Ito
// conventions.
struct TimeGrid {
    double horizon = 1.0;
    std::vector<double> times;

    TimeGrid() = default;
    TimeGrid(double T, std::vector<double> s) : horizon(T), times(std::move(s)) { validate(); }

    static TimeGrid uniform(double T, int J) {
        require(J >= 1, "TimeGrid: need at least one step");
        require(T > 0.0, "TimeGrid: horizon must be positive");
        std::vector<double> s(J + 1);
        for (int j = 0; j <= J; ++j) s[j] = T * static_cast<double>(j) / J;
        s.back() = T;
        return TimeGrid(T, std::move(s));
    }

    int steps() const { return static_cast<int>(times.size()) - 1; }
    double dt(int j) const { return times[j + 1] - times[j]; }

    void validate() const {
        require(times.size() >= 2, "TimeGrid: need at least one step");
        require(times.front() == 0.0, "TimeGrid: grid must start at 0");
        require(times.back() == horizon, "TimeGrid: grid must end at the horizon");
        for (std::size_t j = 0; j + 1 < times.size(); ++j)
            require(times[j] < times[j + 1], "TimeGrid: times must be strictly increasing");
    }
};

}  // namespace trsoc
