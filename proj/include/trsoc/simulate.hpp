#pragma once

#include <cstdint>
#include <vector>

#include "trsoc/problem.hpp"
#include "trsoc/time_grid.hpp"

namespace trsoc {

enum class Integrator { euler, exp_ou };

// Simulated paths with their driving noise increments, stored time-major:
// states[(j*K + k)*d + i] holds coordinate i of trajectory k at grid index j.
// noise[(j*K + k)*d + i] holds the increment dW_j used between s_j and s_{j+1};
// under exp_ou it is the variance-matched increment eta*sqrt(1-a^2)*xi / sigma
// so that the Girsanov formulas read identically for both integrators.
struct TrajectoryBatch {
    int count = 0;
    int dim = 0;
    TimeGrid grid;
    Integrator integrator = Integrator::euler;
    std::vector<double> states;  // (J+1) * K * d
    std::vector<double> noise;   // J * K * d

    int steps() const { return grid.steps(); }

    const double* state(int k, int j) const {
        return states.data() + (static_cast<std::size_t>(j) * count + k) * dim;
    }
    const double* state_block(int j) const {
        return states.data() + static_cast<std::size_t>(j) * count * dim;
    }
    const double* noise_ptr(int k, int j) const {
        return noise.data() + (static_cast<std::size_t>(j) * count + k) * dim;
    }
    const double* noise_block(int j) const {
        return noise.data() + static_cast<std::size_t>(j) * count * dim;
    }
};

// Simulates K trajectories under the given control. Deterministic in
// (seed, config): each trajectory owns a counter-based stream derived from
// (seed, k). Throws on non-finite states (naming the step) and when exp_ou is
// requested for a drift that is not of the form -zeta(t) x.
TrajectoryBatch simulate(const SocProblem& problem, const BatchControl& control, const TimeGrid& grid,
                         int count, std::uint64_t seed, Integrator integrator = Integrator::euler);

}  // namespace trsoc
