#pragma once

#include "trsoc/benchmarks.hpp"
#include "trsoc/problem.hpp"
#include "trsoc/simulate.hpp"

namespace trsoc {

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

// Monte Carlo control error E[ 0.5 int |u_ref - u|^2 (X^{u_ref}, s) ds ] on
// paths simulated under the reference control.
Estimate control_l2_error(const BatchControl& u_ref, const BatchControl& u, const SocProblem& problem,
                          const TimeGrid& grid, int count, std::uint64_t seed,
                          Integrator integrator = Integrator::euler);

// log Z estimated from a batch simulated under u (with stored noise):
//   log mean exp( -[ sum 0.5|u|^2 dt + sum u.dW + W(X^u) ] ).
Estimate log_z_estimate(const TrajectoryBatch& batch, const SocProblem& problem, const BatchControl& u);

// Total variation distance between target mixing weights and the empirical
// weights of the argmax-partition assignment of the samples; in [0, 2].
double mode_tvd(std::span<const double> samples, int count, const GmmTarget& target);

}  // namespace trsoc
