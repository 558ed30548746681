#pragma once

#include <string>
#include <vector>

#include "trsoc/problem.hpp"
#include "trsoc/simulate.hpp"

namespace trsoc {

// Unnormalized log importance weights, one per trajectory (natural log).
// The provenance tag names the measure pair for diagnostics.
struct LogWeights {
    std::vector<double> values;
    std::string provenance;

    std::size_t size() const { return values.size(); }
};

// Work functional along each path: sum_j f(X_j, s_j) dt_j + g(X_J)
// (left-endpoint Riemann sum).
std::vector<double> work(const TrajectoryBatch& batch, const SocProblem& problem);

// Girsanov log Radon-Nikodym derivative log dP^u/dP^v evaluated along a batch
// simulated under control w:
//   sum_j (u-v)(X_j,s_j).dW_j + sum_j [ (u-v).w - 0.5(|u|^2-|v|^2) ](X_j,s_j) dt_j.
// For w=u this reduces to  sum (u-v).dW + 0.5 sum |u-v|^2 dt,
// for w=v to              sum (u-v).dW - 0.5 sum |u-v|^2 dt.
std::vector<double> girsanov_log_rnd(const BatchControl& u, const BatchControl& v,
                                     const BatchControl& w, const TrajectoryBatch& batch);

// Shifted work W_i along paths simulated under u_i (with their stored noise):
//   sum_j 0.5 |u_i(X_j,s_j)|^2 dt_j + sum_j u_i(X_j,s_j).dW_j + work.
// The log importance weight of the target against P^{u_i} is -W_i up to an
// additive constant.
std::vector<double> shifted_work(const TrajectoryBatch& batch, const SocProblem& problem,
                                 const BatchControl& u_i);

// Tempered self-normalized weights: softmax(temper * logw) over the batch,
// computed max-shifted. temper = 1/(1+lambda). Invariant to constant shifts
// of logw.
std::vector<double> self_normalize(const LogWeights& logw, double temper);

}  // namespace trsoc
