#pragma once

#include "trsoc/losses.hpp"
#include "trsoc/measures.hpp"
#include "trsoc/problem.hpp"
#include "trsoc/simulate.hpp"

namespace trsoc {

// Off-policy training set for one outer iteration: trajectories, their noise,
// frozen previous-control evaluations, log weights logw = -W_i, and optionally
// the adjoint regression targets. Refreshed wholesale each iteration; every
// row shares the same iteration provenance.
struct ReplayBuffer {
    int count = 0;
    int dim = 0;
    TimeGrid grid;
    std::vector<double> states;         // (J+1)*K*d time-major, copied from the batch
    std::vector<double> noise;          // J*K*d
    std::vector<double> u_prev;         // J*K*d, u_i at the left endpoints
    std::vector<double> logw;           // K
    std::vector<double> adjoint_sigma;  // J*K*d regression target -sigma(s_j) a_j; empty unless attached
    double lambda = 0.0;
    double beta_next = 0.0;
    int iteration = -1;

    int steps() const { return grid.steps(); }

    LossBatch minibatch(std::span<const int> rows) const;
    // Uniform with replacement.
    LossBatch sample_minibatch(int size, RandomStream& rs) const;
};

// Evaluates and freezes u_i along the batch, and computes logw = -W_i.
ReplayBuffer build_buffer(const TrajectoryBatch& batch, const SocProblem& problem,
                          const BatchControl& u_i, int iteration);

// Computes lean adjoints at beta_next and stores the regression target
// -sigma(s_j) a_j for the J left endpoints. The sign follows the optimal
// control u = -sigma^T grad V, whose adjoint estimate is -sigma^T a.
void attach_adjoints(ReplayBuffer& buffer, const TrajectoryBatch& batch, const SocProblem& problem,
                     double beta_next, AdjointMethod method = AdjointMethod::automatic);

}  // namespace trsoc
