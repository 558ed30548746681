#pragma once

#include <vector>

#include "trsoc/measures.hpp"
#include "trsoc/net.hpp"
#include "trsoc/rng.hpp"
#include "trsoc/simulate.hpp"
#include "trsoc/tensor.hpp"

namespace trsoc {

// One training minibatch drawn from the replay buffer. Arrays are time-major
// flat: row j*count + k is trajectory k at grid index j, for the J left
// endpoints. logw stores -W_i per trajectory.
struct LossBatch {
    int count = 0;  // trajectories in the minibatch
    int dim = 0;
    TimeGrid grid;
    std::vector<double> states;         // J*count x d at s_0..s_{J-1}
    std::vector<double> noise;          // J*count x d
    std::vector<double> u_prev;         // frozen u_i(X_j, s_j)
    std::vector<double> logw;           // count
    double lambda = 0.0;                // lambda_i of the buffer's iteration
    double beta_next = 0.0;             // beta_{i+1}
    std::vector<double> adjoint_sigma;  // SOCM target -sigma(s_j) a_j, J*count x d

    int steps() const { return grid.steps(); }
    double temper() const { return 1.0 / (1.0 + lambda); }
    void validate(bool need_adjoints = false) const;
};

// Log-variance loss: population variance over trajectories of
//   sum_j 0.5|u_i-u|^2 dt + sum_j (u_i-u).dW + logw/(1+lambda).
// With reweighted=true the variance is computed under the self-normalized
// tempered weights (the u_{i+1}-reference variant); default is the
// u_i-reference form.
int lv_loss(Tape& tape, const LossBatch& batch, ControlNet& net, bool reweighted = false);

// Cross-entropy loss: tempered-weight-weighted mean of the path log-RND,
//   sum_k w_k [ bracket_k(u) + log(K w_k) ],
// with w = softmax(logw/(1+lambda)) treated as constant in theta and the
// unknown proportionality constant removed by the per-batch normalization.
int ce_loss(Tape& tape, const LossBatch& batch, ControlNet& net);

// Moment loss: mean over trajectories of (bracket_k + logw_k/(1+lambda) - logZ)^2,
// optimized jointly over the net and the scalar logZ parameter.
int moment_loss(Tape& tape, const LossBatch& batch, ControlNet& net, Param& log_z);

enum class AdjointMethod { automatic, backward_euler, closed_form };

// Lean adjoint states along stored trajectories:
//   a_J = beta grad g(X_J),
//   a_j = a_{j+1} + dt_j [ (grad b)^T a_{j+1} + beta grad f ](X_{j+1}, s_{j+1}).
// For linear drift b(x,t)=c(t)x with f=0 the closed form
//   a_j = beta exp(int_{s_j}^T c) grad g(X_J)
// is used when available (or when requested). Returns (J+1)*K*d time-major.
std::vector<double> lean_adjoint_solve(const TrajectoryBatch& batch, const SocProblem& problem,
                                       double beta, AdjointMethod method = AdjointMethod::automatic);

// SOC-matching loss on M uniformly subsampled grid indices (without
// replacement; M = J uses the full grid and equals the exact left-endpoint
// integral):
//   sum_k w_k * (J/M) sum_{j in S} dt_j * 0.5 | target_j - u(X_j,s_j) |^2,
// regressing onto the stored adjoint target -sigma^T a.
int socm_loss(Tape& tape, const LossBatch& batch, ControlNet& net, int subsample, RandomStream& rs);

}  // namespace trsoc
