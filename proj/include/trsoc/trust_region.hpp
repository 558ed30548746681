#pragma once

#include <utility>
#include <vector>

#include "trsoc/measures.hpp"

namespace trsoc {

// Trust-region annealing schedule. beta follows the multiplier product
//   beta_{i+1} = 1 - prod_j lambda_j/(1+lambda_j),
// updated incrementally as beta_{i+1} = beta_i + (1-beta_i)/(1+lambda_i),
// so beta hits 1 exactly as soon as some lambda_j = 0.
struct AnnealingState {
    int iteration = 0;
    std::vector<double> lambdas;
    double beta = 0.0;
    double epsilon = 0.1;
    double delta = 1e-3;
};

// Dual of the KL trust-region step evaluated on log weights logw = -W_i:
//   L(lambda) = -(1+lambda) * logmeanexp(logw/(1+lambda)) - lambda*epsilon.
// The optional sample weights (nonnegative, summing to 1) replace the plain
// mean; the default is uniform.
double dual_value(const LogWeights& logw, double lambda, double epsilon);
double dual_value(const LogWeights& logw, double lambda, double epsilon,
                  std::span<const double> sample_weights);

// Maximizer of the dual over lambda >= 0. Searches theta = log(1+lambda) in
// [0, 40] by golden section (the dual is concave in lambda, hence unimodal in
// theta) and returns 0 when the constraint is inactive.
double solve_lambda(const LogWeights& logw, double epsilon);
double solve_lambda(const LogWeights& logw, double epsilon, std::span<const double> sample_weights);

// Appends lambda_i and advances beta.
AnnealingState update_beta(const AnnealingState& state, double lambda_i);

// Product form 1 - prod lambda_j/(1+lambda_j); equals the incremental
// recursion up to roundoff and is used to cross-check it.
double beta_from_lambdas(std::span<const double> lambdas);

// Monte Carlo Fisher information of the geometric annealing family at the
// current iterate: the sample variance of log(dQ/dP^{u_0}) over samples drawn
// under P^{u_i} = Q^(beta). beta is the annealing parameter the estimate
// refers to; the estimator itself is the variance of the supplied log-RND.
double fisher_information(const LogWeights& logw_target_vs_prior, double beta);

// Finite-support measure with an unnormalized target, used as an exact oracle
// for the trust-region step.
struct DiscreteMeasure {
    std::vector<double> q;    // probabilities, sum to 1
    std::vector<double> rho;  // unnormalized target, > 0 wherever q > 0

    int support() const { return static_cast<int>(q.size()); }
    void validate() const;
};

// One exact trust-region step in density space:
//   q_next = q^(lambda/(1+lambda)) rho^(1/(1+lambda)) / Z(lambda)
// with lambda maximizing  -(1+lambda) log Z(lambda) - lambda*epsilon.
std::pair<DiscreteMeasure, double> discrete_tr_step(const DiscreteMeasure& m, double epsilon);

struct StepDiagnostics {
    double kl = 0.0;   // KL(P^{u_{i+1}} | P^{u_i}) estimate from tempered weights
    double ess = 0.0;  // normalized effective sample size in (0, 1]
};

// Diagnostics of the tempered reweighting at multiplier lambda:
// ESS = 1/(K sum w_k^2) with w the self-normalized tempered weights, and
// KL estimated as sum_k w_k * temper*logw_k - logmeanexp(temper*logw).
StepDiagnostics kl_and_ess_diagnostics(const LogWeights& logw, double lambda);

}  // namespace trsoc
