#include "trsoc/trust_region.hpp"

#include <algorithm>
#include <cmath>

namespace trsoc {

namespace {

constexpr double kThetaMax = 40.0;  // lambda = e^theta - 1 spans [0, ~2.4e17]

// Golden-section maximization of a unimodal function on [lo, hi].
template <typename F>
double golden_max(F&& f, double lo, double hi, double tol) {
    constexpr double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

double dual_impl(std::span<const double> logw, double lambda, double epsilon,
                 std::span<const double> sw) {
    if (logw.size() < 2) fail_contract("dual_value: need at least 2 samples");
    require(lambda >= 0.0, "dual_value: lambda must be nonnegative");
    require(epsilon > 0.0, "dual_value: epsilon must be positive");
    const double temper = 1.0 / (1.0 + lambda);
    std::vector<double> scaled(logw.size());
    for (std::size_t k = 0; k < logw.size(); ++k) scaled[k] = temper * logw[k];
    const double lme = sw.empty() ? log_mean_exp(scaled) : log_weighted_sum_exp(scaled, sw);
    return -(1.0 + lambda) * lme - lambda * epsilon;
}

double solve_impl(const LogWeights& logw, double epsilon, std::span<const double> sw) {
    auto obj = [&](double theta) {
        const double lambda = std::expm1(theta);
        const double v = dual_impl(logw.values, lambda, epsilon, sw);
        if (!std::isfinite(v)) fail_runtime("solve_lambda: non-finite dual at lambda=", lambda);
        return v;
    };
    // Inactive constraint: nonpositive slope at lambda = 0.
    const double f0 = obj(0.0);
    const double h = 1e-7;
    if (obj(h) <= f0) return 0.0;
    const double theta = golden_max(obj, 0.0, kThetaMax, 1e-12);
    const double lambda = std::expm1(theta);
    // Guard against a ridge right at the origin.
    if (dual_impl(logw.values, lambda, epsilon, sw) < f0) return 0.0;
    return lambda;
}

}  // namespace

double dual_value(const LogWeights& logw, double lambda, double epsilon) {
    return dual_impl(logw.values, lambda, epsilon, {});
}

double dual_value(const LogWeights& logw, double lambda, double epsilon,
                  std::span<const double> sample_weights) {
    return dual_impl(logw.values, lambda, epsilon, sample_weights);
}

double solve_lambda(const LogWeights& logw, double epsilon) { return solve_impl(logw, epsilon, {}); }

double solve_lambda(const LogWeights& logw, double epsilon, std::span<const double> sample_weights) {
    return solve_impl(logw, epsilon, sample_weights);
}

AnnealingState update_beta(const AnnealingState& state, double lambda_i) {
    require(lambda_i >= 0.0, "update_beta: lambda must be nonnegative");
    AnnealingState next = state;
    next.iteration = state.iteration + 1;
    next.lambdas.push_back(lambda_i);
    if (std::isinf(lambda_i))
        next.beta = state.beta;
    else
        next.beta = state.beta + (1.0 - state.beta) / (1.0 + lambda_i);
    return next;
}

double beta_from_lambdas(std::span<const double> lambdas) {
    double prod = 1.0;
    for (double l : lambdas) prod *= std::isinf(l) ? 1.0 : l / (1.0 + l);
    return 1.0 - prod;
}

double fisher_information(const LogWeights& logw_target_vs_prior, double beta) {
    if (logw_target_vs_prior.size() < 2) fail_contract("fisher_information: need at least 2 samples");
    require(beta > 0.0 && beta <= 1.0, "fisher_information: beta must be in (0,1]");
    return sample_variance(logw_target_vs_prior.values);
}

void DiscreteMeasure::validate() const {
    require(!q.empty() && q.size() == rho.size(), "DiscreteMeasure: q and rho must be nonempty and equal size");
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        require(q[i] >= 0.0, "DiscreteMeasure: q must be nonnegative");
        if (q[i] > 0.0 && !(rho[i] > 0.0))
            fail_contract("DiscreteMeasure: rho must be positive where q is (infinite KL at atom ", i, ")");
        s += q[i];
    }
    require(std::abs(s - 1.0) <= 1e-9, "DiscreteMeasure: q must sum to 1");
}

std::pair<DiscreteMeasure, double> discrete_tr_step(const DiscreteMeasure& m, double epsilon) {
    m.validate();
    require(epsilon > 0.0, "discrete_tr_step: epsilon must be positive");
    const int n = m.support();
    std::vector<double> logq(n), logrho(n);
    for (int i = 0; i < n; ++i) {
        logq[i] = m.q[i] > 0.0 ? std::log(m.q[i]) : -std::numeric_limits<double>::infinity();
        logrho[i] = std::log(m.rho[i]);
    }
    auto log_z = [&](double lambda) {
        std::vector<double> e(n);
        for (int i = 0; i < n; ++i) e[i] = (lambda * logq[i] + logrho[i]) / (1.0 + lambda);
        return log_sum_exp(e);
    };
    auto dual = [&](double theta) {
        const double lambda = std::expm1(theta);
        return -(1.0 + lambda) * log_z(lambda) - lambda * epsilon;
    };
    double lambda = 0.0;
    const double f0 = dual(0.0);
    if (dual(1e-7) > f0) {
        const double theta = golden_max(dual, 0.0, kThetaMax, 1e-12);
        lambda = std::expm1(theta);
        if (dual(std::log1p(lambda)) < f0) lambda = 0.0;
    }
    DiscreteMeasure next = m;
    std::vector<double> e(n);
    for (int i = 0; i < n; ++i) e[i] = (lambda * logq[i] + logrho[i]) / (1.0 + lambda);
    const double lse = log_sum_exp(e);
    for (int i = 0; i < n; ++i) next.q[i] = std::exp(e[i] - lse);
    return {next, lambda};
}

StepDiagnostics kl_and_ess_diagnostics(const LogWeights& logw, double lambda) {
    require(lambda >= 0.0, "kl_and_ess_diagnostics: lambda must be nonnegative");
    const double temper = 1.0 / (1.0 + lambda);
    const std::size_t K = logw.size();
    std::vector<double> w = self_normalize(logw, temper);
    double sumsq = 0.0;
    for (double v : w) sumsq += v * v;
    StepDiagnostics diag;
    diag.ess = 1.0 / (static_cast<double>(K) * sumsq);
    std::vector<double> scaled(K);
    for (std::size_t k = 0; k < K; ++k) scaled[k] = temper * logw.values[k];
    const double lme = log_mean_exp(scaled);
    double kl = 0.0;
    for (std::size_t k = 0; k < K; ++k) kl += w[k] * scaled[k];
    diag.kl = kl - lme;
    return diag;
}

}  // namespace trsoc
