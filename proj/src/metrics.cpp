#include "trsoc/metrics.hpp"

#include <cmath>

#include "trsoc/measures.hpp"

namespace trsoc {

Estimate control_l2_error(const BatchControl& u_ref, const BatchControl& u, const SocProblem& problem,
                          const TimeGrid& grid, int count, std::uint64_t seed, Integrator integrator) {
    const int d = problem.dim;
    TrajectoryBatch batch = simulate(problem, u_ref, grid, count, seed, integrator);
    std::vector<double> acc(count, 0.0);
    std::vector<double> ur(static_cast<std::size_t>(count) * d), uu(ur.size());
    for (int j = 0; j < grid.steps(); ++j) {
        const double t = grid.times[j];
        const double dt = grid.dt(j);
        const std::span<const double> xs(batch.state_block(j), static_cast<std::size_t>(count) * d);
        u_ref.eval(xs, count, t, ur);
        u.eval(xs, count, t, uu);
        for (int k = 0; k < count; ++k) {
            double s = 0.0;
            for (int i = 0; i < d; ++i) {
                const double dd = ur[static_cast<std::size_t>(k) * d + i] - uu[static_cast<std::size_t>(k) * d + i];
                s += dd * dd;
            }
            acc[k] += 0.5 * s * dt;
        }
    }
    return {mean(acc), standard_error(acc)};
}

Estimate log_z_estimate(const TrajectoryBatch& batch, const SocProblem& problem, const BatchControl& u) {
    std::vector<double> neg = shifted_work(batch, problem, u);
    for (auto& v : neg) v = -v;
    const double logz = log_mean_exp(neg);
    // delta-method standard error of log Z from the normalized weights
    std::vector<double> w(neg.size());
    for (std::size_t k = 0; k < neg.size(); ++k) w[k] = std::exp(neg[k] - logz);
    const double se = standard_error(w);
    return {logz, se};
}

double mode_tvd(std::span<const double> samples, int count, const GmmTarget& target) {
    target.validate();
    if (count < 1) fail_contract("mode_tvd: empty sample set");
    const int d = target.dim;
    const int K = target.components();
    std::vector<double> counts(K, 0.0);
    std::vector<double> lw(K);
    for (int k = 0; k < K; ++k) lw[k] = std::log(target.weights[k]) - 0.5 * d * std::log(target.vars[k]);
    for (int n = 0; n < count; ++n) {
        const double* x = samples.data() + static_cast<std::size_t>(n) * d;
        if (!all_finite(std::span<const double>(x, d))) fail_contract("mode_tvd: non-finite sample");
        int best = 0;
        double bestv = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            double q = 0.0;
            const double* mu = target.means.data() + static_cast<std::size_t>(k) * d;
            for (int i = 0; i < d; ++i) {
                const double z = x[i] - mu[i];
                q += z * z;
            }
            const double v = lw[k] - 0.5 * q / target.vars[k];
            if (v > bestv) {
                bestv = v;
                best = k;
            }
        }
        counts[best] += 1.0;
    }
    double tvd = 0.0;
    for (int k = 0; k < K; ++k) tvd += std::abs(target.weights[k] - counts[k] / count);
    return tvd;
}

}  // namespace trsoc
