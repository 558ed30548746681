#include "trsoc/measures.hpp"

#include <cmath>

namespace trsoc {

std::vector<double> work(const TrajectoryBatch& batch, const SocProblem& problem) {
    const int K = batch.count, d = batch.dim, J = batch.steps();
    std::vector<double> out(K, 0.0);
    for (int j = 0; j < J; ++j) {
        const double t = batch.grid.times[j];
        const double dt = batch.grid.dt(j);
        const double* xj = batch.state_block(j);
        for (int k = 0; k < K; ++k) {
            const double f = problem.running_cost(xj + static_cast<std::size_t>(k) * d, t);
            if (!std::isfinite(f))
                fail_runtime("work: non-finite running cost at step ", j, " (trajectory ", k, ")");
            out[k] += f * dt;
        }
    }
    const double* xT = batch.state_block(J);
    for (int k = 0; k < K; ++k) {
        const double g = problem.terminal_cost(xT + static_cast<std::size_t>(k) * d);
        if (!std::isfinite(g)) fail_runtime("work: non-finite terminal cost (trajectory ", k, ")");
        out[k] += g;
    }
    return out;
}

std::vector<double> girsanov_log_rnd(const BatchControl& u, const BatchControl& v,
                                     const BatchControl& w, const TrajectoryBatch& batch) {
    const int K = batch.count, d = batch.dim, J = batch.steps();
    if (u.dim() != d || v.dim() != d || w.dim() != d)
        fail_contract("girsanov_log_rnd: control dimension does not match batch dimension ", d);
    std::vector<double> out(K, 0.0);
    std::vector<double> ub(static_cast<std::size_t>(K) * d), vb(ub.size()), wb(ub.size());
    for (int j = 0; j < J; ++j) {
        const double t = batch.grid.times[j];
        const double dt = batch.grid.dt(j);
        const double* xj = batch.state_block(j);
        const double* dw = batch.noise_block(j);
        const std::span<const double> xs(xj, static_cast<std::size_t>(K) * d);
        u.eval(xs, K, t, ub);
        v.eval(xs, K, t, vb);
        w.eval(xs, K, t, wb);
        for (int k = 0; k < K; ++k) {
            const std::size_t off = static_cast<std::size_t>(k) * d;
            double acc = 0.0;
            for (int i = 0; i < d; ++i) {
                const double du = ub[off + i] - vb[off + i];
                acc += du * dw[off + i];
                acc += (du * wb[off + i] - 0.5 * (ub[off + i] * ub[off + i] - vb[off + i] * vb[off + i])) * dt;
            }
            out[k] += acc;
        }
    }
    return out;
}

std::vector<double> shifted_work(const TrajectoryBatch& batch, const SocProblem& problem,
                                 const BatchControl& u_i) {
    const int K = batch.count, d = batch.dim, J = batch.steps();
    std::vector<double> out = work(batch, problem);
    if (u_i.is_zero()) return out;
    std::vector<double> ub(static_cast<std::size_t>(K) * d);
    for (int j = 0; j < J; ++j) {
        const double t = batch.grid.times[j];
        const double dt = batch.grid.dt(j);
        const double* xj = batch.state_block(j);
        const double* dw = batch.noise_block(j);
        u_i.eval(std::span<const double>(xj, static_cast<std::size_t>(K) * d), K, t, ub);
        for (int k = 0; k < K; ++k) {
            const std::size_t off = static_cast<std::size_t>(k) * d;
            double acc = 0.0;
            for (int i = 0; i < d; ++i)
                acc += 0.5 * ub[off + i] * ub[off + i] * dt + ub[off + i] * dw[off + i];
            out[k] += acc;
        }
    }
    return out;
}

std::vector<double> self_normalize(const LogWeights& logw, double temper) {
    if (logw.values.empty()) fail_contract("self_normalize: empty batch");
    require(temper >= 0.0, "self_normalize: temper must be nonnegative");
    std::vector<double> scaled(logw.values.size());
    for (std::size_t k = 0; k < scaled.size(); ++k) scaled[k] = temper * logw.values[k];
    const double lse = log_sum_exp(scaled);
    std::vector<double> out(scaled.size());
    for (std::size_t k = 0; k < scaled.size(); ++k) out[k] = std::exp(scaled[k] - lse);
    return out;
}

}  // namespace trsoc
