#include "trsoc/simulate.hpp"

#include <cmath>

namespace trsoc {

TrajectoryBatch simulate(const SocProblem& problem, const BatchControl& control, const TimeGrid& grid,
                         int count, std::uint64_t seed, Integrator integrator) {
    problem.validate();
    require(count >= 1, "simulate: need at least one trajectory");
    require(control.dim() == problem.dim, "simulate: control dimension does not match problem");
    const int K = count;
    const int d = problem.dim;
    const int J = grid.steps();

    if (integrator == Integrator::exp_ou && !problem.linear_drift_coef)
        fail_contract("simulate: exp_ou integrator requires a linear drift b(x,t) = c(t) x");

    TrajectoryBatch batch;
    batch.count = K;
    batch.dim = d;
    batch.grid = grid;
    batch.integrator = integrator;
    batch.states.assign(static_cast<std::size_t>(J + 1) * K * d, 0.0);
    batch.noise.assign(static_cast<std::size_t>(J) * K * d, 0.0);

    // Pre-draw initial states and standard normals from per-trajectory streams,
    // ordered (j, i) within each stream. Parallel chunks write disjoint rows.
    std::vector<double> xi(static_cast<std::size_t>(J) * K * d);
    parallel_for(K, [&](std::size_t k0, std::size_t k1) {
        for (std::size_t k = k0; k < k1; ++k) {
            RandomStream rs(seed, k);
            problem.sample_initial(rs, batch.states.data() + k * d);
            for (int j = 0; j < J; ++j) {
                double* row = xi.data() + (static_cast<std::size_t>(j) * K + k) * d;
                for (int i = 0; i < d; ++i) row[i] = rs.normal();
            }
        }
    }, 256);

    std::vector<double> u(static_cast<std::size_t>(K) * d);
    for (int j = 0; j < J; ++j) {
        const double t = grid.times[j];
        const double dt = grid.dt(j);
        const double sig = problem.sigma(t);
        if (!(sig > 0.0)) fail_runtime("simulate: sigma(t) must be positive at t=", t);

        const double* xj = batch.state_block(j);
        double* xnext = batch.states.data() + static_cast<std::size_t>(j + 1) * K * d;
        double* dw = batch.noise.data() + static_cast<std::size_t>(j) * K * d;
        const double* xij = xi.data() + static_cast<std::size_t>(j) * K * d;

        control.eval(std::span<const double>(xj, static_cast<std::size_t>(K) * d), K, t, u);

        if (integrator == Integrator::euler) {
            const double sqdt = std::sqrt(dt);
            parallel_for(K, [&](std::size_t k0, std::size_t k1) {
                std::vector<double> b(d);
                for (std::size_t k = k0; k < k1; ++k) {
                    const double* x = xj + k * d;
                    problem.drift(x, t, b.data());
                    const double* uu = u.data() + k * d;
                    for (int i = 0; i < d; ++i) {
                        const double inc = sqdt * xij[k * d + i];
                        dw[k * d + i] = inc;
                        xnext[k * d + i] = x[i] + (b[i] + sig * uu[i]) * dt + sig * inc;
                    }
                }
            }, 512);
        } else {
            const double c = problem.linear_drift_coef(t);  // b(x,t) = c(t) x, c = -zeta
            if (!(c < 0.0))
                fail_contract("simulate: exp_ou requires contracting drift (c(t) < 0), got c=", c, " at t=", t);
            const double zeta = -c;
            const double a = std::exp(-zeta * dt);
            const double eta = sig / std::sqrt(2.0 * zeta);  // stationary scale
            const double noise_std = eta * std::sqrt(1.0 - a * a);
            parallel_for(K, [&](std::size_t k0, std::size_t k1) {
                for (std::size_t k = k0; k < k1; ++k) {
                    const double* x = xj + k * d;
                    const double* uu = u.data() + k * d;
                    for (int i = 0; i < d; ++i) {
                        const double inc = noise_std * xij[k * d + i];
                        dw[k * d + i] = inc / sig;
                        xnext[k * d + i] = a * x[i] + sig * uu[i] * dt + inc;
                    }
                }
            }, 512);
        }

        for (std::size_t idx = 0; idx < static_cast<std::size_t>(K) * d; ++idx)
            if (!std::isfinite(xnext[idx]))
                fail_runtime("simulate: non-finite state at step ", j + 1, " (trajectory ", idx / d, ")");
    }
    return batch;
}

}  // namespace trsoc
