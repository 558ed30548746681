#include "trsoc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trsoc {

namespace {

// Per-trajectory Girsanov bracket sum_j [0.5|u_i-u|^2 dt_j + (u_i-u).dW_j],
// reduced to a count x 1 column node.
int girsanov_bracket(Tape& tape, const LossBatch& batch, ControlNet& net) {
    const int J = batch.steps();
    const int B = batch.count;
    const int x_id = tape.constant(J * B, batch.dim, batch.states);
    const int u_out = net.forward(tape, x_id, std::span<const double>(batch.grid.times.data(), J), B);
    const int uprev = tape.constant(J * B, batch.dim, batch.u_prev);
    const int delta = tape.sub(uprev, u_out);

    std::vector<double> half_dt(static_cast<std::size_t>(J) * B);
    for (int j = 0; j < J; ++j)
        std::fill_n(half_dt.begin() + static_cast<std::size_t>(j) * B, B, 0.5 * batch.grid.dt(j));
    const int q = tape.mul_rows(tape.row_sqnorm(delta), tape.constant(J * B, 1, std::move(half_dt)));
    const int s = tape.row_dot(delta, tape.constant(J * B, batch.dim, batch.noise));
    return tape.block_sum_rows(tape.add(q, s), J);
}

int lv_argument(Tape& tape, const LossBatch& batch, ControlNet& net) {
    const int bracket = girsanov_bracket(tape, batch, net);
    const int lw = tape.constant(batch.count, 1, batch.logw);
    return tape.add(bracket, tape.scale(lw, batch.temper()));
}

}  // namespace

void LossBatch::validate(bool need_adjoints) const {
    if (count < 2) fail_contract("LossBatch: need at least 2 trajectories, got ", count);
    const std::size_t rows = static_cast<std::size_t>(steps()) * count;
    if (states.size() != rows * dim || noise.size() != rows * dim || u_prev.size() != rows * dim)
        fail_contract("LossBatch: array sizes do not share (K, J, d)");
    if (logw.size() != static_cast<std::size_t>(count)) fail_contract("LossBatch: logw size mismatch");
    if (!all_finite(logw)) fail_contract("LossBatch: non-finite logw");
    require(lambda >= 0.0, "LossBatch: lambda must be nonnegative");
    if (need_adjoints && adjoint_sigma.size() != rows * dim)
        fail_contract("LossBatch: adjoint states missing or mis-sized");
}

int lv_loss(Tape& tape, const LossBatch& batch, ControlNet& net, bool reweighted) {
    batch.validate();
    const int z = lv_argument(tape, batch, net);
    if (!reweighted) return tape.variance_rows(z);
    LogWeights lw{batch.logw, "buffer"};
    const std::vector<double> w = self_normalize(lw, batch.temper());
    return tape.weighted_variance_rows(z, w);
}

int ce_loss(Tape& tape, const LossBatch& batch, ControlNet& net) {
    batch.validate();
    const int bracket = girsanov_bracket(tape, batch, net);
    LogWeights lw{batch.logw, "buffer"};
    const std::vector<double> w = self_normalize(lw, batch.temper());
    // log(K w_k): the tempered RND term with its batch normalizer folded in.
    std::vector<double> log_kw(batch.count);
    for (int k = 0; k < batch.count; ++k)
        log_kw[k] = std::log(static_cast<double>(batch.count) * w[k]);
    const int integrand = tape.add(bracket, tape.constant(batch.count, 1, std::move(log_kw)));
    return tape.weighted_mean_rows(integrand, w);
}

int moment_loss(Tape& tape, const LossBatch& batch, ControlNet& net, Param& log_z) {
    batch.validate();
    require(log_z.rows == 1 && log_z.cols == 1, "moment_loss: log_z must be a scalar parameter");
    const int z = lv_argument(tape, batch, net);
    const int shift = tape.tile_rows(tape.param(log_z), batch.count);
    const int r = tape.sub(z, shift);
    return tape.mean_all(tape.mul(r, r));
}

std::vector<double> lean_adjoint_solve(const TrajectoryBatch& batch, const SocProblem& problem,
                                       double beta, AdjointMethod method) {
    const int K = batch.count, d = batch.dim, J = batch.steps();
    require(beta >= 0.0, "lean_adjoint_solve: beta must be nonnegative");
    const bool closed_available = static_cast<bool>(problem.linear_drift_coef) && problem.zero_running_cost;
    if (method == AdjointMethod::closed_form && !closed_available)
        fail_contract("lean_adjoint_solve: closed form needs linear drift and zero running cost");
    const bool use_closed = method == AdjointMethod::closed_form ||
                            (method == AdjointMethod::automatic && closed_available);

    std::vector<double> a(static_cast<std::size_t>(J + 1) * K * d, 0.0);
    if (beta == 0.0) return a;

    // a_J = beta grad g(X_J)
    const double* xT = batch.state_block(J);
    double* aT = a.data() + static_cast<std::size_t>(J) * K * d;
    parallel_for(K, [&](std::size_t k0, std::size_t k1) {
        for (std::size_t k = k0; k < k1; ++k) {
            problem.terminal_cost_grad(xT + k * d, aT + k * d);
            for (int i = 0; i < d; ++i) {
                aT[k * d + i] *= beta;
                if (!std::isfinite(aT[k * d + i]))
                    fail_runtime("lean_adjoint_solve: non-finite terminal gradient (trajectory ", k, ")");
            }
        }
    }, 512);

    if (use_closed) {
        // gamma(s_j) = exp(int_{s_j}^T c dt) accumulated by per-step Simpson rule.
        std::vector<double> gamma(J + 1, 1.0);
        double acc = 0.0;
        for (int j = J - 1; j >= 0; --j) {
            const double lo = batch.grid.times[j], hi = batch.grid.times[j + 1];
            double seg = 0.0;
            const int nsub = 16;
            const double h = (hi - lo) / nsub;
            for (int s = 0; s < nsub; ++s) {
                const double x0 = lo + s * h;
                seg += h / 6.0 *
                       (problem.linear_drift_coef(x0) + 4.0 * problem.linear_drift_coef(x0 + 0.5 * h) +
                        problem.linear_drift_coef(x0 + h));
            }
            acc += seg;
            gamma[j] = std::exp(acc);
        }
        for (int j = 0; j < J; ++j) {
            double* aj = a.data() + static_cast<std::size_t>(j) * K * d;
            for (std::size_t idx = 0; idx < static_cast<std::size_t>(K) * d; ++idx)
                aj[idx] = gamma[j] * aT[idx];
        }
        return a;
    }

    require(static_cast<bool>(problem.drift_jacobian_transpose),
            "lean_adjoint_solve: problem lacks the drift-Jacobian action");
    require(problem.zero_running_cost || static_cast<bool>(problem.running_cost_grad),
            "lean_adjoint_solve: problem lacks the running-cost gradient");
    for (int j = J - 1; j >= 0; --j) {
        const double dt = batch.grid.dt(j);
        const double tnext = batch.grid.times[j + 1];
        const double* xnext = batch.state_block(j + 1);
        const double* anext = a.data() + static_cast<std::size_t>(j + 1) * K * d;
        double* aj = a.data() + static_cast<std::size_t>(j) * K * d;
        parallel_for(K, [&](std::size_t k0, std::size_t k1) {
            std::vector<double> jac(d), fg(d);
            for (std::size_t k = k0; k < k1; ++k) {
                problem.drift_jacobian_transpose(anext + k * d, xnext + k * d, tnext, jac.data());
                if (!problem.zero_running_cost)
                    problem.running_cost_grad(xnext + k * d, tnext, fg.data());
                else
                    std::fill(fg.begin(), fg.end(), 0.0);
                for (int i = 0; i < d; ++i)
                    aj[k * d + i] = anext[k * d + i] + dt * (jac[i] + beta * fg[i]);
            }
        }, 512);
    }
    return a;
}

int socm_loss(Tape& tape, const LossBatch& batch, ControlNet& net, int subsample, RandomStream& rs) {
    batch.validate(/*need_adjoints=*/true);
    const int J = batch.steps();
    const int B = batch.count;
    const int d = batch.dim;
    require(subsample >= 1 && subsample <= J, "socm_loss: subsample count must be in [1, J]");

    // Uniform sample of M distinct grid indices; M = J keeps the full grid.
    std::vector<int> idx(J);
    std::iota(idx.begin(), idx.end(), 0);
    if (subsample < J) {
        for (int j = 0; j < subsample; ++j) {
            const int r = j + static_cast<int>(rs.below(static_cast<std::uint64_t>(J - j)));
            std::swap(idx[j], idx[r]);
        }
        idx.resize(subsample);
        std::sort(idx.begin(), idx.end());
    }
    const int M = static_cast<int>(idx.size());

    std::vector<double> xs(static_cast<std::size_t>(M) * B * d), target(xs.size());
    std::vector<double> times(M), wdt(static_cast<std::size_t>(M) * B);
    const double scale = static_cast<double>(J) / M;
    for (int m = 0; m < M; ++m) {
        const int j = idx[m];
        times[m] = batch.grid.times[j];
        std::copy_n(batch.states.begin() + static_cast<std::size_t>(j) * B * d, static_cast<std::size_t>(B) * d,
                    xs.begin() + static_cast<std::size_t>(m) * B * d);
        std::copy_n(batch.adjoint_sigma.begin() + static_cast<std::size_t>(j) * B * d,
                    static_cast<std::size_t>(B) * d, target.begin() + static_cast<std::size_t>(m) * B * d);
        std::fill_n(wdt.begin() + static_cast<std::size_t>(m) * B, B, 0.5 * batch.grid.dt(j) * scale);
    }
    const int x_id = tape.constant(M * B, d, std::move(xs));
    const int u_out = net.forward(tape, x_id, times, B);
    const int diff = tape.sub(tape.constant(M * B, d, std::move(target)), u_out);
    const int q = tape.mul_rows(tape.row_sqnorm(diff), tape.constant(M * B, 1, std::move(wdt)));
    const int per_traj = tape.block_sum_rows(q, M);
    LogWeights lw{batch.logw, "buffer"};
    const std::vector<double> w = self_normalize(lw, batch.temper());
    return tape.weighted_mean_rows(per_traj, w);
}

}  // namespace trsoc
