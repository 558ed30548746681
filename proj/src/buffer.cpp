#include "trsoc/buffer.hpp"

namespace trsoc {

ReplayBuffer build_buffer(const TrajectoryBatch& batch, const SocProblem& problem,
                          const BatchControl& u_i, int iteration) {
    const int K = batch.count, d = batch.dim, J = batch.steps();
    ReplayBuffer buf;
    buf.count = K;
    buf.dim = d;
    buf.grid = batch.grid;
    buf.states = batch.states;
    buf.noise = batch.noise;
    buf.iteration = iteration;
    buf.u_prev.assign(static_cast<std::size_t>(J) * K * d, 0.0);
    for (int j = 0; j < J; ++j) {
        const double t = batch.grid.times[j];
        u_i.eval(std::span<const double>(batch.state_block(j), static_cast<std::size_t>(K) * d), K, t,
                 std::span<double>(buf.u_prev.data() + static_cast<std::size_t>(j) * K * d,
                                   static_cast<std::size_t>(K) * d));
    }
    // logw = -W_i assembled from the frozen evaluations
    std::vector<double> w = work(batch, problem);
    buf.logw.assign(K, 0.0);
    for (int j = 0; j < J; ++j) {
        const double dt = batch.grid.dt(j);
        const double* u = buf.u_prev.data() + static_cast<std::size_t>(j) * K * d;
        const double* dw = batch.noise_block(j);
        for (int k = 0; k < K; ++k) {
            double acc = 0.0;
            for (int i = 0; i < d; ++i) {
                const double uv = u[static_cast<std::size_t>(k) * d + i];
                acc += 0.5 * uv * uv * dt + uv * dw[static_cast<std::size_t>(k) * d + i];
            }
            buf.logw[k] -= acc;
        }
    }
    for (int k = 0; k < K; ++k) buf.logw[k] -= w[k];
    if (!all_finite(buf.logw)) fail_runtime("build_buffer: non-finite log weights");
    return buf;
}

void attach_adjoints(ReplayBuffer& buffer, const TrajectoryBatch& batch, const SocProblem& problem,
                     double beta_next, AdjointMethod method) {
    const int K = batch.count, d = batch.dim, J = batch.steps();
    require(buffer.count == K && buffer.dim == d, "attach_adjoints: buffer/batch mismatch");
    const std::vector<double> a = lean_adjoint_solve(batch, problem, beta_next, method);
    buffer.adjoint_sigma.assign(static_cast<std::size_t>(J) * K * d, 0.0);
    for (int j = 0; j < J; ++j) {
        const double sig = problem.sigma(batch.grid.times[j]);
        const double* aj = a.data() + static_cast<std::size_t>(j) * K * d;
        double* out = buffer.adjoint_sigma.data() + static_cast<std::size_t>(j) * K * d;
        for (std::size_t idx = 0; idx < static_cast<std::size_t>(K) * d; ++idx) out[idx] = -sig * aj[idx];
    }
    buffer.beta_next = beta_next;
}

LossBatch ReplayBuffer::minibatch(std::span<const int> rows) const {
    const int B = static_cast<int>(rows.size());
    const int J = steps();
    LossBatch mb;
    mb.count = B;
    mb.dim = dim;
    mb.grid = grid;
    mb.lambda = lambda;
    mb.beta_next = beta_next;
    mb.states.resize(static_cast<std::size_t>(J) * B * dim);
    mb.noise.resize(mb.states.size());
    mb.u_prev.resize(mb.states.size());
    if (!adjoint_sigma.empty()) mb.adjoint_sigma.resize(mb.states.size());
    mb.logw.resize(B);
    for (int b = 0; b < B; ++b) {
        const int k = rows[b];
        require(k >= 0 && k < count, "ReplayBuffer::minibatch: row out of range");
        mb.logw[b] = logw[k];
    }
    for (int j = 0; j < J; ++j) {
        for (int b = 0; b < B; ++b) {
            const std::size_t src = (static_cast<std::size_t>(j) * count + rows[b]) * dim;
            const std::size_t dst = (static_cast<std::size_t>(j) * B + b) * dim;
            for (int i = 0; i < dim; ++i) {
                mb.states[dst + i] = states[src + i];
                mb.noise[dst + i] = noise[src + i];
                mb.u_prev[dst + i] = u_prev[src + i];
            }
            if (!adjoint_sigma.empty())
                for (int i = 0; i < dim; ++i) mb.adjoint_sigma[dst + i] = adjoint_sigma[src + i];
        }
    }
    return mb;
}

LossBatch ReplayBuffer::sample_minibatch(int size, RandomStream& rs) const {
    require(size >= 1 && count >= 1, "ReplayBuffer::sample_minibatch: empty buffer or batch");
    std::vector<int> rows(size);
    for (int& r : rows) r = static_cast<int>(rs.below(static_cast<std::uint64_t>(count)));
    return minibatch(rows);
}

}  // namespace trsoc
