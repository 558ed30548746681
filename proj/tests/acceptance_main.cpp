// Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.
// Run a subset by listing criterion numbers as arguments, e.g. "acceptance 1 5".

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "trsoc/buffer.hpp"
#include "trsoc/config.hpp"
#include "trsoc/driver.hpp"
#include "trsoc/losses.hpp"
#include "trsoc/measures.hpp"
#include "trsoc/metrics.hpp"
#include "trsoc/trust_region.hpp"

using namespace trsoc;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------- helpers

double grid_search_lambda(const LogWeights& lw, double eps) {
    double lo = 0.0, hi = 1000.0, step = 1.0, best = 0.0;
    while (true) {
        double bestv = -std::numeric_limits<double>::infinity();
        for (double l = lo; l <= hi + 1e-12; l += step) {
            const double v = dual_value(lw, l, eps);
            if (v > bestv) {
                bestv = v;
                best = l;
            }
        }
        if (step <= 1e-6) break;
        lo = std::max(0.0, best - step);
        hi = std::min(1000.0, best + step);
        step *= 0.01;
    }
    return best;
}

LogWeights random_logw(int n, double scale, std::uint64_t seed) {
    RandomStream rs(seed, 0x5e7);
    LogWeights lw;
    lw.values.resize(n);
    for (auto& v : lw.values) v = scale * rs.normal();
    return lw;
}

double gaussian_kl(double v1, double v0) { return 0.5 * (v1 / v0 - 1.0 - std::log(v1 / v0)); }

// ------------------------------------------------------------- criterion 1

Outcome dual_solver_oracle() {
    double worst = 0.0;
    double solver_seconds = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        LogWeights lw = random_logw(48, 0.2 + 0.02 * trial, 1000 + trial);
        for (double eps : {0.01, 0.1, 1.0}) {
            const auto t0 = std::chrono::steady_clock::now();
            const double got = solve_lambda(lw, eps);
            solver_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const double want = grid_search_lambda(lw, eps);
            worst = std::max(worst, std::abs(got - want));
        }
    }
    std::ostringstream os;
    os << "max |dlambda| = " << worst << " over 300 solves, solver time " << solver_seconds << " s";
    return {worst <= 1e-4 && solver_seconds < 1.0, os.str()};
}

// ------------------------------------------------------------- criterion 2

Outcome discrete_oracle() {
    // brute-force simplex check at m = 3 (coarse 1e-3 sweep + local 1e-5 grid)
    RandomStream rs(77, 0xD15);
    double worst_tvd = 0.0;
    for (int inst = 0; inst < 5; ++inst) {
        DiscreteMeasure m;
        m.q.resize(3);
        m.rho.resize(3);
        double qs = 0.0;
        for (int i = 0; i < 3; ++i) {
            m.q[i] = 0.15 + rs.uniform();
            m.rho[i] = 0.2 + 2.0 * rs.uniform();
            qs += m.q[i];
        }
        for (auto& v : m.q) v /= qs;
        const double eps = 0.03 + 0.05 * rs.uniform();
        auto [next, lambda] = discrete_tr_step(m, eps);
        double rho_sum = m.rho[0] + m.rho[1] + m.rho[2];
        auto objective = [&](double p0, double p1, double p2, double* klq) {
            const double p[3] = {p0, p1, p2};
            double kq = 0.0, obj = 0.0;
            for (int c = 0; c < 3; ++c) {
                if (p[c] <= 0.0) continue;
                kq += p[c] * std::log(p[c] / m.q[c]);
                obj += p[c] * std::log(p[c] / (m.rho[c] / rho_sum));
            }
            *klq = kq;
            return obj;
        };
        auto sweep = [&](double lo0, double hi0, double lo1, double hi1, double step) {
            double best_obj = std::numeric_limits<double>::infinity();
            std::array<double, 3> best{};
            for (double p0 = std::max(0.0, lo0); p0 <= hi0 + 1e-12; p0 += step)
                for (double p1 = std::max(0.0, lo1); p1 <= hi1 + 1e-12; p1 += step) {
                    const double p2 = 1.0 - p0 - p1;
                    if (p2 < 0.0) continue;
                    double klq = 0.0;
                    const double obj = objective(p0, p1, p2, &klq);
                    if (klq <= eps && obj < best_obj) {
                        best_obj = obj;
                        best = {p0, p1, p2};
                    }
                }
            return best;
        };
        const std::array<double, 3> coarse = sweep(0.0, 1.0, 0.0, 1.0, 1e-3);
        const std::array<double, 3> fine =
            sweep(coarse[0] - 3e-3, coarse[0] + 3e-3, coarse[1] - 3e-3, coarse[1] + 3e-3, 1e-5);
        double tvd = 0.0;
        for (int c = 0; c < 3; ++c) tvd += std::abs(fine[c] - next.q[c]);
        worst_tvd = std::max(worst_tvd, tvd);
        if (lambda > 0.0) {
            double kl = 0.0;
            for (int c = 0; c < 3; ++c) kl += next.q[c] * std::log(next.q[c] / m.q[c]);
            if (std::abs(kl - eps) > 1e-6) return {false, "active-constraint KL mismatch"};
        }
    }

    // geometric-path identity out to m = 10
    double worst_rel = 0.0;
    for (int inst = 0; inst < 10; ++inst) {
        const int n = 3 + inst % 8;
        DiscreteMeasure m;
        m.q.resize(n);
        m.rho.resize(n);
        double qs = 0.0;
        for (int i = 0; i < n; ++i) {
            m.q[i] = 0.1 + rs.uniform();
            m.rho[i] = 0.1 + 2.0 * rs.uniform();
            qs += m.q[i];
        }
        for (auto& v : m.q) v /= qs;
        const DiscreteMeasure q0 = m;
        const double eps = 0.02 + 0.05 * rs.uniform();
        AnnealingState state;
        state.epsilon = eps;
        for (int guard = 0; guard < 500; ++guard) {
            auto [next, lambda] = discrete_tr_step(m, eps);
            m = next;
            state = update_beta(state, lambda);
            std::vector<double> want(n);
            for (int i = 0; i < n; ++i)
                want[i] = (1.0 - state.beta) * std::log(q0.q[i]) + state.beta * std::log(q0.rho[i]);
            const double mx = *std::max_element(want.begin(), want.end());
            double lse = 0.0;
            for (auto& v : want) {
                v = std::exp(v - mx);
                lse += v;
            }
            for (int i = 0; i < n; ++i)
                worst_rel = std::max(worst_rel, std::abs(m.q[i] - want[i] / lse) / (want[i] / lse));
            if (lambda == 0.0) break;
        }
    }
    std::ostringstream os;
    os << "simplex-grid TVD = " << worst_tvd << ", geometric-path rel err = " << worst_rel;
    return {worst_tvd <= 2e-3 && worst_rel <= 1e-8, os.str()};
}

// ------------------------------------------------------------- criterion 3

Outcome ess_band() {
    RunConfig cfg;
    cfg.problem = "gmm2d";
    ProblemBundle bundle = make_problem(cfg);
    ZeroControl zero(2);
    TrajectoryBatch batch = simulate(bundle.problem, zero, TimeGrid::uniform(1.0, 50), 10000, 4,
                                     Integrator::exp_ou);
    ReplayBuffer buf = build_buffer(batch, bundle.problem, zero, 0);
    LogWeights lw{buf.logw, "dQ/dP^{u_0}"};
    const double lambda = solve_lambda(lw, 0.1);
    const StepDiagnostics diag = kl_and_ess_diagnostics(lw, lambda);
    std::ostringstream os;
    os << "lambda = " << lambda << ", ESS = " << diag.ess << " (target 1/(2*0.1+1) = 0.833)";
    return {lambda > 0.0 && diag.ess >= 0.75 && diag.ess <= 0.92, os.str()};
}

// ------------------------------------------------------------- criterion 4

Outcome fisher_rao_equidistance() {
    const double theta = 0.8, eps = 0.01;
    const int K = 100000;
    AnnealingState state;
    state.epsilon = eps;
    std::vector<double> fr_steps;
    int guard = 0;
    while (state.beta < 1.0 - 1e-9 && guard++ < 200) {
        const double var_i = 1.0 / (1.0 + 2.0 * state.beta * theta);
        RandomStream rs(4000 + guard, 2);
        LogWeights lw;
        lw.values.resize(K);
        for (auto& v : lw.values) {
            const double x = std::sqrt(var_i) * rs.normal();
            v = -(1.0 - state.beta) * theta * x * x;
        }
        const double lambda = solve_lambda(lw, eps);
        const double beta_prev = state.beta;
        state = update_beta(state, lambda);
        if (lambda > 1e-3) {
            const double var_next = 1.0 / (1.0 + 2.0 * state.beta * theta);
            fr_steps.push_back(std::sqrt(2.0 * gaussian_kl(var_next, var_i)));
            (void)beta_prev;
        }
    }
    if (fr_steps.size() < 3) return {false, "annealing collapsed in under 3 steps"};
    const double lo = *std::min_element(fr_steps.begin(), fr_steps.end());
    const double hi = *std::max_element(fr_steps.begin(), fr_steps.end());
    const double spread = (hi - lo) / mean(fr_steps);
    std::ostringstream os;
    os << fr_steps.size() << " steps, sqrt(2 KL) spread = " << spread
       << " (target sqrt(2 eps) = " << std::sqrt(2.0 * eps) << ", mean " << mean(fr_steps) << ")";
    return {spread <= 0.25, os.str()};
}

// ------------------------------------------------------------- criterion 5

Outcome gradient_correctness() {
    NetConfig nc;
    nc.dim = 1;
    nc.layers = 2;
    nc.width = 4;
    nc.fourier = 2;
    nc.eta = 2.5;

    DdsSpec dds;
    dds.eta = 2.5;
    GmmTarget target = gmm_preset(1, 3, 3.0, 99);
    SocProblem problem = make_dds_gmm_problem(dds, target);
    ControlNet u_i(nc, 5);
    {
        RandomStream rs(61, 1);
        std::vector<double> flat = u_i.flat_params();
        for (auto& v : flat) v = 0.3 * rs.normal();
        u_i.set_flat_params(flat);
    }
    TrajectoryBatch batch = simulate(problem, u_i, TimeGrid::uniform(1.0, 6), 16, 8, Integrator::exp_ou);
    ReplayBuffer buf = build_buffer(batch, problem, u_i, 0);
    LogWeights lw{buf.logw, "t"};
    buf.lambda = solve_lambda(lw, 0.1);
    AnnealingState st;
    st.epsilon = 0.1;
    buf.beta_next = update_beta(st, buf.lambda).beta;
    attach_adjoints(buf, batch, problem, buf.beta_next);
    std::vector<int> rows(buf.count);
    std::iota(rows.begin(), rows.end(), 0);
    LossBatch full = buf.minibatch(rows);

    ControlNet net(nc, 6);
    {
        RandomStream rs(62, 1);
        std::vector<double> flat = net.flat_params();
        for (auto& v : flat) v = 0.3 * rs.normal();
        net.set_flat_params(flat);
    }
    if (net.param_count() > 100) return {false, "net exceeds 100 parameters"};
    Param log_z("log_z", 1, 1);
    log_z.value[0] = 0.2;

    auto max_err = [&](const std::function<int(Tape&, ControlNet&)>& build) {
        Tape tape;
        net.zero_grad();
        log_z.zero_grad();
        tape.backward(build(tape, net));
        std::vector<double> got;
        for (Param* p : net.params())
            for (double g : p->grad) got.push_back(g);
        got.push_back(log_z.grad[0]);

        std::vector<double> flat = net.flat_params();
        flat.push_back(log_z.value[0]);
        double worst = 0.0;
        const double h = 1e-5;
        for (std::size_t i = 0; i < flat.size(); ++i) {
            auto eval_at = [&](double v) {
                std::vector<double> probe = flat;
                probe[i] = v;
                log_z.value[0] = probe.back();
                probe.pop_back();
                net.set_flat_params(probe);
                Tape t;
                return t.scalar_value(build(t, net));
            };
            const double fd = (eval_at(flat[i] + h) - eval_at(flat[i] - h)) / (2.0 * h);
            log_z.value[0] = flat.back();
            {
                std::vector<double> probe = flat;
                probe.pop_back();
                net.set_flat_params(probe);
            }
            const double scale = std::max({1.0, std::abs(fd), std::abs(got[i])});
            worst = std::max(worst, std::abs(fd - got[i]) / scale);
        }
        return worst;
    };

    const double e_lv = max_err([&](Tape& t, ControlNet& n) { return lv_loss(t, full, n); });
    const double e_lvw = max_err([&](Tape& t, ControlNet& n) { return lv_loss(t, full, n, true); });
    const double e_ce = max_err([&](Tape& t, ControlNet& n) { return ce_loss(t, full, n); });
    const double e_mm = max_err([&](Tape& t, ControlNet& n) { return moment_loss(t, full, n, log_z); });
    const double e_so = max_err([&](Tape& t, ControlNet& n) {
        RandomStream r(5, 5);  // frozen subsample
        return socm_loss(t, full, n, 3, r);
    });
    const double worst = std::max({e_lv, e_lvw, e_ce, e_mm, e_so});
    std::ostringstream os;
    os << "max rel err: lv " << e_lv << ", lv-rw " << e_lvw << ", ce " << e_ce << ", moment " << e_mm
       << ", socm " << e_so << " (" << net.param_count() << "+1 params)";
    return {worst <= 1e-4, os.str()};
}

// ------------------------------------------------------------- criterion 6

Outcome lean_adjoint_closed_form() {
    DdsSpec dds;
    dds.eta = 2.5;
    GmmTarget target;
    target.dim = 1;
    target.weights = {0.5, 0.5};
    target.means = {-1.5, 1.5};
    target.vars = {1.0, 1.0};
    SocProblem p = make_dds_gmm_problem(dds, target);
    GmmOptimalControl ustar(dds, target);
    std::vector<double> mean_err, max_err;
    for (int J : {100, 200, 400, 800}) {
        TrajectoryBatch b = simulate(p, ustar, TimeGrid::uniform(1.0, J), 256, 17, Integrator::exp_ou);
        std::vector<double> eul = lean_adjoint_solve(b, p, 1.0, AdjointMethod::backward_euler);
        std::vector<double> cf = lean_adjoint_solve(b, p, 1.0, AdjointMethod::closed_form);
        double worst = 0.0, acc = 0.0;
        for (std::size_t i = 0; i < eul.size(); ++i) {
            const double e = std::abs(eul[i] - cf[i]);
            worst = std::max(worst, e);
            acc += e;
        }
        mean_err.push_back(acc / static_cast<double>(eul.size()));
        max_err.push_back(worst);
    }
    bool halves = true;
    for (std::size_t i = 0; i + 1 < mean_err.size(); ++i) {
        const double ratio = mean_err[i] / mean_err[i + 1];
        halves = halves && ratio >= 2.0 / 1.5 && ratio <= 2.0 * 1.5;
    }
    std::ostringstream os;
    os << "max err at J=200: " << max_err[1] << ", mean-err ratios:";
    for (std::size_t i = 0; i + 1 < mean_err.size(); ++i) os << ' ' << mean_err[i] / mean_err[i + 1];
    return {halves && max_err[1] <= 1e-2, os.str()};
}

// ------------------------------------------------------------- criterion 7

Outcome desk_gmm(double* minutes) {
    RunConfig cfg;
    cfg.problem = "gmm2d";
    cfg.loss = LossKind::tr_lv;
    cfg.eps = 0.1;
    cfg.buffer_size = 2000;
    cfg.inner_steps = 400;
    cfg.minibatch = 128;
    cfg.adam.lr = 1e-3;
    cfg.max_outer = 22;
    cfg.eval_every = 10;
    cfg.seed = 0;
    const auto t0 = std::chrono::steady_clock::now();
    RunReport r = run(cfg);
    *minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    std::ostringstream os;
    os << "termination=" << r.termination << " after " << r.outer_iterations
       << " outer iterations, |dlogZ| = " << r.final_dlogz << ", mode TVD = " << r.final_tvd << ", "
       << *minutes << " min";
    return {r.outer_iterations <= 60 && r.final_dlogz <= 0.05 && r.final_tvd <= 0.1 && *minutes <= 15.0,
            os.str()};
}

// ------------------------------------------------------------- criterion 8

RunConfig lqr_config(int dim, std::uint64_t seed, bool trust_region) {
    RunConfig cfg;
    cfg.problem = "lqr-easy";
    cfg.dim = dim;
    cfg.loss = LossKind::tr_socm;
    cfg.eps = 0.1;
    cfg.buffer_size = 2000;
    cfg.inner_steps = 200;
    cfg.minibatch = 256;
    cfg.max_outer = 30;
    cfg.eval_every = 1000;  // only the final evaluation
    cfg.eval_samples = 1000;
    cfg.final_eval_samples = 4000;
    cfg.final_eval_grid_steps = 50;
    cfg.seed = seed;
    cfg.trust_region = trust_region;
    return cfg;
}

Outcome desk_lqr(double* minutes) {
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream os;
    bool ok = true;
    for (int dim : {1, 10}) {
        RunReport r = run(lqr_config(dim, 0, true));
        os << "d=" << dim << ": ctrl_l2 = " << r.final_ctrl_l2 << " after " << r.outer_iterations
           << " outers; ";
        ok = ok && r.final_ctrl_l2 <= 0.1 && r.outer_iterations <= 30;
    }
    // Substituted trend check at d = 10, matched on target evaluations (the
    // large-d separations are out of desk scale): the baseline is standard
    // on-policy SOC matching, one fresh batch per gradient step, given the
    // same simulation budget the trust-region run consumed.
    double tr_mean = 0.0, plain_mean = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        RunConfig tr = lqr_config(10, seed, true);
        tr.max_outer = 15;
        RunReport rt = run(tr);
        RunConfig plain = lqr_config(10, seed, false);
        plain.inner_steps = 1;     // on-policy: refresh every gradient step
        plain.minibatch = 2000;
        plain.max_outer = std::max<int>(
            1, static_cast<int>((rt.target_evals + plain.buffer_size - 1) / plain.buffer_size));
        RunReport rp = run(plain);
        tr_mean += rt.final_ctrl_l2 / 3.0;
        plain_mean += rp.final_ctrl_l2 / 3.0;
    }
    *minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    os << "trend d=10 (matched target evaluations, 3 seeds): TR " << tr_mean << " <= on-policy "
       << plain_mean << "; " << *minutes << " min";
    ok = ok && tr_mean <= plain_mean && *minutes <= 15.0;
    return {ok, os.str()};
}

// ------------------------------------------------------------- criterion 9

Outcome scale_statement() {
    return {true,
            "high-dimensional results (d >= 50 separations, d = 200 tables, molecular TPS, "
            "fine-tuning) are out of desk scale by design; property suites 1-6 plus desk runs 7-8 "
            "constitute acceptance"};
}

// ------------------------------------------------------------ criterion 10

Outcome determinism() {
    namespace fs = std::filesystem;
    RunConfig cfg;
    cfg.problem = "gmm2d";
    cfg.loss = LossKind::tr_lv;
    cfg.buffer_size = 256;
    cfg.inner_steps = 20;
    cfg.minibatch = 64;
    cfg.grid_steps = 20;
    cfg.max_outer = 4;
    cfg.eval_every = 2;
    cfg.eval_samples = 128;
    cfg.final_eval_samples = 256;
    cfg.final_eval_grid_steps = 40;
    cfg.net_layers = 2;
    cfg.net_width = 16;
    cfg.net_fourier = 8;
    cfg.seed = 42;
    const std::string a = (fs::temp_directory_path() / "trsoc_acc_det_a").string();
    const std::string b = (fs::temp_directory_path() / "trsoc_acc_det_b").string();
    fs::remove_all(a);
    fs::remove_all(b);
    cfg.out_dir = a;
    run(cfg);
    cfg.out_dir = b;
    run(cfg);
    auto slurp = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };
    const std::string ca = slurp(a + "/metrics.csv");
    const std::string cb = slurp(b + "/metrics.csv");
    fs::remove_all(a);
    fs::remove_all(b);
    std::ostringstream os;
    os << "metrics.csv byte-identical across two runs (" << ca.size() << " bytes)";
    return {!ca.empty() && ca == cb, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    auto selected = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };

    struct Entry {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    double minutes7 = 0.0, minutes8 = 0.0;
    const std::vector<Entry> entries = {
        {1, "dual-solver oracle equivalence", dual_solver_oracle},
        {2, "discrete trust-region oracle", discrete_oracle},
        {3, "annealing/weight-variance ESS band", ess_band},
        {4, "Fisher-Rao equidistance", fisher_rao_equidistance},
        {5, "loss gradient correctness", gradient_correctness},
        {6, "lean adjoint closed form", lean_adjoint_closed_form},
        {7, "desk-scale GMM d=2 reproduction", [&] { return desk_gmm(&minutes7); }},
        {8, "desk-scale LQR reproduction + trend", [&] { return desk_lqr(&minutes8); }},
        {9, "scale statement", scale_statement},
        {10, "determinism of metrics.csv", determinism},
    };

    int failures = 0;
    for (const Entry& e : entries) {
        if (!selected(e.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = e.fn();
        } catch (const std::exception& ex) {
            out = {false, std::string("exception: ") + ex.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] criterion %2d: %s — %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", e.id, e.name,
                    out.detail.c_str(), secs);
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    if (failures) std::printf("%d criterion(s) FAILED\n", failures);
    else std::printf("all selected criteria passed\n");
    return failures == 0 ? 0 : 1;
}
