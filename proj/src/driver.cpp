#include "trsoc/driver.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace trsoc {

namespace {

constexpr std::uint64_t kSimTag = 0x51;
constexpr std::uint64_t kBatchTag = 0xB2;
constexpr std::uint64_t kEvalTag = 0xE3;

std::string format_cell(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double tail_mean(const std::vector<double>& xs, std::size_t window = 5) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t n = std::min(window, xs.size());
    double s = 0.0;
    for (std::size_t i = xs.size() - n; i < xs.size(); ++i) s += xs[i];
    return s / static_cast<double>(n);
}

struct EvalResult {
    double dlogz = std::numeric_limits<double>::quiet_NaN();
    double tvd = std::numeric_limits<double>::quiet_NaN();
    double ctrl_l2 = std::numeric_limits<double>::quiet_NaN();
    double ctrl_l2_se = std::numeric_limits<double>::quiet_NaN();
};

EvalResult evaluate_control(const ProblemBundle& bundle, const ControlNet& net, int samples,
                            std::uint64_t seed, std::uint64_t* target_evals) {
    EvalResult r;
    TrajectoryBatch batch = simulate(bundle.problem, net, bundle.grid, samples, seed, bundle.integrator);
    const Estimate z = log_z_estimate(batch, bundle.problem, net);
    *target_evals += static_cast<std::uint64_t>(samples);
    if (!std::isnan(bundle.log_z_ref)) r.dlogz = std::abs(z.value - bundle.log_z_ref);
    if (bundle.mode_target) {
        const int J = batch.steps();
        r.tvd = mode_tvd(std::span<const double>(batch.state_block(J),
                                                 static_cast<std::size_t>(samples) * batch.dim),
                         samples, *bundle.mode_target);
    }
    if (bundle.reference_control) {
        const Estimate e = control_l2_error(*bundle.reference_control, net, bundle.problem, bundle.grid,
                                            samples, seed ^ 0x5eedf00dULL, bundle.integrator);
        r.ctrl_l2 = e.value;
        r.ctrl_l2_se = e.se;
    }
    return r;
}

}  // namespace

const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::tr_lv: return "tr-lv";
        case LossKind::tr_ce: return "tr-ce";
        case LossKind::tr_moment: return "tr-moment";
        case LossKind::tr_socm: return "tr-socm";
    }
    return "?";
}

std::optional<LossKind> parse_loss(const std::string& name) {
    if (name == "tr-lv") return LossKind::tr_lv;
    if (name == "tr-ce") return LossKind::tr_ce;
    if (name == "tr-moment") return LossKind::tr_moment;
    if (name == "tr-socm") return LossKind::tr_socm;
    return std::nullopt;
}

void RunConfig::validate() const {
    require(eps > 0.0, "config: eps must be positive");
    require(delta >= 0.0, "config: delta must be nonnegative");
    require(buffer_size >= 2, "config: buffer-size must be at least 2");
    require(inner_steps >= 1, "config: inner-steps must be positive");
    require(minibatch >= 2 && minibatch <= buffer_size, "config: batch must be in [2, buffer-size]");
    require(grid_steps >= 1, "config: grid steps must be positive");
    require(max_outer >= 1, "config: max outer iterations must be positive");
    require(eval_every >= 1, "config: eval cadence must be positive");
    require(eval_samples >= 2 && final_eval_samples >= 2, "config: eval samples must be at least 2");
    require(socm_subsample >= 1, "config: socm subsample count must be positive");
    require(dim >= 0, "config: dim must be nonnegative");
}

std::string metrics_csv_header() {
    return "outer_iter,inner_step,wall_time,target_evals,lambda,beta,ess,kl_est,loss,ctrl_l2,"
           "ctrl_l2_se,dlogz,tvd";
}

std::string metrics_csv_row(const MetricsRow& r) {
    std::ostringstream os;
    os << r.outer << ',' << r.inner << ',' << format_cell(r.wall_time) << ','
       << format_cell(r.target_evals) << ',' << format_cell(r.lambda) << ',' << format_cell(r.beta)
       << ',' << format_cell(r.ess) << ',' << format_cell(r.kl_est) << ',' << format_cell(r.loss) << ','
       << format_cell(r.ctrl_l2) << ',' << format_cell(r.ctrl_l2_se) << ',' << format_cell(r.dlogz)
       << ',' << format_cell(r.tvd);
    return os.str();
}

ProblemBundle make_problem(const RunConfig& cfg) {
    ProblemBundle b;
    b.grid = TimeGrid::uniform(1.0, cfg.grid_steps);
    const std::uint64_t preset_seed = 20240817;  // targets are fixed across run seeds

    auto as_dds = [&](double eta) {
        DdsSpec dds;
        dds.eta = eta;
        b.integrator = Integrator::exp_ou;
        return dds;
    };

    if (cfg.problem == "gmm2d" || cfg.problem == "gmm") {
        const int dim = cfg.dim > 0 ? cfg.dim : 2;
        DdsSpec dds = as_dds(2.5);
        GmmTarget target = gmm_preset(dim, 10, 8.0, preset_seed);
        b.problem = make_dds_gmm_problem(dds, target);
        b.reference_control = std::make_shared<GmmOptimalControl>(dds, target);
        b.mode_target = target;
        b.log_z_ref = 0.0;  // normalized mixture density
        b.net.eta = dds.eta;
    } else if (cfg.problem == "gmm40") {
        const int dim = cfg.dim > 0 ? cfg.dim : 2;
        DdsSpec dds = as_dds(30.0);
        GmmTarget target = gmm40_preset(dim, preset_seed);
        b.problem = make_dds_gmm_problem(dds, target);
        b.reference_control = std::make_shared<GmmOptimalControl>(dds, target);
        b.mode_target = target;
        b.log_z_ref = 0.0;
        b.net.eta = dds.eta;
    } else if (cfg.problem == "manywell") {
        const int dim = cfg.dim > 0 ? cfg.dim : 5;
        ManyWell mw;
        mw.dim = dim;
        mw.wells = std::min(5, dim);
        DdsSpec dds = as_dds(1.0);
        b.problem = make_dds_manywell_problem(dds, mw);
        b.log_z_ref = mw.log_z_reference();
        b.net.eta = dds.eta;
    } else if (cfg.problem == "lqr-easy" || cfg.problem == "lqr-hard") {
        const int dim = cfg.dim > 0 ? cfg.dim : 1;
        const LqrSpec spec = cfg.problem == "lqr-easy" ? LqrSpec::easy(dim) : LqrSpec::hard(dim);
        b.problem = make_lqr_problem(spec);
        b.integrator = Integrator::euler;
        b.reference_control = std::make_shared<RiccatiControl>(spec, riccati_reference(spec));
        b.net.eta = 1.0;
    } else {
        fail_contract("config: unknown problem '", cfg.problem,
                      "' (valid: gmm2d, gmm40, manywell, lqr-easy, lqr-hard)");
    }
    b.net.dim = b.problem.dim;
    b.net.layers = cfg.net_layers;
    b.net.width = cfg.net_width;
    b.net.fourier = cfg.net_fourier;
    b.net.horizon = b.grid.horizon;
    return b;
}

AnnealingStep advance_annealing(const AnnealingState& state, const LogWeights& logw,
                                std::span<const double> sample_weights) {
    AnnealingStep step;
    step.lambda = sample_weights.empty() ? solve_lambda(logw, state.epsilon)
                                         : solve_lambda(logw, state.epsilon, sample_weights);
    step.terminal = step.lambda <= state.delta;
    step.state = update_beta(state, step.lambda);
    return step;
}

RunReport run(const RunConfig& cfg, ControlNet* net_out) {
    cfg.validate();
    const ProblemBundle bundle = make_problem(cfg);
    return run_with_bundle(cfg, bundle, net_out);
}

RunReport run_with_bundle(const RunConfig& cfg, const ProblemBundle& bundle, ControlNet* net_out) {
    cfg.validate();
    ControlNet net(bundle.net, cfg.seed);
    Adam adam(cfg.adam, net.params());
    Param log_z_param("moment.log_z", 1, 1);
    Adam adam_logz(cfg.adam, {&log_z_param});

    AnnealingState state;
    state.epsilon = cfg.eps;
    state.delta = cfg.delta;

    RunReport report;
    report.termination = "max_outer";
    std::vector<double> ess_history, dlogz_history, tvd_history, ctrl_history;

    const bool want_files = !cfg.out_dir.empty();
    std::ofstream csv;
    if (want_files) {
        std::filesystem::create_directories(cfg.out_dir);
        csv.open(cfg.out_dir + "/metrics.csv");
        if (!csv) fail_runtime("run: cannot open ", cfg.out_dir, "/metrics.csv");
        csv << metrics_csv_header() << '\n';
    }
    auto emit = [&](const MetricsRow& row) {
        report.metrics.push_back(row);
        if (want_files) {
            csv << metrics_csv_row(row) << '\n';
            csv.flush();
        }
    };

    const auto t_start = std::chrono::steady_clock::now();
    auto wall = [&]() -> double {
        if (!cfg.log_walltime) return std::numeric_limits<double>::quiet_NaN();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    std::uint64_t target_evals = 0;
    int total_inner = 0;
    bool lr_halved = false;
    double last_loss = std::numeric_limits<double>::quiet_NaN();

    int outer = 0;
    for (; outer < cfg.max_outer; ++outer) {
        // freeze u_i and refresh the buffer wholesale
        const ControlNet u_frozen = net;
        TrajectoryBatch batch = simulate(bundle.problem, u_frozen, bundle.grid, cfg.buffer_size,
                                         derive_stream(cfg.seed, kSimTag, outer), bundle.integrator);
        ReplayBuffer buffer = build_buffer(batch, bundle.problem, u_frozen, outer);
        target_evals += static_cast<std::uint64_t>(cfg.buffer_size);

        LogWeights logw{buffer.logw, "dQ/dP^{u_i}"};
        double lambda = 0.0;
        bool terminal = false;
        if (cfg.trust_region) {
            AnnealingStep step = advance_annealing(state, logw);
            lambda = step.lambda;
            terminal = step.terminal;
            state = step.state;
        } else {
            state = update_beta(state, 0.0);  // beta = 1, unconstrained baseline
        }
        const StepDiagnostics diag = kl_and_ess_diagnostics(logw, lambda);
        ess_history.push_back(diag.ess);

        MetricsRow row;
        row.outer = outer;
        row.inner = total_inner;
        row.wall_time = wall();
        row.target_evals = static_cast<double>(target_evals);
        row.lambda = lambda;
        row.beta = state.beta;
        row.ess = diag.ess;
        row.kl_est = diag.kl;
        row.loss = last_loss;

        const bool eval_now = (outer % cfg.eval_every == 0) || terminal;
        if (eval_now) {
            const EvalResult ev = evaluate_control(bundle, net, cfg.eval_samples,
                                                   derive_stream(cfg.seed, kEvalTag, outer), &target_evals);
            row.ctrl_l2 = ev.ctrl_l2;
            row.ctrl_l2_se = ev.ctrl_l2_se;
            row.dlogz = ev.dlogz;
            row.tvd = ev.tvd;
            row.target_evals = static_cast<double>(target_evals);
            if (!std::isnan(ev.dlogz)) dlogz_history.push_back(ev.dlogz);
            if (!std::isnan(ev.tvd)) tvd_history.push_back(ev.tvd);
            if (!std::isnan(ev.ctrl_l2)) ctrl_history.push_back(ev.ctrl_l2);
            if (want_files) net.save_checkpoint(cfg.out_dir + "/checkpoint_latest.bin", cfg.seed);
        }
        report.lambda_history.push_back(lambda);
        report.beta_history.push_back(state.beta);
        emit(row);

        if (terminal) {
            report.termination = "converged";
            ++outer;
            break;
        }

        buffer.lambda = lambda;
        buffer.beta_next = state.beta;
        if (cfg.loss == LossKind::tr_socm)
            attach_adjoints(buffer, batch, bundle.problem, state.beta);

        // inner loop, with one lr-halving retry on divergence
        Tape tape;
        const std::vector<double> snapshot = net.flat_params();
        const double logz_snapshot = log_z_param.value[0];
        for (int attempt = 0;; ++attempt) {
            bool diverged = false;
            RandomStream rs_batch(cfg.seed, kBatchTag, outer, attempt);
            double loss_acc = 0.0;
            int loss_count = 0;
            for (int n = 0; n < cfg.inner_steps; ++n) {
                LossBatch mb = buffer.sample_minibatch(cfg.minibatch, rs_batch);
                tape.reset();
                net.zero_grad();
                log_z_param.zero_grad();
                int loss_id = -1;
                switch (cfg.loss) {
                    case LossKind::tr_lv: loss_id = lv_loss(tape, mb, net, cfg.lv_reweighted); break;
                    case LossKind::tr_ce: loss_id = ce_loss(tape, mb, net); break;
                    case LossKind::tr_moment: loss_id = moment_loss(tape, mb, net, log_z_param); break;
                    case LossKind::tr_socm:
                        loss_id = socm_loss(tape, mb, net, std::min(cfg.socm_subsample, mb.steps()), rs_batch);
                        break;
                }
                const double value = tape.scalar_value(loss_id);
                if (!std::isfinite(value) || std::abs(value) > 1e100) {
                    diverged = true;
                    break;
                }
                tape.backward(loss_id);
                try {
                    adam.step(net.params());
                    if (cfg.loss == LossKind::tr_moment) adam_logz.step({&log_z_param});
                } catch (const std::runtime_error&) {
                    diverged = true;
                    break;
                }
                loss_acc += value;
                ++loss_count;
                ++total_inner;
            }
            if (!diverged) {
                last_loss = loss_count ? loss_acc / loss_count : last_loss;
                break;
            }
            net.set_flat_params(snapshot);
            log_z_param.value[0] = logz_snapshot;
            if (!lr_halved) {
                lr_halved = true;
                adam.config().lr *= 0.5;
                adam_logz.config().lr *= 0.5;
                continue;
            }
            report.termination = "aborted";
            break;
        }
        if (report.termination == "aborted") {
            ++outer;
            break;
        }
    }
    report.outer_iterations = outer;

    // final evaluation: larger sample on a finer grid (the control is a
    // continuous function; the finer grid shrinks the time-discretization bias
    // of the reported metrics)
    ProblemBundle fine = bundle;
    if (cfg.final_eval_grid_steps > cfg.grid_steps)
        fine.grid = TimeGrid::uniform(bundle.grid.horizon, cfg.final_eval_grid_steps);
    const EvalResult fin = evaluate_control(fine, net, cfg.final_eval_samples,
                                            derive_stream(cfg.seed, kEvalTag, 0xF1A1), &target_evals);
    report.final_dlogz = fin.dlogz;
    report.final_tvd = fin.tvd;
    report.final_ctrl_l2 = fin.ctrl_l2;
    report.smoothed_dlogz = tail_mean(dlogz_history);
    report.smoothed_tvd = tail_mean(tvd_history);
    report.smoothed_ctrl_l2 = tail_mean(ctrl_history);
    report.smoothed_ess = tail_mean(ess_history);
    report.target_evals = target_evals;

    if (want_files) {
        net.save_checkpoint(cfg.out_dir + "/checkpoint_final.bin", cfg.seed);
        nlohmann::json j;
        j["problem"] = cfg.problem;
        j["loss"] = loss_name(cfg.loss);
        j["dim"] = bundle.problem.dim;
        j["eps"] = cfg.eps;
        j["delta"] = cfg.delta;
        j["seed"] = cfg.seed;
        j["trust_region"] = cfg.trust_region;
        j["termination"] = report.termination;
        j["outer_iterations"] = report.outer_iterations;
        j["target_evals"] = report.target_evals;
        j["lambda_history"] = report.lambda_history;
        j["beta_history"] = report.beta_history;
        auto put_opt = [&](const char* key, double v) {
            if (!std::isnan(v)) j["final"][key] = v;
        };
        put_opt("dlogz", report.final_dlogz);
        put_opt("tvd", report.final_tvd);
        put_opt("ctrl_l2", report.final_ctrl_l2);
        put_opt("smoothed_dlogz", report.smoothed_dlogz);
        put_opt("smoothed_tvd", report.smoothed_tvd);
        put_opt("smoothed_ctrl_l2", report.smoothed_ctrl_l2);
        put_opt("smoothed_ess", report.smoothed_ess);
        std::ofstream js(cfg.out_dir + "/summary.json");
        if (!js) fail_runtime("run: cannot open ", cfg.out_dir, "/summary.json");
        js << j.dump(2) << '\n';
    }
    if (net_out) *net_out = net;
    if (report.termination == "aborted")
        fail_runtime("run: training diverged twice; last-good checkpoint kept",
                     want_files ? " in " + cfg.out_dir : std::string());
    return report;
}

}  // namespace trsoc
