#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trsoc/config.hpp"
#include "trsoc/driver.hpp"
#include "trsoc/measures.hpp"

namespace {

using namespace trsoc;

struct CliOverrides {
    std::string config_path;
    std::string problem, loss, out;
    double eps = std::numeric_limits<double>::quiet_NaN();
    double delta = std::numeric_limits<double>::quiet_NaN();
    int dim = -1, buffer_size = -1, inner_steps = -1, batch = -1, max_outer = -1, grid_steps = -1;
    int eval_every = -1;
    long long seed = -1;

    void add_to(CLI::App* cmd, bool with_seed = true) {
        cmd->add_option("--config", config_path, "configuration file (key = value with [sections])");
        cmd->add_option("--problem", problem, "problem id: gmm2d, gmm40, manywell, lqr-easy, lqr-hard");
        cmd->add_option("--loss", loss, "loss id: tr-lv, tr-ce, tr-moment, tr-socm");
        cmd->add_option("--eps", eps, "trust region bound");
        cmd->add_option("--delta", delta, "termination threshold on lambda");
        cmd->add_option("--dim", dim, "problem dimension");
        if (with_seed) cmd->add_option("--seed", seed, "run seed");
        cmd->add_option("--buffer-size", buffer_size, "trajectories per buffer refresh");
        cmd->add_option("--inner-steps", inner_steps, "gradient steps per refresh");
        cmd->add_option("--batch", batch, "minibatch size");
        cmd->add_option("--max-outer", max_outer, "outer iteration cap");
        cmd->add_option("--grid-steps", grid_steps, "time discretization steps");
        cmd->add_option("--eval-every", eval_every, "metric evaluation cadence (outer iterations)");
        cmd->add_option("--out", out, "output directory (under TRSOC_OUT_ROOT when relative)");
    }

    RunConfig resolve() const {
        Config c = config_path.empty() ? Config() : Config::load_file(config_path);
        if (!problem.empty()) c.set("problem.id", problem);
        if (!loss.empty()) c.set("training.loss", loss);
        if (!std::isnan(eps)) c.set("trust_region.eps", std::to_string(eps));
        if (!std::isnan(delta)) c.set("trust_region.delta", std::to_string(delta));
        if (dim >= 0) c.set("problem.dim", std::to_string(dim));
        if (seed >= 0) c.set("run.seed", std::to_string(seed));
        if (buffer_size >= 0) c.set("training.buffer_size", std::to_string(buffer_size));
        if (inner_steps >= 0) c.set("training.inner_steps", std::to_string(inner_steps));
        if (batch >= 0) c.set("training.minibatch", std::to_string(batch));
        if (max_outer >= 0) c.set("run.max_outer", std::to_string(max_outer));
        if (grid_steps >= 0) c.set("problem.grid_steps", std::to_string(grid_steps));
        if (eval_every >= 0) c.set("run.eval_every", std::to_string(eval_every));
        if (!out.empty()) c.set("run.out_dir", out);
        RunConfig cfg = run_config_from(c);
        if (!cfg.out_dir.empty() && std::filesystem::path(cfg.out_dir).is_relative()) {
            if (const char* root = std::getenv("TRSOC_OUT_ROOT"))
                cfg.out_dir = (std::filesystem::path(root) / cfg.out_dir).string();
        }
        return cfg;
    }
};

int cmd_run(const CliOverrides& opts) {
    RunConfig cfg = opts.resolve();
    RunReport report = run(cfg);
    std::cout << "termination=" << report.termination << " outer=" << report.outer_iterations;
    if (!std::isnan(report.final_dlogz)) std::cout << " dlogz=" << report.final_dlogz;
    if (!std::isnan(report.final_tvd)) std::cout << " tvd=" << report.final_tvd;
    if (!std::isnan(report.final_ctrl_l2)) std::cout << " ctrl_l2=" << report.final_ctrl_l2;
    std::cout << '\n';
    return 0;
}

int cmd_sweep(const CliOverrides& opts, const std::string& seeds_csv) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(seeds_csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) seeds.push_back(static_cast<std::uint64_t>(std::stoull(tok)));
    if (seeds.empty()) fail_contract("sweep: seed list is empty");

    RunConfig base = opts.resolve();
    const std::string root = base.out_dir;
    nlohmann::json agg;
    std::vector<double> dlogz, tvd, ctrl;
    for (std::uint64_t s : seeds) {
        RunConfig cfg = base;
        cfg.seed = s;
        if (!root.empty()) cfg.out_dir = root + "/seed_" + std::to_string(s);
        RunReport r = run(cfg);
        nlohmann::json row;
        row["seed"] = s;
        row["termination"] = r.termination;
        row["outer_iterations"] = r.outer_iterations;
        if (!std::isnan(r.final_dlogz)) {
            row["dlogz"] = r.final_dlogz;
            dlogz.push_back(r.final_dlogz);
        }
        if (!std::isnan(r.final_tvd)) {
            row["tvd"] = r.final_tvd;
            tvd.push_back(r.final_tvd);
        }
        if (!std::isnan(r.final_ctrl_l2)) {
            row["ctrl_l2"] = r.final_ctrl_l2;
            ctrl.push_back(r.final_ctrl_l2);
        }
        agg["runs"].push_back(row);
        std::cout << "seed " << s << ": termination=" << r.termination << '\n';
    }
    auto put_stats = [&](const char* key, const std::vector<double>& xs) {
        if (xs.empty()) return;
        const double m = mean(xs);
        double sd = 0.0;
        for (double v : xs) sd += (v - m) * (v - m);
        sd = xs.size() > 1 ? std::sqrt(sd / (xs.size() - 1)) : 0.0;
        agg["aggregate"][key]["mean"] = m;
        agg["aggregate"][key]["sd"] = sd;
    };
    put_stats("dlogz", dlogz);
    put_stats("tvd", tvd);
    put_stats("ctrl_l2", ctrl);
    const std::string text = agg.dump(2) + "\n";
    std::cout << text;
    if (!root.empty()) {
        std::filesystem::create_directories(root);
        std::ofstream os(root + "/sweep_summary.json");
        os << text;
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint, const CliOverrides& opts, int samples, long long seed) {
    if (samples < 2) fail_contract("eval: need at least 2 samples");
    RunConfig cfg = opts.resolve();
    cfg.seed = seed >= 0 ? static_cast<std::uint64_t>(seed) : 0;
    ProblemBundle bundle = make_problem(cfg);
    ControlNet net = ControlNet::load_checkpoint(checkpoint);
    if (net.dim() != bundle.problem.dim)
        fail_contract("eval: checkpoint dimension ", net.dim(), " does not match problem dimension ",
                      bundle.problem.dim);

    TrajectoryBatch batch =
        simulate(bundle.problem, net, bundle.grid, samples, derive_stream(cfg.seed, 0xE3, 0), bundle.integrator);
    MetricsRow row;
    row.outer = 0;
    row.inner = 0;
    row.target_evals = samples;
    const Estimate z = log_z_estimate(batch, bundle.problem, net);
    if (!std::isnan(bundle.log_z_ref)) row.dlogz = std::abs(z.value - bundle.log_z_ref);
    if (bundle.mode_target) {
        const int J = batch.steps();
        row.tvd = mode_tvd(std::span<const double>(batch.state_block(J),
                                                   static_cast<std::size_t>(samples) * batch.dim),
                           samples, *bundle.mode_target);
    }
    if (bundle.reference_control) {
        const Estimate e = control_l2_error(*bundle.reference_control, net, bundle.problem, bundle.grid,
                                            samples, derive_stream(cfg.seed, 0xE3, 1), bundle.integrator);
        row.ctrl_l2 = e.value;
        row.ctrl_l2_se = e.se;
    }
    std::vector<double> sw = shifted_work(batch, bundle.problem, net);
    LogWeights lw;
    lw.values.resize(sw.size());
    for (std::size_t k = 0; k < sw.size(); ++k) lw.values[k] = -sw[k];
    row.ess = kl_and_ess_diagnostics(lw, 0.0).ess;
    std::cout << metrics_csv_header() << '\n' << metrics_csv_row(row) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trust-region stochastic optimal control"};
    app.require_subcommand(1);

    CliOverrides run_opts;
    CLI::App* run_cmd = app.add_subcommand("run", "Train a control and export metrics");
    run_opts.add_to(run_cmd);

    CliOverrides sweep_opts;
    std::string seeds_csv;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run several seeds and aggregate");
    sweep_opts.add_to(sweep_cmd, /*with_seed=*/false);
    sweep_cmd->add_option("--seeds", seeds_csv, "comma-separated seed list")->required();

    CliOverrides eval_opts;
    std::string checkpoint;
    int samples = 2000;
    long long eval_seed = 0;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a problem");
    eval_opts.add_to(eval_cmd, /*with_seed=*/false);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--samples", samples, "evaluation sample count");
    eval_cmd->add_option("--seed", eval_seed, "evaluation seed");

    try {
        app.parse(argc, argv);
        if (run_cmd->parsed()) return cmd_run(run_opts);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_opts, seeds_csv);
        if (eval_cmd->parsed()) return cmd_eval(checkpoint, eval_opts, samples, eval_seed);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
