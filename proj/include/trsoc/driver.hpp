#pragma once

#include <memory>
#include <optional>
#include <string>

#include "trsoc/adam.hpp"
#include "trsoc/benchmarks.hpp"
#include "trsoc/buffer.hpp"
#include "trsoc/metrics.hpp"
#include "trsoc/net.hpp"
#include "trsoc/trust_region.hpp"

namespace trsoc {

enum class LossKind { tr_lv, tr_ce, tr_moment, tr_socm };

const char* loss_name(LossKind k);
std::optional<LossKind> parse_loss(const std::string& name);

struct RunConfig {
    std::string problem = "gmm2d";  // gmm2d | gmm40 | manywell | lqr-easy | lqr-hard
    int dim = 0;                    // 0: problem default
    int grid_steps = 50;

    LossKind loss = LossKind::tr_lv;
    double eps = 0.1;
    double delta = 1e-3;
    bool trust_region = true;  // false: unconstrained baseline (lambda=0, beta=1)
    bool lv_reweighted = false;
    int socm_subsample = 8;

    int buffer_size = 2000;  // K, refreshed wholesale every outer iteration
    int inner_steps = 200;   // N gradient steps per refresh
    int minibatch = 256;
    int net_layers = 4;
    int net_width = 64;
    int net_fourier = 32;
    AdamConfig adam;

    std::uint64_t seed = 0;
    int max_outer = 60;
    int eval_every = 5;
    int eval_samples = 2000;
    int final_eval_samples = 10000;
    int final_eval_grid_steps = 400;  // finer grid for the final reported metrics

    std::string out_dir;        // empty: keep everything in memory
    bool log_walltime = false;  // off by default so metrics.csv is byte-identical per seed

    void validate() const;
};

// One metrics.csv row; NaN fields are emitted as empty cells.
struct MetricsRow {
    int outer = 0;
    int inner = 0;
    double wall_time = std::numeric_limits<double>::quiet_NaN();
    double target_evals = 0.0;
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double beta = std::numeric_limits<double>::quiet_NaN();
    double ess = std::numeric_limits<double>::quiet_NaN();
    double kl_est = std::numeric_limits<double>::quiet_NaN();
    double loss = std::numeric_limits<double>::quiet_NaN();
    double ctrl_l2 = std::numeric_limits<double>::quiet_NaN();
    double ctrl_l2_se = std::numeric_limits<double>::quiet_NaN();
    double dlogz = std::numeric_limits<double>::quiet_NaN();
    double tvd = std::numeric_limits<double>::quiet_NaN();
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

struct RunReport {
    std::string termination;  // converged | max_outer | aborted
    int outer_iterations = 0;
    std::vector<double> lambda_history;
    std::vector<double> beta_history;
    std::vector<MetricsRow> metrics;
    // final evaluation (final_eval_samples) and 5-window running averages
    double final_dlogz = std::numeric_limits<double>::quiet_NaN();
    double final_tvd = std::numeric_limits<double>::quiet_NaN();
    double final_ctrl_l2 = std::numeric_limits<double>::quiet_NaN();
    double smoothed_dlogz = std::numeric_limits<double>::quiet_NaN();
    double smoothed_tvd = std::numeric_limits<double>::quiet_NaN();
    double smoothed_ctrl_l2 = std::numeric_limits<double>::quiet_NaN();
    double smoothed_ess = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t target_evals = 0;
};

// Problem instance plus whatever references it affords.
struct ProblemBundle {
    SocProblem problem;
    TimeGrid grid;
    Integrator integrator = Integrator::euler;
    NetConfig net;
    std::shared_ptr<BatchControl> reference_control;  // analytic optimum when known
    std::optional<GmmTarget> mode_target;             // for TVD
    double log_z_ref = std::numeric_limits<double>::quiet_NaN();
};

ProblemBundle make_problem(const RunConfig& cfg);

// The outer trust-region loop: freeze u_i, simulate, build the buffer, solve
// the dual for lambda_i, advance beta, train on the buffer, stop when
// lambda_i <= delta. net_out (optional) receives the trained control.
RunReport run(const RunConfig& cfg, ControlNet* net_out = nullptr);
// Same loop on a caller-supplied problem instance (tests and custom problems).
RunReport run_with_bundle(const RunConfig& cfg, const ProblemBundle& bundle,
                          ControlNet* net_out = nullptr);

// Pure annealing-advance used by the driver and by oracle regression tests:
// solves lambda on the given weights (optionally sample-weighted), applies the
// termination rule, and returns the updated state.
struct AnnealingStep {
    double lambda = 0.0;
    bool terminal = false;
    AnnealingState state;
};
AnnealingStep advance_annealing(const AnnealingState& state, const LogWeights& logw,
                                std::span<const double> sample_weights = {});

}  // namespace trsoc
