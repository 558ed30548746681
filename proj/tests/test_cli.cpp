#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "trsoc/config.hpp"
#include "trsoc/driver.hpp"
#include "trsoc/metrics.hpp"

using namespace trsoc;

namespace {

namespace fs = std::filesystem;

std::string cli_path() { return TRSOC_CLI_PATH; }

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

CommandResult run_cli(const std::string& args) {
    const std::string out_file = (fs::temp_directory_path() / "trsoc_cli_out.txt").string();
    const std::string cmd = cli_path() + " " + args + " > " + out_file + " 2>&1";
    const int rc = std::system(cmd.c_str());
    CommandResult r;
    r.exit_code = WEXITSTATUS(rc);
    std::ifstream is(out_file);
    std::stringstream ss;
    ss << is.rdbuf();
    r.output = ss.str();
    return r;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string tiny_args() {
    // a config file keeps the subprocess runs small (the final evaluation in
    // particular), and exercises --config merging on the side
    static std::string path;
    if (path.empty()) {
        path = (fs::temp_directory_path() / "trsoc_tiny.conf").string();
        std::ofstream os(path);
        os << "[training]\nbuffer_size = 128\ninner_steps = 10\nminibatch = 32\n"
              "[problem]\ngrid_steps = 12\n"
              "[run]\nmax_outer = 2\neval_every = 1\neval_samples = 128\n"
              "final_eval_samples = 256\nfinal_eval_grid_steps = 24\n";
    }
    return " --config " + path;
}
#define kTinyArgs tiny_args()

}  // namespace

TEST_CASE("config round-trip: parse -> serialize -> parse is the identity") {
    const std::string text =
        "[problem]\n"
        "id = lqr-easy\n"
        "dim = 3\n"
        "# a comment\n"
        "[trust_region]\n"
        "eps = 0.25\n"
        "[run]\n"
        "seed = 7\n";
    Config a = Config::parse_text(text);
    Config b = Config::parse_text(a.serialize());
    CHECK(a.entries() == b.entries());
    CHECK(*b.get("problem.id") == "lqr-easy");
    CHECK(*b.get("trust_region.eps") == "0.25");

    // canonical full config also round-trips
    RunConfig rc;
    rc.problem = "manywell";
    rc.dim = 3;
    rc.eps = 0.05;
    Config c = config_from(rc);
    Config d = Config::parse_text(c.serialize());
    CHECK(c.entries() == d.entries());
    RunConfig rc2 = run_config_from(d);
    CHECK(rc2.problem == "manywell");
    CHECK(rc2.dim == 3);
    CHECK(rc2.eps == 0.05);
}

TEST_CASE("config: field-level errors") {
    Config c;
    c.set("problem.id", "gmm2d");
    c.set("training.loss", "nonsense");
    CHECK_THROWS_WITH_AS(run_config_from(c), doctest::Contains("tr-lv"), std::invalid_argument);

    Config u;
    u.set("problem.idd", "gmm2d");
    CHECK_THROWS_WITH_AS(run_config_from(u), doctest::Contains("problem.idd"), std::invalid_argument);

    Config bad;
    bad.set("trust_region.eps", "abc");
    CHECK_THROWS_WITH_AS(run_config_from(bad), doctest::Contains("trust_region.eps"),
                         std::invalid_argument);
}

TEST_CASE("cli: unknown loss exits 2 and lists valid ids") {
    CommandResult r = run_cli("run --problem gmm2d --loss banana" + kTinyArgs);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("tr-lv") != std::string::npos);
    CHECK(r.output.find("tr-socm") != std::string::npos);
}

TEST_CASE("cli: run writes metrics.csv, summary.json, and checkpoints") {
    const std::string out = (fs::temp_directory_path() / "trsoc_cli_run").string();
    fs::remove_all(out);
    CommandResult r = run_cli("run --problem gmm2d --loss tr-lv --eps 0.1 --seed 0 --out " + out +
                              kTinyArgs);
    CHECK(r.exit_code == 0);
    REQUIRE(fs::exists(out + "/metrics.csv"));
    REQUIRE(fs::exists(out + "/summary.json"));
    REQUIRE(fs::exists(out + "/checkpoint_final.bin"));
    const std::string csv = read_file(out + "/metrics.csv");
    CHECK(csv.find(metrics_csv_header()) == 0);
    const std::string summary = read_file(out + "/summary.json");
    CHECK(summary.find("\"dlogz\"") != std::string::npos);
    CHECK(summary.find("lambda_history") != std::string::npos);
    fs::remove_all(out);
}

TEST_CASE("cli: lqr run populates the ctrl_l2 column from the Riccati reference") {
    const std::string out = (fs::temp_directory_path() / "trsoc_cli_lqr").string();
    fs::remove_all(out);
    CommandResult r = run_cli("run --problem lqr-easy --loss tr-socm --dim 3 --seed 1 --out " + out +
                              kTinyArgs);
    CHECK(r.exit_code == 0);
    const std::string csv = read_file(out + "/metrics.csv");
    // header + at least one row whose ctrl_l2 cell (10th column) is nonempty
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    bool found = false;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() >= 10 && !cells[9].empty()) found = true;
    }
    CHECK(found);
    fs::remove_all(out);
}

TEST_CASE("cli: determinism of metrics.csv at fixed seed") {
    const std::string out1 = (fs::temp_directory_path() / "trsoc_det_a").string();
    const std::string out2 = (fs::temp_directory_path() / "trsoc_det_b").string();
    fs::remove_all(out1);
    fs::remove_all(out2);
    const std::string args = "run --problem gmm2d --loss tr-lv --eps 0.1 --seed 11" + kTinyArgs;
    CHECK(run_cli(args + " --out " + out1).exit_code == 0);
    CHECK(run_cli(args + " --out " + out2).exit_code == 0);
    CHECK(read_file(out1 + "/metrics.csv") == read_file(out2 + "/metrics.csv"));
    fs::remove_all(out1);
    fs::remove_all(out2);
}

TEST_CASE("cli: eval round-trips a checkpoint and validates inputs") {
    const std::string out = (fs::temp_directory_path() / "trsoc_cli_eval").string();
    fs::remove_all(out);
    CHECK(run_cli("run --problem gmm2d --loss tr-lv --seed 2 --out " + out + kTinyArgs).exit_code == 0);
    const std::string ckpt = out + "/checkpoint_final.bin";
    REQUIRE(fs::exists(ckpt));

    CommandResult ev = run_cli("eval --checkpoint " + ckpt + " --problem gmm2d --samples 1000");
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find(metrics_csv_header()) != std::string::npos);

    // K = 0 is a config error
    CHECK(run_cli("eval --checkpoint " + ckpt + " --problem gmm2d --samples 0").exit_code == 2);
    // dimension mismatch is a config error
    CHECK(run_cli("eval --checkpoint " + ckpt + " --problem lqr-easy --dim 7").exit_code == 2);
    fs::remove_all(out);
}

TEST_CASE("cli: eval of a zero-initialized net matches the zero-control baseline") {
    // save an untrained checkpoint via a 0-inner-step run? simplest: run with
    // max_outer 1 terminates before training only for a trivial target, so
    // instead construct and save a fresh net directly through the library.
    RunConfig cfg;
    cfg.problem = "gmm2d";
    ProblemBundle bundle = make_problem(cfg);
    ControlNet net(bundle.net, 0);
    const std::string ckpt = (fs::temp_directory_path() / "trsoc_zero_net.bin").string();
    net.save_checkpoint(ckpt, 0);

    CommandResult ev = run_cli("eval --checkpoint " + ckpt + " --problem gmm2d --samples 3000 --seed 5");
    REQUIRE(ev.exit_code == 0);
    // parse the ctrl_l2 (10th) and ctrl_l2_se (11th) cells of the row
    std::istringstream is(ev.output);
    std::string header, row;
    std::getline(is, header);
    std::getline(is, row);
    std::vector<std::string> cells;
    std::stringstream ls(row);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() >= 11);
    const double got = std::stod(cells[9]);
    const double got_se = std::stod(cells[10]);

    ZeroControl zero(2);
    GmmOptimalControl ref = [&] {
        DdsSpec dds;
        dds.eta = 2.5;
        return GmmOptimalControl(dds, gmm_preset(2, 10, 8.0, 20240817));
    }();
    Estimate base = control_l2_error(ref, zero, bundle.problem, bundle.grid, 3000, 17, bundle.integrator);
    CHECK(std::abs(got - base.value) <= 3.0 * std::sqrt(got_se * got_se + base.se * base.se));
    fs::remove(ckpt);
}

TEST_CASE("cli: sweep aggregates across seeds and rejects empty seed lists") {
    const std::string out = (fs::temp_directory_path() / "trsoc_cli_sweep").string();
    fs::remove_all(out);
    CommandResult r = run_cli("sweep --problem gmm2d --loss tr-lv --seeds 0,1 --out " + out + kTinyArgs);
    CHECK(r.exit_code == 0);
    REQUIRE(fs::exists(out + "/sweep_summary.json"));
    const std::string summary = read_file(out + "/sweep_summary.json");
    CHECK(summary.find("\"mean\"") != std::string::npos);
    CHECK(summary.find("\"sd\"") != std::string::npos);
    CHECK(fs::exists(out + "/seed_0/metrics.csv"));
    CHECK(fs::exists(out + "/seed_1/metrics.csv"));

    // single seed: sd = 0
    const std::string out1 = (fs::temp_directory_path() / "trsoc_cli_sweep1").string();
    fs::remove_all(out1);
    CommandResult r1 = run_cli("sweep --problem gmm2d --loss tr-lv --seeds 3 --out " + out1 + kTinyArgs);
    CHECK(r1.exit_code == 0);
    CHECK(read_file(out1 + "/sweep_summary.json").find("\"sd\": 0.0") != std::string::npos);

    CHECK(run_cli("sweep --problem gmm2d --seeds '' " + kTinyArgs).exit_code == 2);
    fs::remove_all(out);
    fs::remove_all(out1);
}

TEST_CASE("cli: TRSOC_OUT_ROOT prefixes relative output directories") {
    const std::string root = (fs::temp_directory_path() / "trsoc_root").string();
    fs::remove_all(root);
    const std::string cmd = "TRSOC_OUT_ROOT=" + root + " " + cli_path() +
                            " run --problem gmm2d --loss tr-lv --seed 0 --out rel_dir" + kTinyArgs +
                            " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(rc) == 0);
    CHECK(fs::exists(root + "/rel_dir/metrics.csv"));
    fs::remove_all(root);
}
