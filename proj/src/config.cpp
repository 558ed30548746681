#include "trsoc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace trsoc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        fail_contract("config: field '", key, "' expects a number, got '", v, "'");
    }
}

long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        fail_contract("config: field '", key, "' expects an integer, got '", v, "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail_contract("config: field '", key, "' expects a boolean, got '", v, "'");
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Config Config::parse_text(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail_contract("config: malformed section header at line ", lineno);
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail_contract("config: empty section name at line ", lineno);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail_contract("config: expected 'key = value' at line ", lineno, ": '", line, "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail_contract("config: empty key at line ", lineno);
        c.set(section.empty() ? key : section + "." + key, value);
    }
    return c;
}

Config Config::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail_runtime("config: cannot open '", path, "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str());
}

std::string Config::serialize() const {
    // group by section in first-appearance order
    std::vector<std::string> sections;
    for (const auto& [key, _] : entries_) {
        const std::string sec = key.substr(0, key.find('.'));
        if (std::find(sections.begin(), sections.end(), sec) == sections.end()) sections.push_back(sec);
    }
    std::ostringstream os;
    bool first = true;
    for (const std::string& sec : sections) {
        if (!first) os << '\n';
        first = false;
        os << '[' << sec << "]\n";
        for (const auto& [key, value] : entries_) {
            if (key.substr(0, key.find('.')) != sec) continue;
            os << key.substr(key.find('.') + 1) << " = " << value << '\n';
        }
    }
    return os.str();
}

std::optional<std::string> Config::get(const std::string& dotted_key) const {
    for (const auto& [key, value] : entries_)
        if (key == dotted_key) return value;
    return std::nullopt;
}

void Config::set(const std::string& dotted_key, const std::string& value) {
    for (auto& [key, v] : entries_) {
        if (key == dotted_key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(dotted_key, value);
}

RunConfig run_config_from(const Config& config) {
    RunConfig cfg;
    for (const auto& [key, value] : config.entries()) {
        if (key == "problem.id") cfg.problem = value;
        else if (key == "problem.dim") cfg.dim = static_cast<int>(parse_int(key, value));
        else if (key == "problem.grid_steps") cfg.grid_steps = static_cast<int>(parse_int(key, value));
        else if (key == "trust_region.eps") cfg.eps = parse_double(key, value);
        else if (key == "trust_region.delta") cfg.delta = parse_double(key, value);
        else if (key == "trust_region.enabled") cfg.trust_region = parse_bool(key, value);
        else if (key == "training.loss") {
            const auto k = parse_loss(value);
            if (!k)
                fail_contract("config: field 'training.loss' has unknown loss '", value,
                              "' (valid: tr-lv, tr-ce, tr-moment, tr-socm)");
            cfg.loss = *k;
        } else if (key == "training.buffer_size") cfg.buffer_size = static_cast<int>(parse_int(key, value));
        else if (key == "training.inner_steps") cfg.inner_steps = static_cast<int>(parse_int(key, value));
        else if (key == "training.minibatch") cfg.minibatch = static_cast<int>(parse_int(key, value));
        else if (key == "training.lr") cfg.adam.lr = parse_double(key, value);
        else if (key == "training.clip") cfg.adam.clip = parse_double(key, value);
        else if (key == "training.socm_subsample") cfg.socm_subsample = static_cast<int>(parse_int(key, value));
        else if (key == "training.lv_reweighted") cfg.lv_reweighted = parse_bool(key, value);
        else if (key == "net.layers") cfg.net_layers = static_cast<int>(parse_int(key, value));
        else if (key == "net.width") cfg.net_width = static_cast<int>(parse_int(key, value));
        else if (key == "net.fourier") cfg.net_fourier = static_cast<int>(parse_int(key, value));
        else if (key == "run.seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
        else if (key == "run.max_outer") cfg.max_outer = static_cast<int>(parse_int(key, value));
        else if (key == "run.eval_every") cfg.eval_every = static_cast<int>(parse_int(key, value));
        else if (key == "run.eval_samples") cfg.eval_samples = static_cast<int>(parse_int(key, value));
        else if (key == "run.final_eval_samples")
            cfg.final_eval_samples = static_cast<int>(parse_int(key, value));
        else if (key == "run.final_eval_grid_steps")
            cfg.final_eval_grid_steps = static_cast<int>(parse_int(key, value));
        else if (key == "run.out_dir") cfg.out_dir = value;
        else if (key == "run.log_walltime") cfg.log_walltime = parse_bool(key, value);
        else fail_contract("config: unrecognized field '", key, "'");
    }
    cfg.validate();
    return cfg;
}

Config config_from(const RunConfig& cfg) {
    Config c;
    c.set("problem.id", cfg.problem);
    c.set("problem.dim", std::to_string(cfg.dim));
    c.set("problem.grid_steps", std::to_string(cfg.grid_steps));
    c.set("trust_region.eps", format_double(cfg.eps));
    c.set("trust_region.delta", format_double(cfg.delta));
    c.set("trust_region.enabled", cfg.trust_region ? "true" : "false");
    c.set("training.loss", loss_name(cfg.loss));
    c.set("training.buffer_size", std::to_string(cfg.buffer_size));
    c.set("training.inner_steps", std::to_string(cfg.inner_steps));
    c.set("training.minibatch", std::to_string(cfg.minibatch));
    c.set("training.lr", format_double(cfg.adam.lr));
    c.set("training.clip", format_double(cfg.adam.clip));
    c.set("training.socm_subsample", std::to_string(cfg.socm_subsample));
    c.set("training.lv_reweighted", cfg.lv_reweighted ? "true" : "false");
    c.set("net.layers", std::to_string(cfg.net_layers));
    c.set("net.width", std::to_string(cfg.net_width));
    c.set("net.fourier", std::to_string(cfg.net_fourier));
    c.set("run.seed", std::to_string(cfg.seed));
    c.set("run.max_outer", std::to_string(cfg.max_outer));
    c.set("run.eval_every", std::to_string(cfg.eval_every));
    c.set("run.eval_samples", std::to_string(cfg.eval_samples));
    c.set("run.final_eval_samples", std::to_string(cfg.final_eval_samples));
    c.set("run.final_eval_grid_steps", std::to_string(cfg.final_eval_grid_steps));
    c.set("run.out_dir", cfg.out_dir);
    c.set("run.log_walltime", cfg.log_walltime ? "true" : "false");
    return c;
}

}  // namespace trsoc
