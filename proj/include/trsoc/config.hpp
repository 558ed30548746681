#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trsoc/driver.hpp"

namespace trsoc {

// Flat key-value configuration with [section] headers. Keys are addressed as
// "section.key". Parse -> serialize -> parse is the identity on recognized
// keys; unknown keys are rejected when mapped onto a RunConfig.
class Config {
public:
    static Config parse_text(const std::string& text);
    static Config load_file(const std::string& path);
    std::string serialize() const;

    std::optional<std::string> get(const std::string& dotted_key) const;
    void set(const std::string& dotted_key, const std::string& value);

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;  // dotted key -> value
};

// Validates and maps a Config onto a RunConfig; throws std::invalid_argument
// naming the offending field.
RunConfig run_config_from(const Config& config);

// Full canonical Config for a RunConfig (every recognized key populated).
Config config_from(const RunConfig& cfg);

}  // namespace trsoc
