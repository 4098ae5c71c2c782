#pragma once

#include <optional>
#include <string>
#include <vector>

#include "harness.hpp"

namespace fsk {

// One experiment invocation: which command runs and every numeric knob
// it may need.  Defaults reproduce the standard unit-interval study.
struct RunConfig {
    std::string command;
    double a = 0.0;
    double b = 1.0;
    double p = 2.0;
    std::optional<double> s;
    std::vector<double> s_grid = {0.6, 0.7, 0.8, 0.9, 0.95};
    double collar = 2.0;
    MeshPolicy mesh;
    double quad_tol = 1e-10;
    double eigen_tol = 1e-8;
    int max_outer = 400;
    std::vector<int> k_grid = {2,  3,  4,  5,  6,  7,  8,  9,  10, 11,
                               12, 13, 14, 15, 16, 17, 18, 19, 20};
    std::string out_dir = ".";
    unsigned seed = 42;
    int threads = 1;
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Parses a flat key-value document: one `key = value` (or `key: value`)
// per line, `#` comments, lists in brackets.  Unknown keys and malformed
// values are ConfigErrors carrying the line number; so are validation
// failures, which name the offending field.
RunConfig parse_config(const std::string& text);

// Parse step alone, for callers that edit the config (command selection,
// flag overrides) before validating.
RunConfig parse_config_document(const std::string& text);

// Validation step alone; parse_config is document parsing plus this.
void validate_config(const RunConfig& cfg);

const std::vector<std::string>& known_commands();

}  // namespace fsk
