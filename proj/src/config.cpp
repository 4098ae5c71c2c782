#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

namespace fsk {

namespace {

std::string trim(const std::string& s) {
    std::size_t lo = 0, hi = s.size();
    while (lo < hi && std::isspace(static_cast<unsigned char>(s[lo]))) ++lo;
    while (hi > lo && std::isspace(static_cast<unsigned char>(s[hi - 1]))) --hi;
    return s.substr(lo, hi - lo);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, int line, const std::string& key) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty())
        fail(line, key + " expects a number, got '" + v + "'");
    return x;
}

long parse_int(const std::string& v, int line, const std::string& key) {
    char* end = nullptr;
    const long x = std::strtol(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty())
        fail(line, key + " expects an integer, got '" + v + "'");
    return x;
}

std::vector<std::string> split_list(const std::string& v, int line,
                                    const std::string& key) {
    const std::string t = trim(v);
    if (t.size() < 2 || t.front() != '[' || t.back() != ']')
        fail(line, key + " expects a bracketed list, got '" + v + "'");
    std::vector<std::string> items;
    std::string body = t.substr(1, t.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(line, key + " has an empty list element");
        items.push_back(item);
    }
    return items;
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') ||
                          (v.front() == '\'' && v.back() == '\'')))
        return v.substr(1, v.size() - 2);
    return v;
}

[[noreturn]] void invalid(const std::string& msg) { throw ConfigError(msg); }

}  // namespace

const std::vector<std::string>& known_commands() {
    static const std::vector<std::string> cmds = {
        "constants", "verify", "solve", "sweep", "ref", "demo-zero", "trace"};
    return cmds;
}

void validate_config(const RunConfig& cfg) {
    const auto& cmds = known_commands();
    if (std::find(cmds.begin(), cmds.end(), cfg.command) == cmds.end()) {
        std::string all;
        for (const auto& c : cmds) all += (all.empty() ? "" : ", ") + c;
        invalid("command must be one of: " + all +
                (cfg.command.empty() ? " (missing)" : " (got '" + cfg.command + "')"));
    }
    if (!(cfg.b > cfg.a)) invalid("domain requires b > a");
    if (!(cfg.p > 1.0)) invalid("p must exceed 1");
    if (cfg.s && !(*cfg.s > 0.0 && *cfg.s < 1.0))
        invalid("s must lie in (0, 1)");
    if (cfg.s_grid.empty()) invalid("s_grid must be nonempty");
    for (double s : cfg.s_grid)
        if (!(s > 0.0 && s < 1.0)) invalid("s_grid values must lie in (0, 1)");
    for (std::size_t i = 1; i < cfg.s_grid.size(); ++i)
        if (!(cfg.s_grid[i] > cfg.s_grid[i - 1]))
            invalid("s_grid must be strictly increasing");
    if (!(cfg.collar > 0.0)) invalid("collar must be positive");
    if (!(cfg.mesh.h > 0.0)) invalid("h must be positive");
    if (!(cfg.mesh.gamma >= 1.0)) invalid("gamma must be at least 1");
    if (cfg.mesh.min_strip_cells < 1)
        invalid("min_strip_cells must be positive");
    if (!(cfg.quad_tol > 0.0)) invalid("quad_tol must be positive");
    if (!(cfg.eigen_tol > 0.0)) invalid("eigen_tol must be positive");
    if (cfg.max_outer < 1) invalid("max_outer must be positive");
    if (cfg.k_grid.empty()) invalid("k_grid must be nonempty");
    for (int k : cfg.k_grid)
        if (k < 1) invalid("k_grid values must be positive");
    for (std::size_t i = 1; i < cfg.k_grid.size(); ++i)
        if (cfg.k_grid[i] <= cfg.k_grid[i - 1])
            invalid("k_grid must be strictly increasing");
    if (cfg.out_dir.empty()) invalid("out_dir must be nonempty");
    if (cfg.threads < 1) invalid("threads must be positive");
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg = parse_config_document(text);
    validate_config(cfg);
    return cfg;
}

RunConfig parse_config_document(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string raw;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string entry = trim(raw);
        if (entry.empty()) continue;

        std::size_t sep = entry.find('=');
        if (sep == std::string::npos) sep = entry.find(':');
        if (sep == std::string::npos)
            fail(line, "expected 'key = value', got '" + entry + "'");
        const std::string key = trim(entry.substr(0, sep));
        const std::string value = trim(entry.substr(sep + 1));
        if (key.empty()) fail(line, "missing key");
        if (value.empty()) fail(line, key + " has no value");

        if (key == "command") {
            cfg.command = unquote(value);
        } else if (key == "a") {
            cfg.a = parse_double(value, line, key);
        } else if (key == "b") {
            cfg.b = parse_double(value, line, key);
        } else if (key == "p") {
            cfg.p = parse_double(value, line, key);
        } else if (key == "s") {
            cfg.s = parse_double(value, line, key);
        } else if (key == "s_grid") {
            cfg.s_grid.clear();
            for (const auto& item : split_list(value, line, key))
                cfg.s_grid.push_back(parse_double(item, line, key));
        } else if (key == "collar") {
            cfg.collar = parse_double(value, line, key);
        } else if (key == "h") {
            cfg.mesh.h = parse_double(value, line, key);
        } else if (key == "gamma") {
            cfg.mesh.gamma = parse_double(value, line, key);
        } else if (key == "min_strip_cells") {
            cfg.mesh.min_strip_cells =
                static_cast<int>(parse_int(value, line, key));
        } else if (key == "quad_tol") {
            cfg.quad_tol = parse_double(value, line, key);
        } else if (key == "eigen_tol") {
            cfg.eigen_tol = parse_double(value, line, key);
        } else if (key == "max_outer") {
            cfg.max_outer = static_cast<int>(parse_int(value, line, key));
        } else if (key == "k_grid") {
            cfg.k_grid.clear();
            for (const auto& item : split_list(value, line, key))
                cfg.k_grid.push_back(
                    static_cast<int>(parse_int(item, line, key)));
        } else if (key == "out_dir") {
            cfg.out_dir = unquote(value);
        } else if (key == "seed") {
            cfg.seed = static_cast<unsigned>(parse_int(value, line, key));
        } else if (key == "threads") {
            cfg.threads = static_cast<int>(parse_int(value, line, key));
        } else {
            fail(line, "unknown key '" + key + "'");
        }
    }
    return cfg;
}

}  // namespace fsk
