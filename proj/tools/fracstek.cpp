// Command-line front end.  All numerics live behind the C API; this
// file only parses flags, reads the config document, and maps status to
// an exit code.
#include <fracsteklov.h>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"nonlocal boundary eigenvalue laboratory"};
    app.set_version_flag("--version", std::string(fsk_version()));
    app.require_subcommand(0, 1);

    std::string config_path;
    double s_override = std::numeric_limits<double>::quiet_NaN();
    double p_override = std::numeric_limits<double>::quiet_NaN();

    const struct {
        const char* name;
        const char* help;
    } commands[] = {
        {"constants", "print the gradient-limit normalization constants"},
        {"verify", "run the identity, inequality, and limit-table checks"},
        {"solve", "compute one eigenpair at the configured s and p"},
        {"sweep", "run the s-grid convergence study and write reports"},
        {"ref", "print the classical interval eigenvalue reference"},
        {"demo-zero", "show the remote-bump quotient decaying to zero"},
        {"trace", "minimize the boundary trace quotient"},
    };
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("-c,--config", config_path,
                        "key = value config document");
        sub->add_option("--s", s_override, "override s from the config");
        sub->add_option("--p", p_override, "override p from the config");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    std::string command;
    for (const CLI::App* sub : app.get_subcommands())
        command = sub->get_name();

    std::string config_text;
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) {
            std::fprintf(stderr, "fracstek: cannot read config file '%s'\n",
                         config_path.c_str());
            return 2;
        }
        std::stringstream ss;
        ss << in.rdbuf();
        config_text = ss.str();
    }

    int exit_code = 2;
    const fsk_status status =
        fsk_run(config_text.c_str(), command.empty() ? nullptr : command.c_str(),
                s_override, p_override, &exit_code);
    if (status != FSK_OK)
        std::fprintf(stderr, "fracstek: %s\n", fsk_last_error());
    return exit_code;
}
