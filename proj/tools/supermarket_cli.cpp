#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "supermarket/supermarket.hpp"

// Command-line front end: each subcommand runs one experiment from a JSON
// config (or the built-in example defaults) and writes a CSV plus a JSON
// metadata sidecar.
//
// Exit codes: 0 success, 2 config error, 3 stability error, 4 numeric error.

namespace {

struct SubcommandState {
    std::string config_path;
    std::string out_path;
    std::int64_t seed = -1;
    bool paper_defaults = false;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw supermarket::ConfigError("cannot read config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_experiment(const std::string& experiment, const SubcommandState& st) {
    using namespace supermarket;
    try {
        ExperimentConfig cfg;
        if (!st.config_path.empty()) {
            cfg = parse_config(read_file(st.config_path));
            if (cfg.kind != experiment_from_name(experiment))
                throw ConfigError("config is for experiment '" +
                                  cfg.raw.at("experiment").get<std::string>() +
                                  "' but the subcommand is '" + experiment + "'");
        } else if (st.paper_defaults) {
            cfg = paper_defaults(experiment);
        } else {
            throw ConfigError("provide --config <path> or --paper-defaults");
        }
        if (!st.out_path.empty()) {
            cfg.output_path = st.out_path;
            cfg.raw["output_path"] = st.out_path;
        }
        if (st.seed >= 0) {
            cfg.seed = static_cast<std::uint64_t>(st.seed);
            cfg.raw["seed"] = cfg.seed;
        }
        run(cfg);
        std::cout << cfg.output_path << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return supermarket::exit_code_for(e);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-field and finite-n analysis of join-shortest-of-d queueing systems"};
    app.require_subcommand(1);

    const std::pair<const char*, const char*> subs[] = {
        {"fixed-point", "fixed_point"}, {"ode", "ode"},       {"simulate", "simulate"},
        {"sojourn-curve", "sojourn_curve"}, {"erlang", "erlang"}, {"kurtz", "kurtz"},
    };

    std::array<SubcommandState, 6> states;
    std::array<std::string, 6> experiments;
    for (std::size_t i = 0; i < 6; ++i) {
        auto* sub = app.add_subcommand(subs[i].first);
        experiments[i] = subs[i].second;
        sub->add_option("--config", states[i].config_path, "JSON experiment config");
        sub->add_option("--out", states[i].out_path, "output CSV path (overrides config)");
        sub->add_option("--seed", states[i].seed, "RNG seed (overrides config)");
        sub->add_flag("--paper-defaults", states[i].paper_defaults,
                      "run the built-in example model instead of a config file");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    for (std::size_t i = 0; i < 6; ++i)
        if (app.get_subcommands().size() == 1 &&
            app.get_subcommands()[0]->get_name() == subs[i].first)
            return run_experiment(experiments[i], states[i]);
    std::cerr << "error: no subcommand selected\n";
    return 2;
}
