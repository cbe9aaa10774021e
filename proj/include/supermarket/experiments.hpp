#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "supermarket/io.hpp"
#include "supermarket/simulator.hpp"

// Experiment configs and the dispatcher behind the CLI: JSON config in, CSV
// plus a JSON metadata sidecar out. Outputs are computed fully before any
// file is written, so a failing run leaves no partial output.

namespace supermarket {

enum class ExperimentKind { FixedPointTable, Ode, Simulate, SojournCurve, Erlang, Kurtz };

inline ExperimentKind experiment_from_name(const std::string& name) {
    if (name == "fixed_point") return ExperimentKind::FixedPointTable;
    if (name == "ode") return ExperimentKind::Ode;
    if (name == "simulate") return ExperimentKind::Simulate;
    if (name == "sojourn_curve") return ExperimentKind::SojournCurve;
    if (name == "erlang") return ExperimentKind::Erlang;
    if (name == "kurtz") return ExperimentKind::Kurtz;
    throw ConfigError("unknown experiment: " + name);
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::FixedPointTable;
    nlohmann::json raw;      // parsed config, echoed into the sidecar
    std::string raw_text;    // original text, echoed bit-exactly
    ModelParams model;
    bool has_model = false;

    unsigned K = 0;  // 0 = automatic truncation
    std::string variant = "closed_form";

    double t_end = 50.0;
    double step = 1e-3;
    std::size_t snapshot_stride = 0;
    std::string start = "empty";

    std::size_t n = 500;
    double horizon = 1200.0;
    double warmup = 200.0;
    unsigned reps = 10;
    std::uint64_t seed = 20240501;
    bool with_replacement = true;

    std::vector<unsigned> d_range;
    std::vector<double> mu_list;
    double tol = 1e-12;

    std::vector<std::size_t> n_list;
    double t = 10.0;
    double sample_dt = 0.1;
    double ode_step = 1e-3;

    std::size_t m = 2;  // erlang order
    double eta = 4.0;   // erlang stage rate
    double lambda = 1.0;
    unsigned erlang_d = 2;

    std::string output_path = "out.csv";
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config field '" + key + "': " + e.what());
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    cfg.raw = j;
    cfg.raw_text = text;
    if (!j.contains("experiment") || !j.at("experiment").is_string())
        throw ConfigError("config: missing string field 'experiment'");
    cfg.kind = experiment_from_name(j.at("experiment").get<std::string>());

    if (j.contains("model")) {
        cfg.model = model_from_json(j.at("model"));
        cfg.has_model = true;
    }
    cfg.K = detail::get_or<unsigned>(j, "K", 0);
    cfg.variant = detail::get_or<std::string>(j, "variant", "closed_form");
    cfg.t_end = detail::get_or<double>(j, "t_end", 50.0);
    cfg.step = detail::get_or<double>(j, "step", 1e-3);
    cfg.snapshot_stride = detail::get_or<std::size_t>(j, "snapshot_stride", 0);
    cfg.start = detail::get_or<std::string>(j, "start", "empty");
    cfg.n = detail::get_or<std::size_t>(j, "n", 500);
    cfg.horizon = detail::get_or<double>(j, "horizon", 1200.0);
    cfg.warmup = detail::get_or<double>(j, "warmup", 200.0);
    cfg.reps = detail::get_or<unsigned>(j, "reps", 10);
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 20240501);
    cfg.with_replacement = detail::get_or<bool>(j, "with_replacement", true);
    cfg.d_range = detail::get_or<std::vector<unsigned>>(j, "d_range", {});
    cfg.mu_list = detail::get_or<std::vector<double>>(j, "mu_list", {});
    cfg.tol = detail::get_or<double>(j, "tol", 1e-12);
    cfg.n_list = detail::get_or<std::vector<std::size_t>>(j, "n_list", {});
    cfg.t = detail::get_or<double>(j, "t", 10.0);
    cfg.sample_dt = detail::get_or<double>(j, "sample_dt", 0.1);
    cfg.ode_step = detail::get_or<double>(j, "ode_step", 1e-3);
    cfg.m = detail::get_or<std::size_t>(j, "m", 2);
    cfg.eta = detail::get_or<double>(j, "eta", 4.0);
    cfg.lambda = detail::get_or<double>(j, "lambda", 1.0);
    cfg.erlang_d = detail::get_or<unsigned>(j, "erlang_d", 2);
    cfg.output_path = detail::get_or<std::string>(j, "output_path", "out.csv");

    // experiment-specific required pieces
    switch (cfg.kind) {
        case ExperimentKind::FixedPointTable:
        case ExperimentKind::Ode:
        case ExperimentKind::Simulate:
            if (!cfg.has_model) throw ConfigError("config: this experiment requires 'model'");
            break;
        case ExperimentKind::SojournCurve:
            if (!cfg.has_model) throw ConfigError("config: sojourn_curve requires 'model'");
            if (cfg.d_range.empty()) throw ConfigError("config: sojourn_curve requires nonempty 'd_range'");
            if (cfg.mu_list.empty()) throw ConfigError("config: sojourn_curve requires nonempty 'mu_list'");
            break;
        case ExperimentKind::Erlang:
            if (cfg.m < 1 || cfg.eta <= 0.0 || cfg.lambda <= 0.0)
                throw ConfigError("config: erlang requires m >= 1, eta > 0, lambda > 0");
            break;
        case ExperimentKind::Kurtz:
            if (!cfg.has_model) throw ConfigError("config: kurtz requires 'model'");
            if (cfg.n_list.empty()) throw ConfigError("config: kurtz requires nonempty 'n_list'");
            if (cfg.t <= 0.0 || cfg.sample_dt <= 0.0 || cfg.ode_step <= 0.0)
                throw ConfigError("config: kurtz requires positive t, sample_dt and ode_step");
            break;
    }
    if (cfg.reps == 0) throw ConfigError("config: reps must be >= 1");
    if (cfg.kind == ExperimentKind::Ode || cfg.kind == ExperimentKind::Simulate) {
        if (cfg.step <= 0.0) throw ConfigError("config: step must be positive");
        if (cfg.t_end < 0.0) throw ConfigError("config: t_end must be nonnegative");
        if (cfg.kind == ExperimentKind::Simulate && cfg.horizon <= cfg.warmup)
            throw ConfigError("config: need horizon > warmup");
    }
    return cfg;
}

// The running example model: a 2-phase MAP with exponential service.
inline nlohmann::json paper_example_model(double mu = 10.0, unsigned d = 2) {
    nlohmann::json model;
    model["map"]["C"] = {{-10.0, 7.0}, {4.0, -9.0}};
    model["map"]["D"] = {{1.0, 2.0}, {3.0, 2.0}};
    model["ph"]["alpha"] = {1.0};
    model["ph"]["T"] = {{-mu}};
    model["d"] = d;
    return model;
}

inline ExperimentConfig paper_defaults(const std::string& experiment) {
    nlohmann::json j;
    j["experiment"] = experiment;
    const ExperimentKind kind = experiment_from_name(experiment);
    switch (kind) {
        case ExperimentKind::FixedPointTable:
        case ExperimentKind::Ode:
            j["model"] = paper_example_model();
            break;
        case ExperimentKind::Simulate:
            j["model"] = paper_example_model();
            j["n"] = 500;
            j["horizon"] = 1200.0;
            j["warmup"] = 200.0;
            j["reps"] = 10;
            break;
        case ExperimentKind::SojournCurve:
            j["model"] = paper_example_model();
            j["d_range"] = {1, 2, 3, 4, 5};
            j["mu_list"] = {5.0, 10.0, 20.0};
            break;
        case ExperimentKind::Erlang:
            j["m"] = 2;
            j["erlang_d"] = 2;
            j["lambda"] = 1.0;
            j["eta"] = 4.0;  // rho = m lambda / eta = 0.5
            j["K"] = 8;
            break;
        case ExperimentKind::Kurtz:
            j["model"] = paper_example_model();
            j["n_list"] = {50, 100, 200, 400};
            j["t"] = 10.0;
            j["reps"] = 5;
            break;
    }
    return parse_config(j.dump(2));
}

namespace detail {

inline void write_sidecar(const ExperimentConfig& cfg, nlohmann::json extra) {
    nlohmann::json meta;
    meta["config"] = cfg.raw;
    meta["config_text"] = cfg.raw_text;
    meta["library_version"] = kLibraryVersion;
    meta["seed"] = cfg.seed;
    meta["extra"] = std::move(extra);
    std::ofstream out(cfg.output_path + ".meta.json", std::ios::binary);
    if (!out) throw ConfigError("cannot open sidecar path: " + cfg.output_path + ".meta.json");
    out << meta.dump(2) << "\n";
}

inline FixedPoint build_variant(const ModelParams& p, const std::string& variant, unsigned K) {
    if (variant == "closed_form") return closed_form(p, K);
    if (variant == "poisson_ph_first") return poisson_ph_first(p, K);
    if (variant == "poisson_ph_second") return poisson_ph_second(p, K);
    throw ConfigError("unknown fixed-point variant: " + variant);
}

}  // namespace detail

inline void run_fixed_point(const ExperimentConfig& cfg) {
    const unsigned K = cfg.K ? cfg.K : default_truncation_level(cfg.model, 1e-14);
    const FixedPoint fp = detail::build_variant(cfg.model, cfg.variant, K);
    CsvWriter csv("k,pi_sum,variant");
    csv.add_field(std::size_t{0});
    csv.add_field(fp.pi0.sum());
    csv.add_field(std::string(to_string(fp.variant)));
    csv.end_row();
    for (unsigned k = 1; k <= fp.K; ++k) {
        csv.add_field(k);
        csv.add_field(fp.level_sum(k));
        csv.add_field(std::string(to_string(fp.variant)));
        csv.end_row();
    }
    csv.write(cfg.output_path);
    nlohmann::json extra;
    extra["K"] = fp.K;
    extra["tail_bound"] = fp.tail_bound;
    detail::write_sidecar(cfg, extra);
}

inline void run_ode(const ExperimentConfig& cfg) {
    const unsigned K = cfg.K ? cfg.K : default_truncation_level(cfg.model, 1e-12);
    FractionVector start;
    if (cfg.start == "empty") {
        start = empty_state(cfg.model, K);
    } else if (cfg.start == "fixed_point") {
        start = from_fixed_point(closed_form(cfg.model, K), K);
    } else {
        throw ConfigError("config: start must be 'empty' or 'fixed_point'");
    }
    IntegrateOptions opts;
    opts.snapshot_stride = cfg.snapshot_stride;
    const Trajectory traj = integrate(start, cfg.model, cfg.t_end, cfg.step, opts);

    CsvWriter csv("t,k,block_index,value,drift");
    for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
        const auto& snap = traj.snapshots[s];
        const double drift = traj.drift_log[s];
        for (std::size_t i = 0; i < snap.s0.size(); ++i) {
            csv.add_field(snap.t);
            csv.add_field(std::size_t{0});
            csv.add_field(i);
            csv.add_field(snap.s0[i]);
            csv.add_field(drift);
            csv.end_row();
        }
        for (unsigned k = 1; k <= snap.K(); ++k)
            for (std::size_t i = 0; i < snap.level(k).size(); ++i) {
                csv.add_field(snap.t);
                csv.add_field(static_cast<std::size_t>(k));
                csv.add_field(i);
                csv.add_field(snap.level(k)[i]);
                csv.add_field(drift);
                csv.end_row();
            }
    }
    csv.write(cfg.output_path);
    nlohmann::json extra;
    extra["K"] = K;
    extra["snapshots"] = traj.snapshots.size();
    extra["final_drift"] = traj.drift_log.back();
    detail::write_sidecar(cfg, extra);
}

inline void run_simulate(const ExperimentConfig& cfg) {
    SimOptions sopts;
    sopts.with_replacement = cfg.with_replacement;
    const std::vector<SimResult> reps =
        run_replications(cfg.model, cfg.n, cfg.horizon, cfg.warmup, cfg.seed, cfg.reps, sopts);

    unsigned k_max = 0;
    for (const auto& r : reps) k_max = std::max(k_max, r.k_max);
    CsvWriter csv("k,empirical_tail,stderr");
    for (unsigned k = 1; k <= k_max; ++k) {
        double mean = 0.0;
        for (const auto& r : reps) mean += r.tail(k);
        mean /= reps.size();
        double se = 0.0;
        if (reps.size() > 1) {
            double var = 0.0;
            for (const auto& r : reps) var += (r.tail(k) - mean) * (r.tail(k) - mean);
            var /= (reps.size() - 1);
            se = std::sqrt(var / reps.size());
        }
        csv.add_field(k);
        csv.add_field(mean);
        csv.add_field(se);
        csv.end_row();
    }
    csv.write(cfg.output_path);

    double soj_mean = 0.0;
    for (const auto& r : reps) soj_mean += r.sojourn_mean;
    soj_mean /= reps.size();
    double soj_se = 0.0;
    if (reps.size() > 1) {
        double var = 0.0;
        for (const auto& r : reps) var += (r.sojourn_mean - soj_mean) * (r.sojourn_mean - soj_mean);
        var /= (reps.size() - 1);
        soj_se = std::sqrt(var / reps.size());
    }
    nlohmann::json extra;
    extra["n"] = cfg.n;
    extra["d"] = cfg.model.d;
    extra["horizon"] = cfg.horizon;
    extra["warmup"] = cfg.warmup;
    extra["reps"] = cfg.reps;
    extra["sojourn_mean"] = soj_mean;
    extra["sojourn_stderr"] = soj_se;
    nlohmann::json per_rep = nlohmann::json::array();
    for (const auto& r : reps) {
        nlohmann::json jr;
        jr["seed"] = r.seed;
        jr["events"] = r.event_count;
        jr["arrivals"] = r.arrivals;
        jr["departures"] = r.departures;
        jr["sojourn_mean"] = r.sojourn_mean;
        jr["sojourn_half_width"] = r.sojourn_half_width;
        per_rep.push_back(jr);
    }
    extra["replications"] = per_rep;
    detail::write_sidecar(cfg, extra);
}

// E[T_d] over a (d, mu) grid with exponential service at each mu, using the
// configured arrival MAP. Unstable pairs are flagged, not dropped.
inline void run_sojourn_curve(const ExperimentConfig& cfg) {
    CsvWriter csv("d,mu,E_Td,status");
    for (unsigned d : cfg.d_range) {
        if (d < 1) throw ConfigError("sojourn_curve: d values must be >= 1");
        for (double mu : cfg.mu_list) {
            csv.add_field(d);
            csv.add_field(mu);
            try {
                const ModelParams p = build_params(cfg.model.map, exponential_ph(mu), d);
                csv.add_field(expected_sojourn(p, cfg.tol));
                csv.add_field(std::string("ok"));
            } catch (const StabilityError&) {
                csv.add_field(std::string("nan"));
                csv.add_field(std::string("unstable"));
            }
            csv.end_row();
        }
    }
    csv.write(cfg.output_path);
    nlohmann::json extra;
    extra["lambda"] = cfg.model.map.lambda;
    detail::write_sidecar(cfg, extra);
}

inline void run_erlang(const ExperimentConfig& cfg) {
    const unsigned K = cfg.K ? cfg.K : 8;
    const auto rows = erlang_compare(cfg.m, cfg.erlang_d, cfg.lambda, cfg.eta, K);
    CsvWriter csv("k,first_sum,second_sum,ratio");
    for (const auto& row : rows) {
        csv.add_field(row.k);
        csv.add_field(row.first_sum);
        csv.add_field(row.second_sum);
        csv.add_field(row.ratio);
        csv.end_row();
    }
    csv.write(cfg.output_path);
    nlohmann::json extra;
    extra["m"] = cfg.m;
    extra["d"] = cfg.erlang_d;
    extra["rho"] = static_cast<double>(cfg.m) * cfg.lambda / cfg.eta;
    detail::write_sidecar(cfg, extra);
}

inline void run_kurtz(const ExperimentConfig& cfg) {
    KurtzOptions kopts;
    kopts.ode_step = cfg.ode_step;
    kopts.sample_dt = cfg.sample_dt;
    kopts.sim.with_replacement = cfg.with_replacement;
    const auto rows = kurtz_convergence(cfg.model, cfg.n_list, cfg.t, cfg.reps, cfg.seed, kopts);
    CsvWriter csv("n,sup_distance,stderr");
    for (const auto& row : rows) {
        csv.add_field(row.n);
        csv.add_field(row.sup_distance);
        csv.add_field(row.stderr_mean);
        csv.end_row();
    }
    csv.write(cfg.output_path);
    nlohmann::json extra;
    extra["t"] = cfg.t;
    extra["reps"] = cfg.reps;
    extra["sample_dt"] = cfg.sample_dt;
    detail::write_sidecar(cfg, extra);
}

// CLI exit-code mapping: 0 success, 2 config/validation, 3 stability, 4 numeric.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const StabilityError*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const StructuralError*>(&e) || dynamic_cast<const DomainError*>(&e))
        return 2;
    return 4;
}

inline void run(const ExperimentConfig& cfg) {
    switch (cfg.kind) {
        case ExperimentKind::FixedPointTable: run_fixed_point(cfg); return;
        case ExperimentKind::Ode: run_ode(cfg); return;
        case ExperimentKind::Simulate: run_simulate(cfg); return;
        case ExperimentKind::SojournCurve: run_sojourn_curve(cfg); return;
        case ExperimentKind::Erlang: run_erlang(cfg); return;
        case ExperimentKind::Kurtz: run_kurtz(cfg); return;
    }
    throw ConfigError("run: unhandled experiment kind");
}

}  // namespace supermarket
