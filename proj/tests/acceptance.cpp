// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit status is nonzero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "supermarket/supermarket.hpp"

using namespace supermarket;

namespace {

int failures = 0;

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void report(int id, const std::string& name, bool pass, double elapsed,
            const std::string& detail) {
    if (!pass) ++failures;
    std::printf("%s criterion %2d: %s [%.2fs] %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                elapsed, detail.c_str());
    std::fflush(stdout);
}

void note(const std::string& text) { std::printf("        %s\n", text.c_str()); }

ModelParams mm_params(double rho, unsigned d, double mu = 1.0) {
    return build_params(poisson_map(rho * mu), exponential_ph(mu), d);
}

ModelParams random_model(Philox& rng) {
    const std::size_t ma = 1 + rng.uniform_below(4);
    const std::size_t mb = 1 + rng.uniform_below(4);
    Matrix c(ma, ma), d(ma, ma);
    for (std::size_t i = 0; i < ma; ++i) {
        double out = 0.0;
        for (std::size_t j = 0; j < ma; ++j) {
            d(i, j) = 0.5 * rng.uniform01();
            out += d(i, j);
            if (i != j) {
                c(i, j) = 0.1 + rng.uniform01();
                out += c(i, j);
            }
        }
        c(i, i) = -out;
    }
    const MapProcess map = build_map(c, d);
    Matrix t(mb, mb);
    Vector alpha(mb);
    for (std::size_t i = 0; i < mb; ++i) alpha[i] = 0.1 + rng.uniform01();
    const double asum = alpha.sum();
    for (std::size_t i = 0; i < mb; ++i) alpha[i] /= asum;
    for (std::size_t i = 0; i < mb; ++i) {
        double out = 0.05 + rng.uniform01();
        for (std::size_t j = 0; j < mb; ++j) {
            if (i == j) continue;
            t(i, j) = 0.8 * rng.uniform01();
            out += t(i, j);
        }
        t(i, i) = -out;
    }
    PhDistribution ph = build_ph(alpha, t);
    const double target_rho = 0.3 + 0.5 * rng.uniform01();
    ph = build_ph(alpha, (map.lambda / (target_rho * ph.mu)) * t);
    const unsigned dd = 1 + static_cast<unsigned>(rng.uniform_below(4));
    return build_params(map, ph, dd);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) row.push_back(field);
        rows.push_back(row);
    }
    return rows;
}

std::string out_dir;

// ---------------------------------------------------------------------------

void criterion_1() {
    Timer timer;
    bool pass = true;
    std::string detail;
    for (double rho : {0.3, 0.5, 0.9}) {
        const FixedPoint fp = closed_form(mm_params(rho, 2), 10);
        for (unsigned k = 1; k <= 10; ++k) {
            const double expect = std::pow(rho, std::pow(2.0, k) - 1.0);
            const double got = fp.level_sum(k);
            if (expect == 0.0 && got == 0.0) continue;  // both underflow (rho=0.3, k=10)
            if (std::fabs(got - expect) > 1e-12 * expect) {
                pass = false;
                detail = "rho=" + std::to_string(rho) + " k=" + std::to_string(k);
            }
        }
    }
    pass = pass && timer.seconds() < 1.0;
    report(1, "M/M reduction exactness", pass, timer.seconds(), detail);
}

void criterion_2() {
    Timer timer;
    Philox rng(987654321);
    bool pass = true;
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const ModelParams p = random_model(rng);
        const FixedPoint fp = closed_form(p, 7);
        const ResidualReport rep = residuals(fp, p, 6);
        worst = std::max({worst, rep.w_annihilation, rep.r_annihilation, rep.pi0_annihilation});
    }
    pass = worst <= 1e-11 && timer.seconds() < 5.0;
    report(2, "algebraic annihilation identities", pass, timer.seconds(),
           "max norm " + format_double(worst));
}

void criterion_3() {
    Timer timer;
    bool ratio_ok = true;
    bool residual_ok = true;
    double worst_direct_first = 0.0, worst_direct_second = 0.0;
    double worst_proj_second = 0.0, worst_transformed_first = 0.0;
    for (std::size_t m : {2, 3}) {
        for (unsigned d : {2u, 3u}) {
            const double eta = 2.0 * static_cast<double>(m);  // mu = 2, rho = 0.5 at lambda 1
            const ModelParams p = build_params(poisson_map(1.0), erlang_ph(m, eta), d);
            const FixedPoint first = poisson_ph_first(p, 9);
            const FixedPoint second = poisson_ph_second(p, 9);
            const ResidualReport rf = residuals(first, p, 8);
            const ResidualReport rs = residuals(second, p, 8);
            const double direct_f = std::max({rf.eq8, rf.eq9, rf.eq10_max});
            const double direct_s = std::max({rs.eq8, rs.eq9, rs.eq10_max});
            worst_direct_first = std::max(worst_direct_first, direct_f);
            worst_direct_second = std::max(worst_direct_second, direct_s);
            worst_proj_second = std::max(
                {worst_proj_second, rs.eq8, rs.eq9_projected, rs.eq10_projected_max});
            worst_transformed_first =
                std::max({worst_transformed_first, rf.eq13, rf.eq14_max});
            if (direct_f > 1e-10 || direct_s > 1e-10) residual_ok = false;

            try {
                erlang_compare(m, d, 1.0, eta, 8);  // throws if the ratio law fails at 1e-10
            } catch (const NumericError&) {
                ratio_ok = false;
            }
        }
    }
    const bool pass = residual_ok && ratio_ok && timer.seconds() < 5.0;
    report(3, "dual-solution verification (Poisson + Erlang)", pass, timer.seconds(),
           ratio_ok ? "ratio law m^(d^(k-1)-1) holds to 1e-10 at every level"
                    : "ratio law violated");
    if (!residual_ok) {
        note("residual clause: direct entrywise residuals on the level equations are");
        note("  first construction:  max " + format_double(worst_direct_first) +
             " (misses the level-1 cut by lambda: pi_1 T0 = 0)");
        note("  second construction: max " + format_double(worst_direct_second) +
             " (entrywise gap lambda rho^d (tau^{od} - psi alpha))");
        note("the constructions satisfy only projected/transformed forms:");
        note("  second, e-projected balances:     max " + format_double(worst_proj_second));
        note("  first, transformed-system levels: max " + format_double(worst_transformed_first) +
             " (nonzero entrywise as well)");
        note("both expressions fail the entrywise fixed-point equations for Erlang");
        note("service with m,d >= 2; only their level sums obey the stated laws.");
    }
}

Trajectory criterion_4_traj;  // reused by criteria 5 and 6

void criterion_4() {
    Timer timer;
    const ModelParams p = mm_params(0.5, 2);
    IntegrateOptions opts;
    opts.snapshot_stride = 500;  // snapshots every 0.5 time units
    criterion_4_traj = integrate(empty_state(p, 6), p, 50.0, 1e-3, opts);
    const FractionVector& last = criterion_4_traj.snapshots.back();
    double worst = std::fabs(last.s0[0] - 1.0);
    for (unsigned k = 1; k <= 5; ++k) {
        const double expect = std::pow(0.5, std::pow(2.0, k) - 1.0);
        worst = std::max(worst, std::fabs(last.level(k)[0] - expect));
    }
    const bool pass = worst <= 1e-6 && timer.seconds() < 10.0;
    report(4, "ODE convergence to the M/M fixed point", pass, timer.seconds(),
           "max deviation " + format_double(worst));
}

void criterion_5() {
    Timer timer;
    const ModelParams p = mm_params(0.5, 2);
    const FixedPoint fp = closed_form(p, 6);
    const double exceed = check_upper_bound(criterion_4_traj, fp);
    report(5, "fixed point upper-bounds the trajectory", exceed <= 1e-8, timer.seconds(),
           "max exceedance " + format_double(exceed));
}

void criterion_6() {
    Timer timer;
    const ModelParams p = mm_params(0.5, 2);
    const FixedPoint fp = closed_form(p, 6);
    const std::vector<double> unit(7, 1.0);
    bool decreasing = true;
    double prev = 0.0;
    bool have_prev = false;
    for (const auto& snap : criterion_4_traj.snapshots) {
        if (snap.t < 1.0) continue;
        const double phi = lyapunov_phi(snap, fp, unit);
        if (have_prev && phi >= prev) decreasing = false;
        prev = phi;
        have_prev = true;
    }
    double fitted = 0.0;
    bool fit_ok = true;
    try {
        fitted = decay_rate(criterion_4_traj, fp);
    } catch (const FitError&) {
        fit_ok = false;
    }
    const bool pass = decreasing && fit_ok && fitted > 0.0 && timer.seconds() < 1.0;
    report(6, "Lyapunov function decays exponentially", pass, timer.seconds(),
           "fitted decay rate " + format_double(fitted));
}

void criterion_7() {
    Timer timer;
    const ModelParams p1 = mm_params(0.5, 1);  // mu = 1, lambda = 0.5
    const double t1 = expected_sojourn(p1, 1e-14);
    const bool ok1 = std::fabs(t1 - 2.0) <= 1e-10;

    const ModelParams p2 = mm_params(0.5, 2);
    const double t2 = expected_sojourn(p2, 1e-14);
    double partial = 0.0;  // (1/mu) sum_{k<=6} rho^{2^{k+1}-2}
    for (unsigned k = 0; k <= 6; ++k) partial += std::pow(0.5, std::pow(2.0, k + 1) - 2.0);
    const bool ok2 = std::fabs(t2 - partial) <= 1e-10;

    const bool pass = ok1 && ok2 && timer.seconds() < 1.0;
    report(7, "expected sojourn time oracles", pass, timer.seconds(),
           "d=1: " + format_double(t1) + ", d=2: " + format_double(t2));
}

std::string run_criterion_8(const std::string& tag) {
    // d = 2 tails
    nlohmann::json j;
    j["experiment"] = "simulate";
    j["model"]["map"]["C"] = {{-0.5}};
    j["model"]["map"]["D"] = {{0.5}};
    j["model"]["ph"]["alpha"] = {1.0};
    j["model"]["ph"]["T"] = {{-1.0}};
    j["model"]["d"] = 2;
    j["n"] = 500;
    j["horizon"] = 1200.0;
    j["warmup"] = 200.0;
    j["reps"] = 10;
    j["seed"] = 424242;
    j["output_path"] = out_dir + "/sim_d2_" + tag + ".csv";
    run(parse_config(j.dump()));

    j["model"]["d"] = 1;
    j["output_path"] = out_dir + "/sim_d1_" + tag + ".csv";
    run(parse_config(j.dump()));
    return out_dir + "/sim_d2_" + tag + ".csv";
}

void criterion_8() {
    Timer timer;
    run_criterion_8("a");

    bool pass = true;
    std::string detail;
    const auto rows = parse_csv(slurp(out_dir + "/sim_d2_a.csv"));
    for (unsigned k = 1; k <= 3; ++k) {
        bool found = false;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            if (rows[r][0] == std::to_string(k)) {
                const double mean = std::stod(rows[r][1]);
                const double se = std::stod(rows[r][2]);
                const double expect = std::pow(0.5, std::pow(2.0, k) - 1.0);
                if (std::fabs(mean - expect) > 3.0 * se) {
                    pass = false;
                    detail += " k=" + std::to_string(k) + " off by " +
                              format_double(std::fabs(mean - expect)) + " (3se=" +
                              format_double(3.0 * se) + ")";
                }
                found = true;
            }
        }
        if (!found) pass = false;
    }

    const auto meta = nlohmann::json::parse(slurp(out_dir + "/sim_d1_a.csv.meta.json"));
    const double soj = meta.at("extra").at("sojourn_mean").get<double>();
    const double soj_se = meta.at("extra").at("sojourn_stderr").get<double>();
    if (std::fabs(soj - 2.0) > 3.0 * soj_se) {
        pass = false;
        detail += " sojourn off";
    }
    pass = pass && timer.seconds() < 120.0;
    report(8, "simulation matches theory at desk scale", pass, timer.seconds(),
           "d=1 sojourn " + format_double(soj) + " +- " + format_double(soj_se) + detail);
}

std::string run_criterion_9(const std::string& tag) {
    nlohmann::json j;
    j["experiment"] = "kurtz";
    j["model"] = paper_example_model(10.0, 2);
    j["n_list"] = {50, 100, 200, 400};
    j["t"] = 10.0;
    j["reps"] = 5;
    j["seed"] = 777;
    j["output_path"] = out_dir + "/kurtz_" + tag + ".csv";
    run(parse_config(j.dump()));
    return j["output_path"].get<std::string>();
}

void criterion_9() {
    Timer timer;
    const std::string path = run_criterion_9("a");
    const auto rows = parse_csv(slurp(path));
    bool pass = rows.size() == 5;
    std::string detail = "distances:";
    std::vector<double> means, ses;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        means.push_back(std::stod(rows[r][1]));
        ses.push_back(std::stod(rows[r][2]));
        detail += " " + rows[r][0] + ":" + format_double(means.back());
    }
    for (std::size_t i = 0; i + 1 < means.size(); ++i) {
        const double se_diff = std::sqrt(ses[i] * ses[i] + ses[i + 1] * ses[i + 1]);
        if (means[i + 1] > means[i] + se_diff) pass = false;
    }
    pass = pass && timer.seconds() < 300.0;
    report(9, "Kurtz trend: sup-distance nonincreasing in n", pass, timer.seconds(), detail);
}

void criterion_10() {
    Timer timer;
    ExperimentConfig cfg = paper_defaults("sojourn_curve");
    cfg.output_path = out_dir + "/curve.csv";
    run(cfg);
    const auto rows = parse_csv(slurp(out_dir + "/curve.csv"));
    bool pass = true;
    // strictly decreasing in d at fixed mu, and in mu at fixed d
    for (double mu : {5.0, 10.0, 20.0}) {
        double prev = 1e300;
        for (unsigned d = 1; d <= 5; ++d) {
            for (std::size_t r = 1; r < rows.size(); ++r) {
                if (rows[r][0] == std::to_string(d) && std::stod(rows[r][1]) == mu) {
                    if (rows[r][3] != "ok") pass = false;
                    const double v = std::stod(rows[r][2]);
                    if (v >= prev) pass = false;
                    prev = v;
                }
            }
        }
    }
    for (unsigned d = 1; d <= 5; ++d) {
        double prev = 1e300;
        for (double mu : {5.0, 10.0, 20.0}) {
            for (std::size_t r = 1; r < rows.size(); ++r) {
                if (rows[r][0] == std::to_string(d) && std::stod(rows[r][1]) == mu) {
                    const double v = std::stod(rows[r][2]);
                    if (v >= prev) pass = false;
                    prev = v;
                }
            }
        }
    }
    pass = pass && timer.seconds() < 5.0;
    report(10, "sojourn curve reproduction (decreasing in d and mu)", pass, timer.seconds(),
           std::to_string(rows.size() - 1) + " rows");
}

void criterion_11() {
    Timer timer;
    run_criterion_8("b");
    run_criterion_9("b");
    const bool same_d2 = slurp(out_dir + "/sim_d2_a.csv") == slurp(out_dir + "/sim_d2_b.csv");
    const bool same_d1 = slurp(out_dir + "/sim_d1_a.csv") == slurp(out_dir + "/sim_d1_b.csv");
    const bool same_kz = slurp(out_dir + "/kurtz_a.csv") == slurp(out_dir + "/kurtz_b.csv");
    const bool pass = same_d2 && same_d1 && same_kz;
    report(11, "reruns with identical seeds are byte-identical", pass, timer.seconds(),
           std::string(same_d2 ? "" : "sim_d2 differs ") + (same_d1 ? "" : "sim_d1 differs ") +
               (same_kz ? "" : "kurtz differs"));
}

}  // namespace

int main() {
    out_dir = "acceptance_out";
    std::filesystem::create_directories(out_dir);

    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();

    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
