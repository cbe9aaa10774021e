#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "supermarket/experiments.hpp"

using namespace supermarket;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
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

std::string tmp_path(const std::string& name) {
    return std::string("/tmp/supermarket_test_") + name;
}

const char* kMmConfig = R"({
  "experiment": "fixed_point",
  "model": {
    "map": {"C": [[-0.5]], "D": [[0.5]]},
    "ph": {"alpha": [1.0], "T": [[-1.0]]},
    "d": 2
  },
  "K": 6,
  "output_path": "OUT"
})";

std::string with_output(std::string text, const std::string& out) {
    const auto pos = text.find("OUT");
    REQUIRE(pos != std::string::npos);
    return text.replace(pos, 3, out);
}

}  // namespace

TEST_CASE("model schema parses and validates") {
    nlohmann::json j;
    j["map"]["C"] = {{-10.0, 7.0}, {4.0, -9.0}};
    j["map"]["D"] = {{1.0, 2.0}, {3.0, 2.0}};
    j["ph"]["alpha"] = {1.0};
    j["ph"]["T"] = {{-10.0}};
    j["d"] = 2;
    const ModelParams p = model_from_json(j);
    CHECK(p.map.size() == 2);
    CHECK(std::fabs(p.map.lambda - 4.125) < 1e-12);
    CHECK(p.d == 2);

    // round trip through model_to_json
    const ModelParams q = model_from_json(model_to_json(p));
    CHECK(q.map.lambda == p.map.lambda);
    CHECK(q.ph.mu == p.ph.mu);

    nlohmann::json bad = j;
    bad.erase("d");
    CHECK_THROWS_AS(model_from_json(bad), ConfigError);
    bad = j;
    bad["map"]["D"] = {{1.0, -2.0}, {3.0, 2.0}};
    CHECK_THROWS_AS(model_from_json(bad), ValidationError);
}

TEST_CASE("config parsing rejects malformed input") {
    CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "nope"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "ode"})"), ConfigError);  // model missing
    CHECK_THROWS_AS(parse_config(R"({"experiment": "kurtz", "model": {
        "map": {"C": [[-1.0]], "D": [[1.0]]},
        "ph": {"alpha": [1.0], "T": [[-2.0]]}, "d": 2}})"),
                    ConfigError);  // n_list missing

    nlohmann::json curve;
    curve["experiment"] = "sojourn_curve";
    curve["model"] = paper_example_model();
    curve["d_range"] = nlohmann::json::array();
    curve["mu_list"] = {5.0};
    CHECK_THROWS_AS(parse_config(curve.dump()), ConfigError);  // empty d_range
}

TEST_CASE("exit codes distinguish error classes") {
    CHECK(exit_code_for(ConfigError("x")) == 2);
    CHECK(exit_code_for(ValidationError("x")) == 2);
    CHECK(exit_code_for(StructuralError("x")) == 2);
    CHECK(exit_code_for(DomainError("x")) == 2);
    CHECK(exit_code_for(StabilityError("x")) == 3);
    CHECK(exit_code_for(NumericError("x")) == 4);
    CHECK(exit_code_for(std::runtime_error("x")) == 4);
}

TEST_CASE("fixed_point experiment writes the M/M table") {
    const std::string out = tmp_path("fp.csv");
    const ExperimentConfig cfg = parse_config(with_output(kMmConfig, out));
    run(cfg);
    const auto rows = parse_csv(slurp(out));
    REQUIRE(rows.size() == 8);  // header + k=0..6
    CHECK(rows[0][0] == "k");
    CHECK(rows[0][1] == "pi_sum");
    CHECK(rows[0][2] == "variant");
    CHECK(rows[1][2] == "mm_reduction");
    for (unsigned k = 1; k <= 6; ++k) {
        const double got = std::stod(rows[k + 1][1]);
        const double expect = std::pow(0.5, std::pow(2.0, k) - 1.0);
        CHECK(std::fabs(got - expect) <= 1e-12 * expect);
    }
    // sidecar carries the bit-exact config echo
    const std::string meta = slurp(out + ".meta.json");
    const auto j = nlohmann::json::parse(meta);
    CHECK(j.at("config_text").get<std::string>() == with_output(kMmConfig, out));
    CHECK(j.at("library_version").get<std::string>() == kLibraryVersion);

    // reruns are byte-identical
    const std::string first = slurp(out);
    run(cfg);
    CHECK(slurp(out) == first);
}

TEST_CASE("erlang experiment reproduces the ratio column") {
    const std::string out = tmp_path("erlang.csv");
    nlohmann::json j;
    j["experiment"] = "erlang";
    j["m"] = 2;
    j["erlang_d"] = 2;
    j["lambda"] = 1.0;
    j["eta"] = 4.0;
    j["K"] = 5;
    j["output_path"] = out;
    run(parse_config(j.dump()));
    const auto rows = parse_csv(slurp(out));
    REQUIRE(rows.size() == 6);
    for (unsigned k = 1; k <= 5; ++k) {
        const double ratio = std::stod(rows[k][3]);
        const double expect = std::pow(2.0, std::pow(2.0, k - 1) - 1.0);
        CHECK(std::fabs(ratio - expect) <= 1e-9 * expect);
    }
}

TEST_CASE("sojourn curve flags unstable pairs instead of dropping them") {
    const std::string out = tmp_path("curve.csv");
    nlohmann::json j;
    j["experiment"] = "sojourn_curve";
    j["model"] = paper_example_model();
    j["d_range"] = {1, 2};
    j["mu_list"] = {4.0, 20.0};  // lambda = 4.125: mu = 4 is unstable
    j["output_path"] = out;
    run(parse_config(j.dump()));
    const auto rows = parse_csv(slurp(out));
    REQUIRE(rows.size() == 5);
    int unstable = 0, ok = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r][3] == "unstable") ++unstable;
        if (rows[r][3] == "ok") ++ok;
    }
    CHECK(unstable == 2);
    CHECK(ok == 2);
    // the d=1, mu=20 row is the M/M/1 value 1/(20 - 4.125)
    bool found = false;
    for (std::size_t r = 1; r < rows.size(); ++r)
        if (rows[r][0] == "1" && rows[r][1] == "20") {
            CHECK(std::fabs(std::stod(rows[r][2]) - 0.062992125984251968504) < 1e-12);
            found = true;
        }
    CHECK(found);
}

TEST_CASE("paper defaults cover each experiment") {
    for (const char* name :
         {"fixed_point", "ode", "simulate", "sojourn_curve", "erlang", "kurtz"}) {
        const ExperimentConfig cfg = paper_defaults(name);
        CHECK(cfg.output_path == "out.csv");
    }
    const ExperimentConfig curve = paper_defaults("sojourn_curve");
    CHECK(curve.d_range.size() == 5);
    CHECK(curve.mu_list.size() == 3);
    CHECK(std::fabs(curve.model.map.lambda - 4.125) < 1e-12);
    const ExperimentConfig kz = paper_defaults("kurtz");
    CHECK(kz.n_list == std::vector<std::size_t>{50, 100, 200, 400});
    CHECK(kz.reps == 5);
}

TEST_CASE("simulate experiment is deterministic at the byte level") {
    const std::string out = tmp_path("sim.csv");
    nlohmann::json j;
    j["experiment"] = "simulate";
    j["model"] = paper_example_model();
    j["n"] = 30;
    j["horizon"] = 40.0;
    j["warmup"] = 10.0;
    j["reps"] = 3;
    j["seed"] = 12345;
    j["output_path"] = out;
    const ExperimentConfig cfg = parse_config(j.dump());
    run(cfg);
    const std::string first = slurp(out);
    const std::string first_meta = slurp(out + ".meta.json");
    run(cfg);
    CHECK(slurp(out) == first);
    CHECK(slurp(out + ".meta.json") == first_meta);
    const auto rows = parse_csv(first);
    REQUIRE(rows.size() >= 2);
    CHECK(rows[0][0] == "k");
}

TEST_CASE("ode experiment emits the trajectory dump") {
    const std::string out = tmp_path("ode.csv");
    nlohmann::json j;
    j["experiment"] = "ode";
    j["model"] = paper_example_model();
    j["t_end"] = 1.0;
    j["step"] = 1e-3;
    j["snapshot_stride"] = 200;
    j["output_path"] = out;
    run(parse_config(j.dump()));
    const auto rows = parse_csv(slurp(out));
    CHECK(rows[0] == std::vector<std::string>{"t", "k", "block_index", "value", "drift"});
    REQUIRE(rows.size() > 10);
    // every value within [0,1], drift column finite
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const double v = std::stod(rows[r][3]);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("shipped configs stay parseable") {
    const std::string dir = std::string(SUPERMARKET_SOURCE_DIR) + "/configs/";
    for (const char* name :
         {"fixed_point_mm.json", "ode_modulated.json", "simulate_mm_d2.json",
          "kurtz_modulated.json", "erlang_compare.json", "sojourn_curve.json"}) {
        const ExperimentConfig cfg = parse_config(slurp(dir + name));
        CHECK(!cfg.output_path.empty());
    }
}

TEST_CASE("unwritable output path raises a config error") {
    nlohmann::json j;
    j["experiment"] = "fixed_point";
    j["model"] = paper_example_model();
    j["output_path"] = "/nonexistent_dir/x.csv";
    CHECK_THROWS_AS(run(parse_config(j.dump())), ConfigError);
}
