#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "supermarket/map_ph.hpp"

namespace supermarket {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Deterministic double formatting: shortest round-trip is locale-dependent,
// %.17g is not.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::string header) { buf_ = std::move(header) + "\n"; }

    void add_field(const std::string& s) {
        if (!line_.empty()) line_ += ',';
        line_ += s;
    }
    void add_field(double x) { add_field(format_double(x)); }
    void add_field(std::size_t x) { add_field(std::to_string(x)); }
    void add_field(unsigned x) { add_field(std::to_string(x)); }
    void end_row() {
        buf_ += line_ + "\n";
        line_.clear();
    }

    const std::string& str() const { return buf_; }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError("cannot open output path: " + path);
        out << buf_;
        if (!out) throw ConfigError("failed writing output: " + path);
    }

private:
    std::string buf_;
    std::string line_;
};

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ConfigError(name + ": expected an array of arrays");
    Matrix m(j.size(), j[0].size());
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (!j[r].is_array() || j[r].size() != m.cols)
            throw ConfigError(name + ": ragged rows");
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (!j[r][c].is_number()) throw ConfigError(name + ": non-numeric entry");
            m(r, c) = j[r][c].get<double>();
        }
    }
    return m;
}

inline Vector vector_from_json(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array() || j.empty()) throw ConfigError(name + ": expected a nonempty array");
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(name + ": non-numeric entry");
        v[i] = j[i].get<double>();
    }
    return v;
}

// Model schema: {"map": {"C": [[..]], "D": [[..]]}, "ph": {"alpha": [..], "T": [[..]]}, "d": k}
inline ModelParams model_from_json(const nlohmann::json& j) {
    if (!j.contains("map") || !j.contains("ph") || !j.contains("d"))
        throw ConfigError("model: requires 'map', 'ph' and 'd'");
    const auto& jm = j.at("map");
    const auto& jp = j.at("ph");
    if (!jm.contains("C") || !jm.contains("D"))
        throw ConfigError("model.map: requires 'C' and 'D'");
    if (!jp.contains("alpha") || !jp.contains("T"))
        throw ConfigError("model.ph: requires 'alpha' and 'T'");
    if (!j.at("d").is_number_integer() || j.at("d").get<long long>() < 1)
        throw ConfigError("model.d: must be a positive integer");
    const MapProcess map = build_map(matrix_from_json(jm.at("C"), "model.map.C"),
                                     matrix_from_json(jm.at("D"), "model.map.D"));
    const PhDistribution ph = build_ph(vector_from_json(jp.at("alpha"), "model.ph.alpha"),
                                       matrix_from_json(jp.at("T"), "model.ph.T"));
    return build_params(map, ph, j.at("d").get<unsigned>());
}

inline nlohmann::json model_to_json(const ModelParams& p) {
    nlohmann::json jm;
    auto mat = [](const Matrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < m.rows; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    jm["map"]["C"] = mat(p.map.C);
    jm["map"]["D"] = mat(p.map.D);
    jm["ph"]["alpha"] = p.ph.alpha.data;
    jm["ph"]["T"] = mat(p.ph.T);
    jm["d"] = p.d;
    return jm;
}

}  // namespace supermarket
