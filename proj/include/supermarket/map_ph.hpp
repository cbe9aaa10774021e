#pragma once

#include <cmath>
#include <string>

#include "supermarket/linalg.hpp"

// Validated Markovian-arrival-process and phase-type model objects plus the
// derived scalars (rho, theta, omega, psi) consumed by the formulas.
// All types are immutable after construction and freely shareable.

namespace supermarket {

inline constexpr unsigned kMaxChoices = 32;

// MAP descriptor (C, D): C carries phase changes without arrivals, D phase
// changes that mark an arrival. C+D is an irreducible CTMC generator.
struct MapProcess {
    Matrix C;
    Matrix D;
    Vector gamma;        // stationary vector of C+D
    double lambda = 0.0; // stationary arrival rate, gamma D e
    std::size_t size() const { return C.rows; }
};

// PH representation (alpha, T) with exit vector T0 = -T e.
struct PhDistribution {
    Vector alpha;
    Matrix T;
    Vector T0;
    double mu = 0.0;            // service rate, 1 / (alpha (-T)^{-1} e)
    Vector tau;                 // stationary vector of T + T0 alpha
    double residual_mean = 0.0; // tau (-T)^{-1} e
    std::size_t size() const { return T.rows; }
};

struct ModelParams {
    MapProcess map;
    PhDistribution ph;
    unsigned d = 1;      // choice count
    double rho = 0.0;    // lambda / mu
    double theta = 0.0;  // 1 / sum of entrywise d-th roots of gamma
    double omega = 0.0;  // 1 / sum of entrywise d-th roots of alpha
    double psi = 0.0;    // sum of entrywise d-th powers of tau

    bool poisson() const { return map.size() == 1; }
    bool exponential_service() const { return ph.size() == 1; }
};

namespace detail {

inline void check_finite(const Matrix& m, const std::string& name) {
    for (double x : m.data)
        if (!std::isfinite(x)) throw ValidationError(name + ": non-finite entry");
}

inline void check_finite(const Vector& v, const std::string& name) {
    for (double x : v.data)
        if (!std::isfinite(x)) throw ValidationError(name + ": non-finite entry");
}

}  // namespace detail

inline MapProcess build_map(const Matrix& c, const Matrix& d) {
    if (!c.square() || !d.square() || c.rows != d.rows)
        throw StructuralError("build_map: C and D must be square with equal size");
    detail::check_finite(c, "C");
    detail::check_finite(d, "D");
    const std::size_t n = c.rows;
    const double scale = std::max({1.0, c.max_abs(), d.max_abs()});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (d(i, j) < 0.0)
                throw ValidationError("build_map: D has a negative entry at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
            if (i != j && c(i, j) < 0.0)
                throw ValidationError("build_map: C has a negative off-diagonal at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
        }
        if (c(i, i) >= 0.0)
            throw ValidationError("build_map: C diagonal must be negative at row " +
                                  std::to_string(i));
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += c(i, j) + d(i, j);
        if (std::fabs(row) > kStructuralTol * scale)
            throw ValidationError("build_map: (C+D) row " + std::to_string(i) +
                                  " does not sum to zero (" + std::to_string(row) + ")");
    }
    MapProcess m;
    m.C = c;
    m.D = d;
    m.gamma = stationary_vector(c + d);  // also enforces irreducibility
    m.lambda = dot(m.gamma * d, Vector::ones(n));
    if (m.lambda <= 0.0) throw ValidationError("build_map: arrival rate is zero");
    return m;
}

inline PhDistribution build_ph(const Vector& alpha, const Matrix& t) {
    if (!t.square() || alpha.size() != t.rows)
        throw StructuralError("build_ph: alpha and T shapes do not conform");
    detail::check_finite(alpha, "alpha");
    detail::check_finite(t, "T");
    const std::size_t n = t.rows;
    for (std::size_t i = 0; i < n; ++i)
        if (alpha[i] < 0.0)
            throw ValidationError("build_ph: alpha has a negative entry at " +
                                  std::to_string(i));
    if (std::fabs(alpha.sum() - 1.0) > kStructuralTol)
        throw ValidationError("build_ph: alpha does not sum to one");

    PhDistribution ph;
    ph.alpha = alpha;
    ph.T = t;
    const Matrix inv = neg_inverse(t);  // validates the sub-generator shape
    ph.T0 = Vector(n);
    bool exit_positive = false;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += t(i, j);
        ph.T0[i] = std::max(0.0, -s);
        if (ph.T0[i] > kStructuralTol) exit_positive = true;
    }
    if (!exit_positive)
        throw ValidationError("build_ph: exit vector T0 = -T e has no positive entry");

    const double mean = dot(ph.alpha * inv, Vector::ones(n));
    if (mean <= 0.0) throw NumericError("build_ph: nonpositive mean service time");
    ph.mu = 1.0 / mean;

    // T + T0 alpha is the phase process with instantaneous restarts; its
    // stationary vector gives the residual-time representation (tau, T).
    Matrix restart = t;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) restart(i, j) += ph.T0[i] * alpha[j];
    ph.tau = stationary_vector(restart);
    ph.residual_mean = dot(ph.tau * inv, Vector::ones(n));
    return ph;
}

inline ModelParams build_params(const MapProcess& map, const PhDistribution& ph, unsigned d) {
    if (d < 1) throw ValidationError("build_params: d must be >= 1");
    if (d > kMaxChoices)
        throw ValidationError("build_params: d exceeds the supported cap of " +
                              std::to_string(kMaxChoices));
    ModelParams p;
    p.map = map;
    p.ph = ph;
    p.d = d;
    p.rho = map.lambda / ph.mu;
    if (p.rho >= 1.0)
        throw StabilityError("build_params: rho = lambda/mu = " + std::to_string(p.rho) +
                             " >= 1, the model is unstable");
    if (d == 1) {
        // analytic limit: roots and powers are identities and the phase
        // vectors sum to one exactly
        p.theta = p.omega = p.psi = 1.0;
    } else {
        p.theta = 1.0 / hadamard_root(map.gamma, d).sum();
        p.omega = 1.0 / hadamard_root(ph.alpha, d).sum();
        p.psi = hadamard_power(ph.tau, d).sum();
    }
    return p;
}

// Convenience builders for the standard reductions used all over the tests.
inline MapProcess poisson_map(double lambda) {
    return build_map(Matrix{{-lambda}}, Matrix{{lambda}});
}

inline PhDistribution exponential_ph(double mu) {
    return build_ph(Vector{1.0}, Matrix{{-mu}});
}

// m-phase Erlang with per-stage rate eta (service rate eta/m).
inline PhDistribution erlang_ph(std::size_t m, double eta) {
    if (m < 1) throw ValidationError("erlang_ph: order must be >= 1");
    Matrix t(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        t(i, i) = -eta;
        if (i + 1 < m) t(i, i + 1) = eta;
    }
    Vector alpha(m);
    alpha[0] = 1.0;
    return build_ph(alpha, t);
}

}  // namespace supermarket
