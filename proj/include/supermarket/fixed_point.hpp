#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "supermarket/map_ph.hpp"

// Closed-form fixed points of the mean-field queue-fraction equations, the
// arrival/service decomposition, residual verification against the nonlinear
// system, and the expected-sojourn-time series.

namespace supermarket {

enum class FixedPointVariant {
    GeneralClosedForm,
    PoissonPhFirst,
    PoissonPhSecond,
    MmReduction,
};

inline const char* to_string(FixedPointVariant v) {
    switch (v) {
        case FixedPointVariant::GeneralClosedForm: return "general_closed_form";
        case FixedPointVariant::PoissonPhFirst: return "poisson_ph_first";
        case FixedPointVariant::PoissonPhSecond: return "poisson_ph_second";
        case FixedPointVariant::MmReduction: return "mm_reduction";
    }
    return "unknown";
}

// Truncated fixed point pi = (pi0, pi1, ..., piK). Level sums are also kept
// in log form: the doubly exponential decay underflows double well before the
// truncation cap, and the decay-rate diagnostics need the tail.
struct FixedPoint {
    FixedPointVariant variant = FixedPointVariant::GeneralClosedForm;
    Vector pi0;
    std::vector<Vector> levels;          // levels[k-1] holds pi_k
    unsigned K = 0;
    double tail_bound = 0.0;             // pi_K e
    std::vector<double> log_level_sums;  // ln(pi_k e), k = 1..K

    const Vector& level(unsigned k) const {
        if (k < 1 || k > levels.size())
            throw StructuralError("FixedPoint::level: index out of range");
        return levels[k - 1];
    }
    double level_sum(unsigned k) const { return k == 0 ? pi0.sum() : level(k).sum(); }
    double log_level_sum(unsigned k) const {
        if (k < 1 || k > log_level_sums.size())
            throw StructuralError("FixedPoint::log_level_sum: index out of range");
        return log_level_sums[k - 1];
    }
};

namespace detail {

// d^k in floating point, saturating to +inf on overflow.
inline double power_dk(unsigned d, unsigned k) {
    double p = 1.0;
    for (unsigned i = 0; i < k; ++i) {
        p *= static_cast<double>(d);
        if (p > 1e300) return std::numeric_limits<double>::infinity();
    }
    return p;
}

// (d^k - 1)/(d - 1), with the d = 1 limit k.
inline double geometric_exponent(unsigned d, unsigned k) {
    if (d == 1) return static_cast<double>(k);
    const double p = power_dk(d, k);
    if (!std::isfinite(p)) return p;
    return (p - 1.0) / static_cast<double>(d - 1);
}

// a * b treating 0 * inf as 0 (exponent of a base equal to one).
inline double log_weighted(double log_base, double exponent) {
    if (log_base == 0.0) return 0.0;
    return log_base * exponent;
}

}  // namespace detail

// ln of the level-k scalar coefficient of the general closed form:
// r(k) = theta^{d^k} (theta omega rho)^{(d^k-1)/(d-1)}.
inline double closed_form_log_coefficient(const ModelParams& p, unsigned k) {
    const double log_theta = std::log(p.theta);
    const double log_tor = std::log(p.theta * p.omega * p.rho);
    return detail::log_weighted(log_theta, detail::power_dk(p.d, k)) +
           detail::log_weighted(log_tor, detail::geometric_exponent(p.d, k));
}

// Smallest truncation level with pi_K e < 1e-14 under the closed form,
// capped at 64 (and at least 2 so the level-k equations are exercised).
inline unsigned default_truncation_level(const ModelParams& p, double threshold = 1e-14,
                                         unsigned cap = 64) {
    const double log_base_sum = -std::log(p.theta * p.omega);  // (gamma root e)(alpha root e)
    const double log_thr = std::log(threshold);
    for (unsigned k = 1; k <= cap; ++k) {
        if (closed_form_log_coefficient(p, k) + log_base_sum < log_thr)
            return std::max(2u, k);
    }
    return cap;
}

// General closed form: pi0 = theta gamma^{1/d},
// pi_k = theta^{d^k} (theta omega rho)^{(d^k-1)/(d-1)} gamma^{1/d} x alpha^{1/d}.
inline FixedPoint closed_form(const ModelParams& p, unsigned K) {
    if (K < 1) throw ValidationError("closed_form: K must be >= 1");
    FixedPoint fp;
    fp.variant = (p.poisson() && p.exponential_service()) ? FixedPointVariant::MmReduction
                                                          : FixedPointVariant::GeneralClosedForm;
    fp.K = K;
    const Vector gamma_root = hadamard_root(p.map.gamma, p.d);
    const Vector alpha_root = hadamard_root(p.ph.alpha, p.d);
    fp.pi0 = p.theta * gamma_root;
    const Vector base = kron(gamma_root, alpha_root);
    const double log_base_sum = -std::log(p.theta * p.omega);
    fp.levels.reserve(K);
    fp.log_level_sums.reserve(K);
    for (unsigned k = 1; k <= K; ++k) {
        const double log_r = closed_form_log_coefficient(p, k);
        fp.levels.push_back(std::exp(log_r) * base);
        fp.log_level_sums.push_back(log_r + log_base_sum);
    }
    fp.tail_bound = fp.levels.back().sum();
    return fp;
}

// Arrival/service factorization of the closed form:
// pi_k = {theta^{(d^{k+1}-1)/(d-1)} lambda^{(d^k-1)/(d-1)} gamma^{1/d}}
//      x {(omega/mu)^{(d^k-1)/(d-1)} alpha^{1/d}}.
// The separate factors overflow/underflow for large k when lambda > 1; they
// are meant for the first handful of levels.
struct Decomposition {
    Vector arrival_factor;
    Vector service_factor;
};

inline Decomposition decomposition(const ModelParams& p, unsigned k) {
    const double ek = detail::geometric_exponent(p.d, k);
    const double ek1 = detail::geometric_exponent(p.d, k + 1);
    Decomposition out;
    out.arrival_factor = (std::pow(p.theta, ek1) * std::pow(p.map.lambda, ek)) *
                         hadamard_root(p.map.gamma, p.d);
    out.service_factor = std::pow(p.omega / p.ph.mu, ek) * hadamard_root(p.ph.alpha, p.d);
    return out;
}

// First construction for Poisson arrivals: pi_k = (omega rho)^{(d^k-1)/(d-1)} alpha^{1/d}.
inline FixedPoint poisson_ph_first(const ModelParams& p, unsigned K) {
    if (!p.poisson())
        throw ValidationError("poisson_ph_first: requires Poisson arrivals (m_A = 1)");
    if (K < 1) throw ValidationError("poisson_ph_first: K must be >= 1");
    FixedPoint fp;
    fp.variant = FixedPointVariant::PoissonPhFirst;
    fp.K = K;
    fp.pi0 = Vector{1.0};
    const Vector alpha_root = hadamard_root(p.ph.alpha, p.d);
    const double log_or = std::log(p.omega * p.rho);
    const double log_base_sum = -std::log(p.omega);
    for (unsigned k = 1; k <= K; ++k) {
        const double log_r = detail::log_weighted(log_or, detail::geometric_exponent(p.d, k));
        fp.levels.push_back(std::exp(log_r) * alpha_root);
        fp.log_level_sums.push_back(log_r + log_base_sum);
    }
    fp.tail_bound = fp.levels.back().sum();
    return fp;
}

// Second construction for Poisson arrivals:
// pi_k = psi^{(d^{k-1}-1)/(d-1)} rho^{(d^k-1)/(d-1)} tau.
inline FixedPoint poisson_ph_second(const ModelParams& p, unsigned K) {
    if (!p.poisson())
        throw ValidationError("poisson_ph_second: requires Poisson arrivals (m_A = 1)");
    if (K < 1) throw ValidationError("poisson_ph_second: K must be >= 1");
    FixedPoint fp;
    fp.variant = FixedPointVariant::PoissonPhSecond;
    fp.K = K;
    fp.pi0 = Vector{1.0};
    const double log_psi = std::log(p.psi);
    const double log_rho = std::log(p.rho);
    for (unsigned k = 1; k <= K; ++k) {
        const double log_r =
            detail::log_weighted(log_psi, detail::geometric_exponent(p.d, k - 1)) +
            detail::log_weighted(log_rho, detail::geometric_exponent(p.d, k));
        fp.levels.push_back(std::exp(log_r) * p.ph.tau);
        fp.log_level_sums.push_back(log_r);  // tau e = 1
    }
    fp.tail_bound = fp.levels.back().sum();
    return fp;
}

// Residuals of a candidate fixed point against the nonlinear system. Direct
// entrywise residuals are the ground truth; the e-projected (scalar flow
// balance) and transformed-system values are reported alongside because the
// constructions above satisfy different subsets of them.
struct ResidualReport {
    double eq7 = 0.0;                  // |pi0 e - 1|
    double eq8 = 0.0;                  // level-0 balance, max-abs
    double eq9 = 0.0;                  // level-1 balance, max-abs
    std::vector<double> eq10;          // level-k balance, k = 2..K
    double eq10_max = 0.0;
    double eq8_projected = 0.0;        // |(level-0 balance) e|
    double eq9_projected = 0.0;
    std::vector<double> eq10_projected;
    double eq10_projected_max = 0.0;
    double eq13 = 0.0;                 // transformed level-1, max-abs
    std::vector<double> eq14;          // transformed level-k, k = 2..K
    double eq14_max = 0.0;
    double w_annihilation = 0.0;       // ||(gamma x alpha) W||
    double r_annihilation = 0.0;       // ||(gamma x alpha) R||
    double pi0_annihilation = 0.0;     // ||pi0^{od} (C+D)||
};

inline ResidualReport residuals(const FixedPoint& fp, const ModelParams& p, unsigned K) {
    if (fp.levels.size() < K + 1)
        throw StructuralError(
            "residuals: need levels to depth K+1; construct the fixed point with K+1 levels");
    const std::size_t ma = p.map.size();
    const std::size_t mb = p.ph.size();
    if (fp.pi0.size() != ma || fp.levels[0].size() != ma * mb)
        throw StructuralError("residuals: fixed point dimensions do not match the model");

    const Matrix ia = Matrix::identity(ma);
    const Matrix t0_col = Matrix::from_col(p.ph.T0);
    const Matrix alpha_row = Matrix::from_row(p.ph.alpha);
    const Matrix i_t0 = kron(ia, t0_col);                    // (ma mb) x ma
    const Matrix d_alpha = kron(p.map.D, alpha_row);         // ma x (ma mb)
    const Matrix c_i = kron(p.map.C, Matrix::identity(mb));  // (ma mb) x (ma mb)
    const Matrix i_t = kron(ia, p.ph.T);
    const Matrix i_t0a = kron(ia, t0_col * alpha_row);
    const Matrix d_i = kron(p.map.D, Matrix::identity(mb));

    ResidualReport rep;
    const Vector pi0_pow = hadamard_power(fp.pi0, p.d);
    rep.eq7 = std::fabs(fp.pi0.sum() - 1.0);

    const Vector eq8_vec = pi0_pow * p.map.C + fp.level(1) * i_t0;
    rep.eq8 = eq8_vec.max_abs();
    rep.eq8_projected = std::fabs(eq8_vec.sum());

    const Vector eq9_vec = pi0_pow * d_alpha + hadamard_power(fp.level(1), p.d) * c_i +
                           fp.level(1) * i_t + fp.level(2) * i_t0a;
    rep.eq9 = eq9_vec.max_abs();
    rep.eq9_projected = std::fabs(eq9_vec.sum());

    for (unsigned k = 2; k <= K; ++k) {
        const Vector v = hadamard_power(fp.level(k - 1), p.d) * d_i +
                         hadamard_power(fp.level(k), p.d) * c_i + fp.level(k) * i_t +
                         fp.level(k + 1) * i_t0a;
        rep.eq10.push_back(v.max_abs());
        rep.eq10_projected.push_back(std::fabs(v.sum()));
        rep.eq10_max = std::max(rep.eq10_max, rep.eq10.back());
        rep.eq10_projected_max = std::max(rep.eq10_projected_max, rep.eq10_projected.back());
    }

    // Transformed system pieces: V, W, R and the annihilation identities.
    const Matrix neg_t_inv = neg_inverse(p.ph.T);
    const Matrix e_alpha_inv =
        (Matrix::from_col(Vector::ones(mb)) * alpha_row) * neg_t_inv;
    const Matrix v_mat = kron(p.map.D, neg_t_inv);
    const Matrix w_mat = kron(p.map.C + p.map.D, e_alpha_inv);
    const Matrix r_mat = kron(p.map.C, neg_t_inv) + kron(p.map.D, e_alpha_inv);

    const Vector ga = kron(p.map.gamma, p.ph.alpha);
    rep.w_annihilation = (ga * w_mat).max_abs();
    rep.r_annihilation = (ga * r_mat).max_abs();
    rep.pi0_annihilation = (pi0_pow * (p.map.C + p.map.D)).max_abs();

    // Suffix sums of pi_j^{od} W over the available levels.
    const std::size_t levels_avail = fp.levels.size();
    std::vector<Vector> w_suffix(levels_avail + 2, Vector(ma * mb));
    for (std::size_t j = levels_avail; j >= 1; --j)
        w_suffix[j] = hadamard_power(fp.levels[j - 1], p.d) * w_mat + w_suffix[j + 1];

    const Vector eq13_vec = fp.level(1) - (kron(pi0_pow * p.map.D, p.ph.alpha * neg_t_inv) +
                                           hadamard_power(fp.level(1), p.d) * r_mat +
                                           w_suffix[2]);
    rep.eq13 = eq13_vec.max_abs();
    for (unsigned k = 2; k <= K; ++k) {
        const Vector v = fp.level(k) - (hadamard_power(fp.level(k - 1), p.d) * v_mat +
                                        hadamard_power(fp.level(k), p.d) * r_mat +
                                        w_suffix[k + 1]);
        rep.eq14.push_back(v.max_abs());
        rep.eq14_max = std::max(rep.eq14_max, rep.eq14.back());
    }
    return rep;
}

// Expected sojourn time of an arriving customer:
// E[T_d] = theta^{d^2}(theta omega rho)^d (tau - alpha)(-T)^{-1} e
//        + (1/mu) sum_{k>=0} theta^{d^{k+1}} (theta omega rho)^{d (d^k-1)/(d-1)}.
inline double expected_sojourn(const ModelParams& p, double tol) {
    if (tol <= 0.0) throw DomainError("expected_sojourn: tol must be positive");
    const Matrix neg_t_inv = neg_inverse(p.ph.T);
    const Vector diff = p.ph.tau - p.ph.alpha;
    const double residual_term = std::pow(p.theta, static_cast<double>(p.d) * p.d) *
                                 std::pow(p.theta * p.omega * p.rho, p.d) *
                                 (diff * neg_t_inv).sum();

    const double log_theta = std::log(p.theta);
    const double log_tor = std::log(p.theta * p.omega * p.rho);
    double series = 0.0;
    constexpr unsigned kMaxTerms = 100000;
    for (unsigned k = 0; k < kMaxTerms; ++k) {
        const double log_term =
            detail::log_weighted(log_theta, detail::power_dk(p.d, k + 1)) +
            detail::log_weighted(log_tor, p.d * detail::geometric_exponent(p.d, k));
        const double term = std::exp(log_term);
        series += term;
        if (term < tol) break;
    }
    return residual_term + series / p.ph.mu;
}

// Per-level comparison of the two Poisson-PH constructions on an Erlang
// service model. first/second sums underflow at deep levels; the log fields
// stay exact, and the ratio is formed from them.
struct ErlangCompareRow {
    unsigned k = 0;
    double first_sum = 0.0;
    double second_sum = 0.0;
    double ratio = 0.0;
    double log_first = 0.0;
    double log_second = 0.0;
};

inline std::vector<ErlangCompareRow> erlang_compare(std::size_t m, unsigned d, double lambda,
                                                    double eta, unsigned K) {
    const ModelParams p = build_params(poisson_map(lambda), erlang_ph(m, eta), d);
    const FixedPoint first = poisson_ph_first(p, K);
    const FixedPoint second = poisson_ph_second(p, K);
    std::vector<ErlangCompareRow> rows;
    rows.reserve(K);
    const double log_m = std::log(static_cast<double>(m));
    for (unsigned k = 1; k <= K; ++k) {
        ErlangCompareRow row;
        row.k = k;
        row.first_sum = first.level_sum(k);
        row.second_sum = second.level_sum(k);
        row.log_first = first.log_level_sum(k);
        row.log_second = second.log_level_sum(k);
        row.ratio = std::exp(row.log_first - row.log_second);
        const double expected_log = (detail::power_dk(d, k - 1) - 1.0) * log_m;
        const double got_log = row.log_first - row.log_second;
        const double scale = std::max(1.0, std::fabs(expected_log));
        if (std::fabs(got_log - expected_log) > 1e-10 * scale)
            throw NumericError("erlang_compare: level-sum ratio deviates from m^(d^(k-1)-1) at k=" +
                               std::to_string(k));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace supermarket
