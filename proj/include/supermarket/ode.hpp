#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "supermarket/fixed_point.hpp"

// Mean-field dynamics: the truncated differential system for the fraction
// vector S(t) = (S_0, S_1, ..., S_K), fixed-step RK4 integration, and the
// convergence diagnostics (upper bound, Lyapunov function, weight sequence,
// decay-rate fit).

namespace supermarket {

struct FractionVector {
    Vector s0;                  // length m_A
    std::vector<Vector> levels; // S_1..S_K, each of length m_A * m_B
    double t = 0.0;

    unsigned K() const { return static_cast<unsigned>(levels.size()); }
    const Vector& level(unsigned k) const {
        if (k < 1 || k > levels.size())
            throw StructuralError("FractionVector::level: index out of range");
        return levels[k - 1];
    }
    double drift() const { return std::fabs(s0.sum() - 1.0); }
};

struct Trajectory {
    std::vector<FractionVector> snapshots;  // strictly increasing times
    double step = 0.0;
    std::vector<double> drift_log;          // |S0 e - 1| per snapshot
};

// All-empty system: S_0 = gamma (stationary phase law), S_k = 0.
inline FractionVector empty_state(const ModelParams& p, unsigned K) {
    FractionVector s;
    s.s0 = p.map.gamma;
    s.levels.assign(K, Vector(p.map.size() * p.ph.size()));
    return s;
}

// Embed a fixed point as a fraction vector (depth = min(K, fp.K)).
inline FractionVector from_fixed_point(const FixedPoint& fp, unsigned K) {
    if (K > fp.K) throw StructuralError("from_fixed_point: requested depth beyond fp.K");
    FractionVector s;
    s.s0 = fp.pi0;
    s.levels.assign(fp.levels.begin(), fp.levels.begin() + K);
    return s;
}

namespace detail {

inline double int_pow(double x, unsigned d) {
    double r = 1.0;
    for (unsigned i = 0; i < d; ++i) r *= x;
    return r;
}

// Precomputed operator blocks of the vector field.
struct OdeOperators {
    std::size_t ma, mb, mab;
    unsigned d;
    Matrix C;       // m_A x m_A
    Vector T0;      // length m_B
    Matrix d_alpha; // m_A  x m_A m_B
    Matrix c_i;     // m_A m_B square
    Matrix i_t;
    Matrix i_t0a;
    Matrix d_i;

    explicit OdeOperators(const ModelParams& p)
        : ma(p.map.size()),
          mb(p.ph.size()),
          mab(ma * mb),
          d(p.d),
          C(p.map.C),
          T0(p.ph.T0),
          d_alpha(kron(p.map.D, Matrix::from_row(p.ph.alpha))),
          c_i(kron(p.map.C, Matrix::identity(mb))),
          i_t(kron(Matrix::identity(ma), p.ph.T)),
          i_t0a(kron(Matrix::identity(ma),
                     Matrix::from_col(p.ph.T0) * Matrix::from_row(p.ph.alpha))),
          d_i(kron(p.map.D, Matrix::identity(mb))) {}

    // out += v * M (row vector times matrix)
    static void accumulate(const Vector& v, const Matrix& m, Vector& out) {
        for (std::size_t i = 0; i < m.rows; ++i) {
            const double vi = v[i];
            if (vi == 0.0) continue;
            for (std::size_t j = 0; j < m.cols; ++j) out[j] += vi * m(i, j);
        }
    }

    Vector pow_d(const Vector& v) const {
        Vector r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) r[i] = int_pow(v[i], d);
        return r;
    }

    // Literal field; hold_level0 pins dS_0 = 0 (used when m_A = 1, where the
    // normalization constraint S_0 e = 1 determines S_0 outright).
    FractionVector field(const FractionVector& s, bool hold_level0) const {
        const unsigned K = s.K();
        FractionVector ds;
        ds.s0 = Vector(ma);
        ds.levels.assign(K, Vector(mab));

        const Vector s0_pow = pow_d(s.s0);
        if (!hold_level0) {
            accumulate(s0_pow, C, ds.s0);
            // S_1 (I x T0): entry i sums T0 against the i-th service block.
            for (std::size_t i = 0; i < ma; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < mb; ++j) acc += s.level(1)[i * mb + j] * T0[j];
                ds.s0[i] += acc;
            }
        }

        accumulate(s0_pow, d_alpha, ds.levels[0]);
        for (unsigned k = 1; k <= K; ++k) {
            Vector& out = ds.levels[k - 1];
            if (k >= 2) accumulate(pow_d(s.level(k - 1)), d_i, out);
            accumulate(pow_d(s.level(k)), c_i, out);
            accumulate(s.level(k), i_t, out);
            if (k + 1 <= K) accumulate(s.level(k + 1), i_t0a, out);  // closure: S_{K+1} = 0
        }
        return ds;
    }
};

inline std::vector<double> pack(const FractionVector& s) {
    std::vector<double> y;
    y.reserve(s.s0.size() + s.K() * (s.levels.empty() ? 0 : s.levels[0].size()));
    y.insert(y.end(), s.s0.data.begin(), s.s0.data.end());
    for (const auto& lvl : s.levels) y.insert(y.end(), lvl.data.begin(), lvl.data.end());
    return y;
}

inline void unpack(const std::vector<double>& y, FractionVector& s) {
    std::size_t pos = 0;
    for (double& x : s.s0.data) x = y[pos++];
    for (auto& lvl : s.levels)
        for (double& x : lvl.data) x = y[pos++];
}

}  // namespace detail

// Literal vector field (level-0 block included even when m_A = 1).
inline FractionVector derivative(const FractionVector& s, const ModelParams& p) {
    if (s.K() < 2) throw StructuralError("derivative: need K >= 2");
    if (s.s0.size() != p.map.size() ||
        s.levels[0].size() != p.map.size() * p.ph.size())
        throw StructuralError("derivative: state dimensions do not match the model");
    return detail::OdeOperators(p).field(s, /*hold_level0=*/false);
}

struct IntegrateOptions {
    // Steps between stored snapshots; 0 picks a stride near 0.05 time units.
    std::size_t snapshot_stride = 0;
};

// Classical fixed-step RK4. For m_A = 1 the level-0 component is pinned at 1
// (its value is forced by the normalization constraint); for m_A >= 2 the
// level-0 block is integrated literally and the normalization drift is
// logged, never corrected.
inline Trajectory integrate(const FractionVector& start, const ModelParams& p, double t_end,
                            double step, const IntegrateOptions& opts = {}) {
    if (step <= 0.0) throw ValidationError("integrate: step must be positive");
    if (t_end < 0.0) throw ValidationError("integrate: t_end must be nonnegative");
    if (start.K() < 2) throw StructuralError("integrate: need K >= 2");
    const detail::OdeOperators ops(p);
    const bool hold0 = p.map.size() == 1;

    const std::size_t n_steps = static_cast<std::size_t>(std::llround(t_end / step));
    std::size_t stride = opts.snapshot_stride;
    if (stride == 0) stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.05 / step)));

    Trajectory traj;
    traj.step = step;
    FractionVector state = start;
    state.t = 0.0;
    traj.snapshots.push_back(state);
    traj.drift_log.push_back(state.drift());

    FractionVector scratch = state;
    std::vector<double> y = detail::pack(state);
    const std::size_t dim = y.size();
    std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);

    auto eval = [&](const std::vector<double>& yy, std::vector<double>& out) {
        detail::unpack(yy, scratch);
        const FractionVector ds = ops.field(scratch, hold0);
        out = detail::pack(ds);
    };

    for (std::size_t i = 1; i <= n_steps; ++i) {
        eval(y, k1);
        for (std::size_t j = 0; j < dim; ++j) tmp[j] = y[j] + 0.5 * step * k1[j];
        eval(tmp, k2);
        for (std::size_t j = 0; j < dim; ++j) tmp[j] = y[j] + 0.5 * step * k2[j];
        eval(tmp, k3);
        for (std::size_t j = 0; j < dim; ++j) tmp[j] = y[j] + step * k3[j];
        eval(tmp, k4);
        for (std::size_t j = 0; j < dim; ++j)
            y[j] += step / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);

        const double t_now = static_cast<double>(i) * step;
        for (std::size_t j = 0; j < dim; ++j) {
            if (!std::isfinite(y[j]))
                throw IntegrationError("integrate: non-finite state at t=" +
                                       std::to_string(t_now));
            if (y[j] < 0.0) {
                if (y[j] < -1e-9)
                    throw IntegrationError("integrate: entry " + std::to_string(y[j]) +
                                           " below 0 at t=" + std::to_string(t_now));
                y[j] = 0.0;
            } else if (y[j] > 1.0) {
                if (y[j] > 1.0 + 1e-9)
                    throw IntegrationError("integrate: entry " + std::to_string(y[j]) +
                                           " above 1 at t=" + std::to_string(t_now));
                y[j] = 1.0;
            }
        }

        if (i % stride == 0 || i == n_steps) {
            detail::unpack(y, state);
            state.t = t_now;
            traj.snapshots.push_back(state);
            traj.drift_log.push_back(state.drift());
        }
    }
    return traj;
}

// Largest positive exceedance of the trajectory over the fixed point,
// max over snapshots, levels and entries of (S_k(t) - pi_k)_+.
inline double check_upper_bound(const Trajectory& traj, const FixedPoint& pi) {
    double worst = 0.0;
    for (const auto& snap : traj.snapshots) {
        for (std::size_t i = 0; i < snap.s0.size() && i < pi.pi0.size(); ++i)
            worst = std::max(worst, snap.s0[i] - pi.pi0[i]);
        const unsigned depth = std::min(snap.K(), pi.K);
        for (unsigned k = 1; k <= depth; ++k) {
            const Vector& s = snap.level(k);
            const Vector& q = pi.level(k);
            for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, s[i] - q[i]);
        }
    }
    return worst;
}

struct LyapunovWeightOptions {
    // Replace the vanishing level-0 denominator (pi_0 - S_0)e with the
    // entrywise L1 distance. Off by default; the defining ratio is signalled
    // as degenerate instead.
    bool level0_entrywise = false;
};

// Weight sequence w_0..w_K for the Lyapunov function, from the ratio
// functionals evaluated at the supplied state:
//   c_0 (pi_0 - S_0)e = S_0^{od} (De),
//   c_k (pi_k - S_k)e = S_k^{od} ((De) x e),   k >= 1,
//   d_k (pi_k - S_k)e = S_k (e x T0),
//   w_1 = 1 + delta/c_0,
//   w_2 = w_1 + delta w_1/c_1 + (d_1/c_1)(w_1 - 1),
//   w_{k+1} = w_k + delta w_k/c_k + (d_k/c_k)(w_k - w_{k-1}).
struct LyapunovRatios {
    std::vector<double> c;  // c_0..c_{K-1}
    std::vector<double> d;  // d_1..d_{K-1} (index 0 unused)
};

inline LyapunovRatios lyapunov_ratios(const FractionVector& s, const FixedPoint& pi,
                                      const ModelParams& p,
                                      const LyapunovWeightOptions& opts = {}) {
    const unsigned K = std::min(s.K(), pi.K);
    const std::size_t ma = p.map.size();
    const std::size_t mb = p.ph.size();
    const Vector de = p.map.D * Vector::ones(ma);

    LyapunovRatios r;
    r.c.resize(K);
    r.d.resize(K);

    double denom0;
    if (opts.level0_entrywise) {
        denom0 = 0.0;
        for (std::size_t i = 0; i < ma; ++i) denom0 += std::fabs(pi.pi0[i] - s.s0[i]);
    } else {
        denom0 = pi.pi0.sum() - s.s0.sum();
    }
    if (std::fabs(denom0) < 1e-12)
        throw DegenerateStateError(
            "lyapunov_ratios: level-0 denominator (pi_0 - S_0)e vanishes at this state");
    r.c[0] = dot(hadamard_power(s.s0, p.d), de) / denom0;

    // (De) x e and e x T0 as flat columns over the (i,j) grid.
    for (unsigned k = 1; k < K; ++k) {
        const double denom = pi.level(k).sum() - s.level(k).sum();
        if (std::fabs(denom) < 1e-12)
            throw DegenerateStateError("lyapunov_ratios: level-" + std::to_string(k) +
                                       " denominator vanishes at this state");
        double num_c = 0.0, num_d = 0.0;
        const Vector& sk = s.level(k);
        for (std::size_t i = 0; i < ma; ++i)
            for (std::size_t j = 0; j < mb; ++j) {
                num_c += detail::int_pow(sk[i * mb + j], p.d) * de[i];
                num_d += sk[i * mb + j] * p.ph.T0[j];
            }
        r.c[k] = num_c / denom;
        r.d[k] = num_d / denom;
    }
    return r;
}

inline std::vector<double> lyapunov_weights(const FractionVector& s, const FixedPoint& pi,
                                            const ModelParams& p, double delta,
                                            const LyapunovWeightOptions& opts = {}) {
    const unsigned K = std::min(s.K(), pi.K);
    std::vector<double> w(K + 1, 1.0);
    if (delta == 0.0) return w;  // recursion collapses to unit weights
    if (delta < 0.0) throw DomainError("lyapunov_weights: delta must be nonnegative");

    const LyapunovRatios r = lyapunov_ratios(s, pi, p, opts);
    for (unsigned k = 0; k < K; ++k)
        if (r.c[k] <= 0.0)
            throw DegenerateStateError("lyapunov_weights: c_" + std::to_string(k) +
                                       " is nonpositive at this state");

    w[1] = 1.0 + delta / r.c[0];
    if (K >= 2) w[2] = w[1] + delta * w[1] / r.c[1] + (r.d[1] / r.c[1]) * (w[1] - 1.0);
    for (unsigned k = 2; k < K; ++k)
        w[k + 1] = w[k] + delta * w[k] / r.c[k] + (r.d[k] / r.c[k]) * (w[k] - w[k - 1]);
    return w;
}

// Phi = sum_k w_k (pi_k - S_k(t)) e, truncated at the common depth; the
// discarded tail is bounded by pi.tail_bound.
inline double lyapunov_phi(const FractionVector& s, const FixedPoint& pi,
                           const std::vector<double>& weights) {
    const unsigned K = std::min(s.K(), pi.K);
    if (weights.size() < K + 1)
        throw StructuralError("lyapunov_phi: need K+1 weights");
    double phi = weights[0] * (pi.pi0.sum() - s.s0.sum());
    for (unsigned k = 1; k <= K; ++k)
        phi += weights[k] * (pi.level(k).sum() - s.level(k).sum());
    return phi;
}

struct LyapunovSeries {
    std::vector<double> times;
    std::vector<double> phi_values;
    std::vector<double> weights;
    double delta = 0.0;
    std::vector<double> c_samples;
    std::vector<double> d_samples;
    std::size_t reference_index = 0;  // snapshot at which the weights were computed
};

// Weights are evaluated at the first snapshot where the ratio denominators
// are nondegenerate, then Phi is tracked along the whole trajectory.
inline LyapunovSeries lyapunov_series(const Trajectory& traj, const FixedPoint& pi,
                                      const ModelParams& p, double delta,
                                      const LyapunovWeightOptions& opts = {}) {
    LyapunovSeries out;
    out.delta = delta;
    bool found = false;
    for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
        try {
            out.weights = lyapunov_weights(traj.snapshots[i], pi, p, delta, opts);
            const LyapunovRatios r = lyapunov_ratios(traj.snapshots[i], pi, p, opts);
            out.c_samples = r.c;
            out.d_samples = r.d;
            out.reference_index = i;
            found = true;
            break;
        } catch (const DegenerateStateError&) {
            continue;
        }
    }
    if (!found)
        throw DegenerateStateError("lyapunov_series: no nondegenerate snapshot found");
    for (const auto& snap : traj.snapshots) {
        out.times.push_back(snap.t);
        out.phi_values.push_back(lyapunov_phi(snap, pi, out.weights));
    }
    return out;
}

// Fitted exponential decay rate of Phi (unit weights) over the second half of
// the trajectory: least-squares slope of log Phi, returned as a positive
// rate. Snapshots with nonpositive Phi shrink the window from the left.
inline double decay_rate(const Trajectory& traj, const FixedPoint& pi) {
    const std::size_t n = traj.snapshots.size();
    if (n < 4) throw FitError("decay_rate: trajectory too short");
    const std::vector<double> unit(
        std::min(traj.snapshots[0].K(), pi.K) + 1, 1.0);

    std::vector<double> ts, logphi;
    for (std::size_t i = n / 2; i < n; ++i) {
        const double phi = lyapunov_phi(traj.snapshots[i], pi, unit);
        if (phi <= 0.0) {
            ts.clear();      // window shrinks: restart after the bad point
            logphi.clear();
            continue;
        }
        ts.push_back(traj.snapshots[i].t);
        logphi.push_back(std::log(phi));
    }
    if (ts.size() < 3) throw FitError("decay_rate: no usable fit window");

    const std::size_t m = ts.size();
    double mean_t = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        mean_t += ts[i];
        mean_y += logphi[i];
    }
    mean_t /= static_cast<double>(m);
    mean_y /= static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += (ts[i] - mean_t) * (ts[i] - mean_t);
        sxy += (ts[i] - mean_t) * (logphi[i] - mean_y);
    }
    if (sxx == 0.0) throw FitError("decay_rate: degenerate fit window");
    return -sxy / sxx;
}

// Default target decay rate when the caller leaves it open.
inline double default_delta(const ModelParams& p) { return 0.05 * p.ph.mu * (1.0 - p.rho); }

}  // namespace supermarket
