#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <future>
#include <numeric>
#include <string>
#include <vector>

#include "supermarket/ode.hpp"
#include "supermarket/rng.hpp"

// Event-driven simulation of the finite-n system: one global MAP with
// descriptor (nC, nD), per-server PH service, join-shortest-of-d with uniform
// tie-breaking, FCFS within a server. All clocks are exponential, so events
// are scheduled as a single rate race (total-rate exponential plus a
// categorical pick) instead of a calendar queue.

namespace supermarket {

struct SimOptions {
    bool with_replacement = true;    // d probes drawn independently
    unsigned max_tracked_level = 64; // statistics depth cap
};

struct SimResult {
    std::size_t n = 0;
    unsigned d = 0;
    std::uint64_t seed = 0;
    std::uint64_t event_count = 0;
    std::uint64_t arrivals = 0;
    std::uint64_t departures = 0;
    std::uint64_t in_system_at_end = 0;

    unsigned k_max = 0;  // deepest level with any occupancy statistics
    std::size_t ma = 0, mb = 0;
    std::vector<double> tails_kij;  // x(k,i,j), k = 1..k_max, lexicographic (i,j)

    double sojourn_mean = 0.0;
    double sojourn_half_width = 0.0;  // batch-means 95% half width
    std::size_t sojourn_count = 0;

    double tail_kij(unsigned k, std::size_t i, std::size_t j) const {
        if (k < 1 || k > k_max) return 0.0;
        return tails_kij[(k - 1) * ma * mb + i * mb + j];
    }
    // Fraction of servers with at least k customers, aggregated over phases.
    double tail(unsigned k) const {
        if (k < 1 || k > k_max) return 0.0;
        double s = 0.0;
        for (std::size_t x = 0; x < ma * mb; ++x) s += tails_kij[(k - 1) * ma * mb + x];
        return s;
    }
};

class Simulation {
public:
    Simulation(const ModelParams& p, std::size_t n, std::uint64_t seed,
               const SimOptions& opts = {})
        : p_(p), n_(n), opts_(opts), rng_(seed), seed_(seed) {
        if (n < 1) throw ConfigError("Simulation: n must be >= 1");
        if (!opts.with_replacement && p.d > n)
            throw ConfigError("Simulation: without replacement requires d <= n");
        const std::size_t ma = p.map.size();
        const std::size_t mb = p.ph.size();

        map_out_.resize(ma);
        map_weights_.resize(ma);
        map_targets_.resize(ma);
        map_is_arrival_.resize(ma);
        for (std::size_t i = 0; i < ma; ++i) {
            map_out_[i] = -p.map.C(i, i);
            for (std::size_t j = 0; j < ma; ++j) {
                if (j != i && p.map.C(i, j) > 0.0) {
                    map_weights_[i].push_back(p.map.C(i, j));
                    map_targets_[i].push_back(j);
                    map_is_arrival_[i].push_back(0);
                }
            }
            for (std::size_t j = 0; j < ma; ++j) {
                if (p.map.D(i, j) > 0.0) {
                    map_weights_[i].push_back(p.map.D(i, j));
                    map_targets_[i].push_back(j);
                    map_is_arrival_[i].push_back(1);
                }
            }
        }

        svc_out_.resize(mb);
        svc_weights_.resize(mb);
        svc_targets_.resize(mb);
        for (std::size_t j = 0; j < mb; ++j) {
            svc_out_[j] = -p.ph.T(j, j);
            for (std::size_t j2 = 0; j2 < mb; ++j2) {
                if (j2 != j && p.ph.T(j, j2) > 0.0) {
                    svc_weights_[j].push_back(p.ph.T(j, j2));
                    svc_targets_[j].push_back(j2);
                }
            }
            svc_weights_[j].push_back(p.ph.T0[j]);
            svc_targets_[j].push_back(mb);  // sentinel: completion
        }

        queue_len_.assign(n, 0);
        service_phase_.assign(n, -1);
        arrival_times_.assign(n, {});
        by_phase_.assign(mb, {});
        pos_in_phase_.assign(n, 0);
        cnt_.assign(1, std::vector<std::uint32_t>(mb, 0));  // cnt_[k][j], k >= 1

        // initial MAP phase drawn from the stationary law
        phase_ = rng_.categorical(std::span<const double>(p.map.gamma.data), 1.0);
    }

    void enable_stats(double warmup, double horizon) {
        if (horizon <= warmup || warmup < 0.0)
            throw ConfigError("Simulation: need horizon > warmup >= 0");
        warmup_ = warmup;
        horizon_ = horizon;
        stats_on_ = true;
    }

    // Process all events strictly before t; the clock lands exactly on t.
    void advance_to(double t) {
        while (true) {
            const double total =
                static_cast<double>(n_) * map_out_[phase_] + total_service_rate();
            const double dt = rng_.exponential(total);
            if (clock_ + dt >= t) {
                accumulate(t - clock_);
                clock_ = t;
                return;
            }
            accumulate(dt);
            clock_ += dt;
            ++event_count_;
            const double u = rng_.uniform01() * total;
            if (u < static_cast<double>(n_) * map_out_[phase_]) {
                map_event();
            } else {
                service_event();
            }
        }
    }

    std::size_t map_phase() const { return phase_; }
    double clock() const { return clock_; }
    std::uint64_t arrivals() const { return arrivals_; }
    std::uint64_t departures() const { return departures_; }
    std::uint64_t in_system() const {
        return std::accumulate(queue_len_.begin(), queue_len_.end(), std::uint64_t{0});
    }
    unsigned max_level() const { return static_cast<unsigned>(cnt_.size()) - 1; }

    // Instantaneous fraction of servers with >= k customers in service phase j.
    double fraction_at_least(unsigned k, std::size_t j) const {
        if (k < 1 || k >= cnt_.size()) return 0.0;
        return static_cast<double>(cnt_[k][j]) / static_cast<double>(n_);
    }

    SimResult finish() const {
        SimResult r;
        r.n = n_;
        r.d = p_.d;
        r.seed = seed_;
        r.event_count = event_count_;
        r.arrivals = arrivals_;
        r.departures = departures_;
        r.in_system_at_end = in_system();
        r.ma = p_.map.size();
        r.mb = p_.ph.size();
        const double window = horizon_ - warmup_;
        r.k_max = static_cast<unsigned>(acc_.size());
        r.tails_kij.reserve(acc_.size() * r.ma * r.mb);
        for (const auto& slab : acc_)
            for (double v : slab) r.tails_kij.push_back(v / window / static_cast<double>(n_));

        r.sojourn_count = sojourns_.size();
        if (!sojourns_.empty()) {
            double s = 0.0;
            for (double x : sojourns_) s += x;
            r.sojourn_mean = s / static_cast<double>(sojourns_.size());
        }
        if (sojourns_.size() >= 20) {
            constexpr std::size_t batches = 10;
            const std::size_t per = sojourns_.size() / batches;
            std::vector<double> bm(batches, 0.0);
            for (std::size_t b = 0; b < batches; ++b) {
                for (std::size_t i = b * per; i < (b + 1) * per; ++i) bm[b] += sojourns_[i];
                bm[b] /= static_cast<double>(per);
            }
            double mean = 0.0;
            for (double x : bm) mean += x;
            mean /= batches;
            double var = 0.0;
            for (double x : bm) var += (x - mean) * (x - mean);
            var /= (batches - 1);
            r.sojourn_half_width = 2.262 * std::sqrt(var / batches);  // t_{0.975, 9}
        }
        return r;
    }

private:
    double total_service_rate() const {
        double s = 0.0;
        for (std::size_t j = 0; j < by_phase_.size(); ++j)
            s += static_cast<double>(by_phase_[j].size()) * svc_out_[j];
        return s;
    }

    void accumulate(double dt) {
        if (!stats_on_ || dt <= 0.0) return;
        const double lo = std::max(clock_, warmup_);
        const double hi = std::min(clock_ + dt, horizon_);
        if (hi <= lo) return;
        const double eff = hi - lo;
        const std::size_t mb = by_phase_.size();
        const std::size_t ma = map_out_.size();
        const unsigned kmax = std::min<unsigned>(max_level(), opts_.max_tracked_level);
        if (acc_.size() < kmax) acc_.resize(kmax, std::vector<double>(ma * mb, 0.0));
        for (unsigned k = 1; k <= kmax; ++k) {
            auto& slab = acc_[k - 1];
            for (std::size_t j = 0; j < mb; ++j)
                slab[phase_ * mb + j] += eff * static_cast<double>(cnt_[k][j]);
        }
    }

    void map_event() {
        const auto& w = map_weights_[phase_];
        const std::size_t pick = rng_.categorical(std::span<const double>(w), map_out_[phase_]);
        const bool arrival = map_is_arrival_[phase_][pick] != 0;
        phase_ = map_targets_[phase_][pick];
        if (arrival) handle_arrival();
    }

    void handle_arrival() {
        ++arrivals_;
        // probe d servers, join the shortest; ties broken uniformly over the
        // distinct tied servers among the probes
        probe_buf_.clear();
        int best = -1;
        for (unsigned r = 0; r < p_.d; ++r) {
            std::size_t s;
            if (opts_.with_replacement) {
                s = static_cast<std::size_t>(rng_.uniform_below(n_));
            } else {
                do {
                    s = static_cast<std::size_t>(rng_.uniform_below(n_));
                } while (std::find(probe_all_.begin(), probe_all_.end(), s) != probe_all_.end());
                probe_all_.push_back(s);
            }
            const int len = queue_len_[s];
            if (best < 0 || len < best) {
                best = len;
                probe_buf_.assign(1, s);
            } else if (len == best &&
                       std::find(probe_buf_.begin(), probe_buf_.end(), s) == probe_buf_.end()) {
                probe_buf_.push_back(s);
            }
        }
        probe_all_.clear();
        const std::size_t target =
            probe_buf_[probe_buf_.size() == 1
                           ? 0
                           : static_cast<std::size_t>(rng_.uniform_below(probe_buf_.size()))];

        const int len = ++queue_len_[target];
        arrival_times_[target].push_back(clock_);
        if (len == 1) {
            start_service(target);
        } else {
            bump_count(len, service_phase_[target], +1);
        }
    }

    void start_service(std::size_t s) {
        const std::size_t j =
            rng_.categorical(std::span<const double>(p_.ph.alpha.data), 1.0);
        service_phase_[s] = static_cast<int>(j);
        pos_in_phase_[s] = static_cast<std::uint32_t>(by_phase_[j].size());
        by_phase_[j].push_back(static_cast<std::uint32_t>(s));
        cnt_grow(1);
        cnt_[1][j] += 1;
    }

    void service_event() {
        // pick the service phase proportionally to busy-count * out-rate
        const std::size_t mb = by_phase_.size();
        double total = 0.0;
        phase_rate_buf_.resize(mb);
        for (std::size_t j = 0; j < mb; ++j) {
            phase_rate_buf_[j] = static_cast<double>(by_phase_[j].size()) * svc_out_[j];
            total += phase_rate_buf_[j];
        }
        const std::size_t j = rng_.categorical(std::span<const double>(phase_rate_buf_), total);
        const std::size_t victim =
            by_phase_[j][static_cast<std::size_t>(rng_.uniform_below(by_phase_[j].size()))];

        const auto& w = svc_weights_[j];
        const std::size_t pick = rng_.categorical(std::span<const double>(w), svc_out_[j]);
        if (svc_targets_[j][pick] != mb) {
            move_phase(victim, j, svc_targets_[j][pick]);
        } else {
            complete_service(victim, j);
        }
    }

    void move_phase(std::size_t s, std::size_t from, std::size_t to) {
        remove_from_phase(s, from);
        service_phase_[s] = static_cast<int>(to);
        pos_in_phase_[s] = static_cast<std::uint32_t>(by_phase_[to].size());
        by_phase_[to].push_back(static_cast<std::uint32_t>(s));
        for (int k = 1; k <= queue_len_[s]; ++k) {
            cnt_[static_cast<std::size_t>(k)][from] -= 1;
            cnt_[static_cast<std::size_t>(k)][to] += 1;
        }
    }

    void complete_service(std::size_t s, std::size_t j) {
        ++departures_;
        const int old_len = queue_len_[s];
        cnt_[static_cast<std::size_t>(old_len)][j] -= 1;
        queue_len_[s] = old_len - 1;

        const double arr = arrival_times_[s].front();
        arrival_times_[s].pop_front();
        if (stats_on_ && arr >= warmup_) sojourns_.push_back(clock_ - arr);

        remove_from_phase(s, j);
        service_phase_[s] = -1;
        if (queue_len_[s] >= 1) {
            // next customer starts service with a fresh phase from alpha
            const std::size_t j2 =
                rng_.categorical(std::span<const double>(p_.ph.alpha.data), 1.0);
            service_phase_[s] = static_cast<int>(j2);
            pos_in_phase_[s] = static_cast<std::uint32_t>(by_phase_[j2].size());
            by_phase_[j2].push_back(static_cast<std::uint32_t>(s));
            if (j2 != j) {
                for (int k = 1; k <= queue_len_[s]; ++k) {
                    cnt_[static_cast<std::size_t>(k)][j] -= 1;
                    cnt_[static_cast<std::size_t>(k)][j2] += 1;
                }
            }
        }
    }

    void remove_from_phase(std::size_t s, std::size_t j) {
        auto& bucket = by_phase_[j];
        const std::uint32_t pos = pos_in_phase_[s];
        const std::uint32_t last = bucket.back();
        bucket[pos] = last;
        pos_in_phase_[last] = pos;
        bucket.pop_back();
    }

    void bump_count(int level, int phase, int delta) {
        if (delta == 0) return;
        cnt_grow(level);
        cnt_[static_cast<std::size_t>(level)][static_cast<std::size_t>(phase)] +=
            static_cast<std::uint32_t>(delta);
    }

    void cnt_grow(int level) {
        while (cnt_.size() <= static_cast<std::size_t>(level))
            cnt_.emplace_back(by_phase_.size(), 0);
    }

    ModelParams p_;
    std::size_t n_;
    SimOptions opts_;
    Philox rng_;
    std::uint64_t seed_;

    std::size_t phase_ = 0;
    double clock_ = 0.0;
    std::uint64_t event_count_ = 0, arrivals_ = 0, departures_ = 0;

    std::vector<double> map_out_;
    std::vector<std::vector<double>> map_weights_;
    std::vector<std::vector<std::size_t>> map_targets_;
    std::vector<std::vector<char>> map_is_arrival_;
    std::vector<double> svc_out_;
    std::vector<std::vector<double>> svc_weights_;
    std::vector<std::vector<std::size_t>> svc_targets_;

    std::vector<int> queue_len_;
    std::vector<int> service_phase_;
    std::vector<std::deque<double>> arrival_times_;
    std::vector<std::vector<std::uint32_t>> by_phase_;
    std::vector<std::uint32_t> pos_in_phase_;
    std::vector<std::vector<std::uint32_t>> cnt_;

    bool stats_on_ = false;
    double warmup_ = 0.0, horizon_ = 0.0;
    std::vector<std::vector<double>> acc_;  // time-weighted counts per (k,i,j)
    std::vector<double> sojourns_;

    std::vector<std::size_t> probe_buf_, probe_all_;
    std::vector<double> phase_rate_buf_;
};

inline SimResult simulate(const ModelParams& p, std::size_t n, double horizon, double warmup,
                          std::uint64_t seed, const SimOptions& opts = {}) {
    if (horizon <= warmup || warmup < 0.0)
        throw ConfigError("simulate: need horizon > warmup >= 0");
    Simulation sim(p, n, seed, opts);
    sim.enable_stats(warmup, horizon);
    sim.advance_to(horizon);
    return sim.finish();
}

// Replications run in parallel (one state machine each) and merge by index.
inline std::vector<SimResult> run_replications(const ModelParams& p, std::size_t n,
                                               double horizon, double warmup,
                                               std::uint64_t base_seed, unsigned reps,
                                               const SimOptions& opts = {}) {
    if (reps == 0) throw ConfigError("run_replications: reps must be >= 1");
    std::vector<std::future<SimResult>> futures;
    futures.reserve(reps);
    for (unsigned r = 0; r < reps; ++r)
        futures.push_back(std::async(std::launch::async, [&, r] {
            return simulate(p, n, horizon, warmup, base_seed + r, opts);
        }));
    std::vector<SimResult> out;
    out.reserve(reps);
    for (auto& f : futures) out.push_back(f.get());
    return out;
}

struct KurtzOptions {
    double ode_step = 1e-3;
    double sample_dt = 0.1;
    SimOptions sim;
};

struct KurtzRow {
    std::size_t n = 0;
    double sup_distance = 0.0;  // mean over replications
    double stderr_mean = 0.0;
    unsigned reps = 0;
};

// Mean (over replications) sup distance between the empirical fraction vector
// and the ODE trajectory, both started empty, for each population size n.
// The distance is the max norm over levels k = 1..K; the level-0 component is
// the global phase indicator and is excluded (it has no deterministic limit
// for m_A >= 2 and vanishes identically for m_A = 1).
inline std::vector<KurtzRow> kurtz_convergence(const ModelParams& p,
                                               const std::vector<std::size_t>& n_list,
                                               double t, unsigned reps,
                                               std::uint64_t base_seed,
                                               const KurtzOptions& opts = {}) {
    if (reps == 0) throw ConfigError("kurtz_convergence: reps must be >= 1");
    if (n_list.empty()) throw ConfigError("kurtz_convergence: n_list must be nonempty");
    for (std::size_t i = 1; i < n_list.size(); ++i)
        if (n_list[i] <= n_list[i - 1])
            throw ConfigError("kurtz_convergence: n_list must be strictly increasing");
    if (t <= 0.0) throw ConfigError("kurtz_convergence: t must be positive");

    const unsigned K = default_truncation_level(p, 1e-12);
    const std::size_t stride =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opts.sample_dt / opts.ode_step)));
    IntegrateOptions iopts;
    iopts.snapshot_stride = stride;
    const Trajectory traj = integrate(empty_state(p, K), p, t, opts.ode_step, iopts);

    const std::size_t ma = p.map.size();
    const std::size_t mb = p.ph.size();

    auto one_rep = [&](std::size_t n, unsigned r) {
        Simulation sim(p, n, base_seed + r, opts.sim);
        double sup = 0.0;
        for (const auto& snap : traj.snapshots) {
            sim.advance_to(snap.t);
            for (unsigned k = 1; k <= K; ++k) {
                const Vector& ode_level = snap.level(k);
                for (std::size_t i = 0; i < ma; ++i) {
                    const double ind = (sim.map_phase() == i) ? 1.0 : 0.0;
                    for (std::size_t j = 0; j < mb; ++j) {
                        const double emp = ind * sim.fraction_at_least(k, j);
                        sup = std::max(sup, std::fabs(emp - ode_level[i * mb + j]));
                    }
                }
            }
        }
        return sup;
    };

    std::vector<KurtzRow> rows;
    for (std::size_t n : n_list) {
        std::vector<std::future<double>> futures;
        for (unsigned r = 0; r < reps; ++r)
            futures.push_back(std::async(std::launch::async, one_rep, n, r));
        std::vector<double> sups;
        sups.reserve(reps);
        for (auto& f : futures) sups.push_back(f.get());
        KurtzRow row;
        row.n = n;
        row.reps = reps;
        double mean = 0.0;
        for (double x : sups) mean += x;
        mean /= reps;
        row.sup_distance = mean;
        if (reps > 1) {
            double var = 0.0;
            for (double x : sups) var += (x - mean) * (x - mean);
            var /= (reps - 1);
            row.stderr_mean = std::sqrt(var / reps);
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace supermarket
