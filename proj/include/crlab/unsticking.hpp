#pragma once

// Random unsticking and its time reversal. The random-unsticking process R
// runs the jammed dynamics but unsticks every newstuck sender independently
// with p_unstick(t); the reverse process R~ runs balls downward from high
// bins with per-ball identities, which is what the time-reversal bijection
// and the fill-set counting need.

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "analysis.hpp"
#include "blocks.hpp"
#include "jammed.hpp"
#include "rng.hpp"
#include "sequences.hpp"

namespace crlab {

// p_unstick(t) = 1 for t <= t0, else exp(-zeta |bins(t-t0)| / 16)
inline double p_unstick(const BlockTable& table, long long t0, long long t) {
    if (t <= t0) return 1.0;
    return std::exp(-table.zeta *
                    static_cast<double>(table.bins_count_of_tau(t - t0)) /
                    16.0);
}

// ---------------------------------------------------------------------------
// random-unsticking process R (count-based, forward time)

struct RandomUnstickStepInfo {
    long long t = 0;
    long long births = 0;
    long long stucksend = 0;
    long long unsticks = 0;  // possibly many per step
    double noise_stuck = 0.0;
};

class RandomUnstickingProcess {
  public:
    RandomUnstickingProcess(SendSequence seq, double lambda, int j_obs,
                            const BlockTable& table, long long t0,
                            std::uint64_t seed)
        : seq_(std::move(seq)), lambda_(lambda), j_obs_(j_obs), table_(table),
          t0_(t0), root_(seed) {
        if (!(lambda > 0.0)) throw SimError("random-unstick: lambda must be > 0");
        if (j_obs < 1) throw SimError("random-unstick: J_obs must be >= 1");
        detail::require_normalized(seq_, "random-unstick");
        stuck_.assign(static_cast<std::size_t>(j_obs) + 1, 0);
        unstuck_.assign(static_cast<std::size_t>(j_obs) + 1, 0);
        auto init = root_.split("init");
        for (int j = 1; j <= j_obs; ++j)
            unstuck_[static_cast<std::size_t>(j)] =
                init.split(static_cast<std::uint64_t>(j))
                    .poisson(lambda_ / seq_.eval(j));
    }

    RandomUnstickStepInfo step() {
        ++t_;
        auto st = root_.split(static_cast<std::uint64_t>(t_));
        auto n = static_cast<std::size_t>(j_obs_);
        long long births = st.split("birth").poisson(lambda_);

        std::vector<long long> s_stuck(n + 1, 0), s_unstuck(n + 1, 0);
        long long stucksend = births;
        for (std::size_t j = 1; j <= n; ++j) {
            double p = seq_.eval(static_cast<long long>(j));
            if (stuck_[j] > 0)
                s_stuck[j] = p >= 1.0
                                 ? stuck_[j]
                                 : st.split(static_cast<std::uint64_t>(j), "stuck")
                                       .binomial(stuck_[j], p);
            if (unstuck_[j] > 0)
                s_unstuck[j] =
                    p >= 1.0 ? unstuck_[j]
                             : st.split(static_cast<std::uint64_t>(j), "unstuck")
                                   .binomial(unstuck_[j], p);
            stucksend += s_stuck[j];
        }

        for (std::size_t j = n; j >= 1; --j) {
            stuck_[j] -= s_stuck[j];
            unstuck_[j] -= s_unstuck[j];
            if (j < n) {
                stuck_[j + 1] += s_stuck[j];
                unstuck_[j + 1] += s_unstuck[j];
            }
        }
        stuck_[1] += births;

        // every newstuck sender flips an independent unstick coin
        double q = p_unstick(table_, t0_, t_);
        long long unsticks = 0;
        auto us = st.split("unstick");
        auto flip = [&](std::size_t dest, long long senders, std::uint64_t lbl) {
            if (senders == 0 || dest > n) return;
            long long k = q >= 1.0 ? senders : us.split(lbl).binomial(senders, q);
            stuck_[dest] -= k;
            unstuck_[dest] += k;
            unsticks += k;
        };
        flip(1, births, 0);
        for (std::size_t j = 1; j < n; ++j)
            flip(j + 1, s_stuck[j], static_cast<std::uint64_t>(j));
        unsticks_total_ += unsticks;

        RandomUnstickStepInfo info;
        info.t = t_;
        info.births = births;
        info.stucksend = stucksend;
        info.unsticks = unsticks;
        info.noise_stuck = stuck_noise(stuck_, seq_, lambda_);
        return info;
    }

    const std::vector<long long>& stuck() const { return stuck_; }
    const std::vector<long long>& unstuck() const { return unstuck_; }
    long long time() const { return t_; }
    long long unsticks_total() const { return unsticks_total_; }

  private:
    SendSequence seq_;
    double lambda_;
    int j_obs_;
    BlockTable table_;
    long long t0_;
    RngStream root_;
    std::vector<long long> stuck_, unstuck_;
    long long t_ = 0;
    long long unsticks_total_ = 0;
};

// ---------------------------------------------------------------------------
// trajectories. Forward: a ball born at t_birth >= t0+1 that climbs to bin J
// and is observed until t0+tau_end; sojourns N_1..N_J (>= 1) sum to
// t0+tau_end-t_birth+1; one unstick flag per observed step. Reverse: a ball
// that starts in bin J, descends, and leaves from bin 1 at step tau_leave.

struct ForwardTrajectory {
    long long t_birth = 0;
    int terminal_bin = 0;             // J
    std::vector<long long> sojourns;  // N_1..N_J
    std::vector<std::uint8_t> flags;  // index i -> time t_birth + i
};

struct ReverseTrajectory {
    long long tau_leave = 0;
    int start_bin = 0;                // J
    std::vector<long long> sojourns;  // N_1..N_J (N_j = steps spent in bin j)
    std::vector<std::uint8_t> flags;  // index i -> step i+1
};

// send times of a forward trajectory: t_birth + sum_{k<=c} N_k, c = 0..J-1
inline std::vector<long long> send_times(const ForwardTrajectory& b) {
    std::vector<long long> s;
    long long acc = b.t_birth;
    s.push_back(acc);
    for (int c = 0; c + 1 < b.terminal_bin; ++c) {
        acc += b.sojourns[static_cast<std::size_t>(c)];
        s.push_back(acc);
    }
    return s;
}

// send steps of a reverse trajectory: sum_{k=c}^{J} N_k, c = 1..J
inline std::vector<long long> send_steps(const ReverseTrajectory& b) {
    std::vector<long long> s;
    long long acc = 0;
    for (long long nk : b.sojourns) acc += nk;
    for (std::size_t c = 0; c < b.sojourns.size(); ++c) {
        s.push_back(acc);
        acc -= b.sojourns[c];
    }
    return s;  // descending: first entry is tau_leave... no: largest first
}

namespace detail {

inline void check_forward(const ForwardTrajectory& b, long long t0,
                          long long tau_end) {
    if (b.terminal_bin < 1 ||
        b.sojourns.size() != static_cast<std::size_t>(b.terminal_bin))
        throw SimError("forward trajectory: bad sojourn list");
    if (b.t_birth < t0 + 1 || b.t_birth > t0 + tau_end)
        throw SimError("forward trajectory: t_birth out of range");
    long long len = t0 + tau_end - b.t_birth + 1, sum = 0;
    for (long long nk : b.sojourns) {
        if (nk < 1) throw SimError("forward trajectory: sojourn < 1");
        sum += nk;
    }
    if (sum != len || static_cast<long long>(b.flags.size()) != len)
        throw SimError("forward trajectory: lengths disagree");
}

inline void check_reverse(const ReverseTrajectory& b, long long tau_end) {
    if (b.start_bin < 1 ||
        b.sojourns.size() != static_cast<std::size_t>(b.start_bin))
        throw SimError("reverse trajectory: bad sojourn list");
    long long sum = 0;
    for (long long nk : b.sojourns) {
        if (nk < 1) throw SimError("reverse trajectory: sojourn < 1");
        sum += nk;
    }
    if (sum != b.tau_leave || b.tau_leave > tau_end ||
        static_cast<long long>(b.flags.size()) != b.tau_leave)
        throw SimError("reverse trajectory: lengths disagree");
}

} // namespace detail

// mean number of balls realizing B in the forward process R:
// lambda (1-p_J)^(N_J - 1) * prod_{j<J} p_j (1-p_j)^(N_j-1) * flag factor
inline double trajectory_mean_forward(const ForwardTrajectory& b,
                                      const SendSequence& seq, double lambda,
                                      const BlockTable& table, long long t0,
                                      long long tau_end) {
    detail::check_forward(b, t0, tau_end);
    int J = b.terminal_bin;
    double mu = lambda;
    for (int j = 1; j <= J; ++j) {
        double p = seq.eval(j);
        double nj = static_cast<double>(b.sojourns[static_cast<std::size_t>(j - 1)]);
        mu *= std::pow(1.0 - p, nj - 1.0);
        if (j < J) mu *= p;
    }
    for (std::size_t i = 0; i < b.flags.size(); ++i) {
        double q = p_unstick(table, t0, b.t_birth + static_cast<long long>(i));
        mu *= b.flags[i] ? q : 1.0 - q;
    }
    return mu;
}

// mean number of balls realizing B~ in the reverse process R~:
// (lambda / p_J) * prod_{j<=J} p_j (1-p_j)^(N_j-1) * flag factor, with the
// flag at step tau drawn at rate p_unstick(tau_end - tau + t0 + 1)
inline double trajectory_mean_reverse(const ReverseTrajectory& b,
                                      const SendSequence& seq, double lambda,
                                      const BlockTable& table, long long t0,
                                      long long tau_end) {
    detail::check_reverse(b, tau_end);
    int J = b.start_bin;
    double mu = lambda / seq.eval(J);
    for (int j = 1; j <= J; ++j) {
        double p = seq.eval(j);
        double nj = static_cast<double>(b.sojourns[static_cast<std::size_t>(j - 1)]);
        mu *= p * std::pow(1.0 - p, nj - 1.0);
    }
    for (long long tau = 1; tau <= b.tau_leave; ++tau) {
        double q = p_unstick(table, t0, tau_end - tau + t0 + 1);
        mu *= b.flags[static_cast<std::size_t>(tau - 1)] ? q : 1.0 - q;
    }
    return mu;
}

// the time-reversal bijection pi: tau_leave = tau_end - t_birth + t0 + 1,
// bins and sojourns kept, flags reversed in time
inline ReverseTrajectory reverse_bijection(const ForwardTrajectory& b,
                                           long long t0, long long tau_end) {
    detail::check_forward(b, t0, tau_end);
    ReverseTrajectory r;
    r.tau_leave = tau_end - b.t_birth + t0 + 1;
    r.start_bin = b.terminal_bin;
    r.sojourns = b.sojourns;
    r.flags.assign(b.flags.rbegin(), b.flags.rend());
    return r;
}

inline ForwardTrajectory reverse_bijection_inverse(const ReverseTrajectory& b,
                                                   long long t0,
                                                   long long tau_end) {
    detail::check_reverse(b, tau_end);
    ForwardTrajectory f;
    f.t_birth = tau_end - b.tau_leave + t0 + 1;
    f.terminal_bin = b.start_bin;
    f.sojourns = b.sojourns;
    f.flags.assign(b.flags.rbegin(), b.flags.rend());
    return f;
}

// ---------------------------------------------------------------------------
// fill-set membership. Both directions require terminal/start bin j, arrival
// early enough (equivalently departure fast enough), and no unstick flag at
// any send time.

// block index of the table containing bin j
inline int block_of_bin(const BlockTable& t, long long j) {
    for (int i = 1; i <= t.num_blocks(); ++i)
        if (j >= t.ell[static_cast<std::size_t>(i)] &&
            j <= t.u[static_cast<std::size_t>(i)])
            return i;
    throw BlockError("block_of_bin: bin beyond tabulated blocks");
}

// kappa * sum_{k<=i} ceil(W_k), the descent-time allowance of block i
inline long long descent_allowance(const BlockTable& t, int i) {
    if (i < 1 || i > t.num_blocks())
        throw BlockError("descent_allowance: bad block");
    long long s = 0;
    for (int k = 1; k <= i; ++k) s += t.ceilW[static_cast<std::size_t>(k)];
    return t.kappa * s;
}

inline bool fill_member_forward(const ForwardTrajectory& b, long long j,
                                const BlockTable& table, long long t0,
                                long long tau_end) {
    detail::check_forward(b, t0, tau_end);
    if (b.terminal_bin != j) return false;
    int i = block_of_bin(table, j);
    if (b.t_birth < t0 + tau_end - descent_allowance(table, i)) return false;
    for (long long t : send_times(b))
        if (b.flags[static_cast<std::size_t>(t - b.t_birth)]) return false;
    return true;
}

inline bool fill_member_reverse(const ReverseTrajectory& b, long long j,
                                const BlockTable& table, long long tau_end) {
    detail::check_reverse(b, tau_end);
    if (b.start_bin != j) return false;
    int i = block_of_bin(table, j);
    if (b.tau_leave > 1 + descent_allowance(table, i)) return false;
    for (long long tau : send_steps(b))
        if (b.flags[static_cast<std::size_t>(tau - 1)]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// exhaustive forward enumeration (small horizons only)

inline std::vector<ForwardTrajectory> enumerate_forward_trajectories(
    long long t0, long long tau_end, int max_bin,
    long long budget = 10'000'000) {
    if (tau_end < 1 || max_bin < 1)
        throw SimError("enumerate: bad bounds");
    std::vector<ForwardTrajectory> out;
    long long produced = 0;
    for (long long tb = t0 + 1; tb <= t0 + tau_end; ++tb) {
        long long len = t0 + tau_end - tb + 1;
        for (int J = 1; J <= std::min<long long>(max_bin, len); ++J) {
            // compositions of len into J positive parts
            std::vector<long long> comp(static_cast<std::size_t>(J), 1);
            comp.back() = len - J + 1;
            auto emit = [&](const std::vector<long long>& n) {
                long long npat = 1LL << len;
                for (long long pat = 0; pat < npat; ++pat) {
                    if (++produced > budget)
                        throw SimError("enumerate: budget exceeded");
                    ForwardTrajectory b;
                    b.t_birth = tb;
                    b.terminal_bin = J;
                    b.sojourns = n;
                    b.flags.resize(static_cast<std::size_t>(len));
                    for (long long i = 0; i < len; ++i)
                        b.flags[static_cast<std::size_t>(i)] =
                            (pat >> i) & 1 ? 1 : 0;
                    out.push_back(std::move(b));
                }
            };
            // iterate compositions in colex order
            std::vector<long long> n(static_cast<std::size_t>(J), 1);
            long long rest = len - J;
            // distribute `rest` via odometer over J slots
            std::vector<long long> extra(static_cast<std::size_t>(J), 0);
            extra[0] = rest;
            while (true) {
                for (int k = 0; k < J; ++k)
                    n[static_cast<std::size_t>(k)] =
                        1 + extra[static_cast<std::size_t>(k)];
                emit(n);
                // next weak composition of rest
                if (J == 1) break;
                int k = 0;
                while (k < J - 1 && extra[static_cast<std::size_t>(k)] == 0) ++k;
                if (k == J - 1) break;
                long long v = extra[static_cast<std::size_t>(k)];
                extra[static_cast<std::size_t>(k)] = 0;
                extra[0] = v - 1;
                extra[static_cast<std::size_t>(k + 1)] += 1;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// the reverse process R~ with per-ball identities

struct ReverseBallRecord {
    long long start_bin = 0;
    long long tau_leave = -1;         // -1: still in the system at tau_end
    std::vector<long long> sojourns;  // N_1..N_J once the ball has left
    std::vector<std::uint8_t> flags;  // step 1..(tau_leave or tau_end)
    std::vector<long long> sent_at;   // steps at which the ball sent
};

struct ReverseRunResult {
    long long j_max = 0;
    std::vector<ReverseBallRecord> balls;
};

// simulate R~ for tau_end steps. Balls do not interact, so `first_bin` /
// `last_bin` restrict the initial population without changing the law of any
// per-ball observable; by default all bins up to J_max are populated.
inline ReverseRunResult run_reverse(const SendSequence& seq, double lambda,
                                    const BlockTable& table, long long t0,
                                    long long tau_end, RngStream root,
                                    long long first_bin = 1,
                                    long long last_bin = -1) {
    if (tau_end < 1) throw SimError("run_reverse: tau_end must be >= 1");
    detail::require_normalized(seq, "run_reverse");
    ReverseRunResult res;
    long long bI = table.I_of_tau(tau_end) - 1;
    res.j_max = table.u[static_cast<std::size_t>(bI)] + tau_end;
    if (last_bin < 0) last_bin = res.j_max;
    if (first_bin < 1 || last_bin > res.j_max || first_bin > last_bin)
        throw SimError("run_reverse: bad bin range");

    // unstick rates per step, q[tau] = p_unstick(t0 + tau_end - tau + 1)
    std::vector<double> q(static_cast<std::size_t>(tau_end) + 1, 0.0);
    for (long long tau = 1; tau <= tau_end; ++tau)
        q[static_cast<std::size_t>(tau)] =
            p_unstick(table, t0, t0 + tau_end - tau + 1);

    auto init = root.split("init");
    for (long long j = first_bin; j <= last_bin; ++j) {
        long long cnt = init.split(static_cast<std::uint64_t>(j))
                            .poisson(lambda / seq.eval(j));
        for (long long i = 0; i < cnt; ++i) {
            auto bs = root.split("ball")
                          .split(static_cast<std::uint64_t>(j))
                          .split(static_cast<std::uint64_t>(i));
            ReverseBallRecord ball;
            ball.start_bin = j;
            ball.sojourns.assign(static_cast<std::size_t>(j), 0);
            long long bin = j;
            for (long long tau = 1; tau <= tau_end && bin >= 1; ++tau) {
                ++ball.sojourns[static_cast<std::size_t>(bin - 1)];
                if (bs.bernoulli(seq.eval(bin))) {
                    ball.sent_at.push_back(tau);
                    --bin;
                    if (bin == 0) ball.tau_leave = tau;
                }
                ball.flags.push_back(bs.bernoulli(q[static_cast<std::size_t>(tau)])
                                         ? 1
                                         : 0);
            }
            res.balls.push_back(std::move(ball));
        }
    }
    return res;
}

inline ReverseTrajectory to_trajectory(const ReverseBallRecord& ball) {
    if (ball.tau_leave < 0)
        throw SimError("to_trajectory: ball never left");
    ReverseTrajectory b;
    b.tau_leave = ball.tau_leave;
    b.start_bin = static_cast<int>(ball.start_bin);
    b.sojourns = ball.sojourns;
    b.flags = ball.flags;
    return b;
}

// |Fill_j| of one replica: balls that started in bin j, left within both
// tau_end and the block-i descent allowance, and never flagged at a send
inline long long fill_count(const ReverseRunResult& run, long long j,
                            const BlockTable& table, long long tau_end) {
    long long allow = 1 + descent_allowance(table, block_of_bin(table, j));
    long long cnt = 0;
    for (const auto& ball : run.balls) {
        if (ball.start_bin != j || ball.tau_leave < 0) continue;
        if (ball.tau_leave > tau_end || ball.tau_leave > allow) continue;
        bool clean = true;
        for (long long tau : ball.sent_at)
            if (ball.flags[static_cast<std::size_t>(tau - 1)]) {
                clean = false;
                break;
            }
        if (clean) ++cnt;
    }
    return cnt;
}

// ---------------------------------------------------------------------------
// domination experiment: per bin j in bins(tau_end), |Fill_j| across replicas
// against a Poisson(lambda / (4 p_j)) lower target

struct FillBinResult {
    long long j = 0;
    double target = 0.0;      // lambda / (4 p_j)
    Moments moments;
    bool mean_ok = false;     // mean >= target - sigmas * se
    double tail_half = 0.0;   // empirical P(count >= ceil(target/2))
    double tail_half_ref = 0.0;
    bool tail_half_ok = false;
    double tail_full = 0.0;   // empirical P(count >= ceil(target))
    double tail_full_ref = 0.0;
    bool tail_full_ok = false;
};

struct FillExperimentResult {
    std::vector<FillBinResult> bins;
    double max_abs_corr = 0.0;
    bool pass = true;
};

inline FillExperimentResult poisson_domination_experiment(
    const SendSequence& seq, double lambda, const BlockTable& table,
    long long t0, long long tau_end, long long replicas, std::uint64_t seed,
    double sigmas = 3.0) {
    if (replicas < 2) throw SimError("fill experiment: need >= 2 replicas");
    auto [lo, hi] = table.bins_of_tau(tau_end);
    std::vector<std::vector<double>> counts(
        static_cast<std::size_t>(hi - lo + 1));
    RngStream root(seed);
    for (long long r = 0; r < replicas; ++r) {
        auto run = run_reverse(seq, lambda, table, t0, tau_end,
                               root.split(static_cast<std::uint64_t>(r)), lo, hi);
        for (long long j = lo; j <= hi; ++j)
            counts[static_cast<std::size_t>(j - lo)].push_back(
                static_cast<double>(fill_count(run, j, table, tau_end)));
    }

    FillExperimentResult res;
    for (long long j = lo; j <= hi; ++j) {
        auto& xs = counts[static_cast<std::size_t>(j - lo)];
        FillBinResult b;
        b.j = j;
        b.target = lambda / (4.0 * seq.eval(j));
        b.moments = sample_moments(xs);
        b.mean_ok = b.moments.mean >= b.target - sigmas * b.moments.se_mean;

        auto tail = [&](long long thr, double& emp, double& ref, bool& ok) {
            long long c = 0;
            for (double x : xs)
                if (x >= static_cast<double>(thr)) ++c;
            emp = static_cast<double>(c) / b.moments.n;
            ref = 1.0 - poisson_cdf(thr - 1, b.target);
            double se = std::sqrt(std::max(emp * (1.0 - emp), 1e-12) / b.moments.n);
            ok = emp >= ref - sigmas * se;
        };
        tail(static_cast<long long>(std::ceil(b.target / 2.0)), b.tail_half,
             b.tail_half_ref, b.tail_half_ok);
        tail(static_cast<long long>(std::ceil(b.target)), b.tail_full,
             b.tail_full_ref, b.tail_full_ok);
        if (!(b.mean_ok && b.tail_half_ok && b.tail_full_ok)) res.pass = false;
        res.bins.push_back(b);
    }
    for (std::size_t a = 0; a < counts.size(); ++a)
        for (std::size_t b = a + 1; b < counts.size(); ++b)
            res.max_abs_corr = std::max(
                res.max_abs_corr,
                std::abs(sample_correlation(counts[a], counts[b])));
    return res;
}

} // namespace crlab
