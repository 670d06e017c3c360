#pragma once

// The externally-jammed process Y, the two-stream process T, and a merged
// coupled Y/T simulator. Y lives on bins 1..J_obs, starts in its stationary
// profile (Poisson(lambda/p_j) per bin, all unstuck), never removes balls
// (escapes are disabled): every sender advances, and when exactly one ball of
// newstuck = stuck + newborns sends, that one ball becomes unstuck. Requires
// a normalized sequence (p_0 = 1): newborns always send and land in bin 1.
//
// Truncation at J_obs drops balls that move past the last bin. Inflow to bin
// j only comes from bin j-1, so marginals of bins <= J_obs are unaffected.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "backoff.hpp"
#include "blocks.hpp"
#include "rng.hpp"
#include "sequences.hpp"

namespace crlab {

// f over a stuck vector (indices 1..J_obs): lambda + sum_j stuck_j p_j
inline double stuck_noise(const std::vector<long long>& stuck,
                          const SendSequence& seq, double lambda) {
    double f = lambda;
    for (std::size_t j = 1; j < stuck.size(); ++j)
        if (stuck[j] != 0)
            f += static_cast<double>(stuck[j]) *
                 seq.eval(static_cast<long long>(j));
    return f;
}

struct JammedStepInfo {
    long long t = 0;
    long long births = 0;
    long long stucksend = 0;
    bool unstick = false;
    double noise_stuck = 0.0;  // f of the post-step stuck vector
};

namespace detail {

inline void require_normalized(const SendSequence& seq, const char* who) {
    if (std::abs(seq.eval(0) - 1.0) > 1e-12)
        throw SimError(std::string(who) + ": requires p_0 = 1 (normalize first)");
}

} // namespace detail

class JammedProcess {
  public:
    JammedProcess(SendSequence seq, double lambda, int j_obs,
                  std::uint64_t seed)
        : seq_(std::move(seq)), lambda_(lambda), j_obs_(j_obs), root_(seed) {
        if (!(lambda >= 0.0)) throw SimError("jammed: lambda must be >= 0");
        if (j_obs < 1) throw SimError("jammed: J_obs must be >= 1");
        detail::require_normalized(seq_, "jammed");
        stuck_.assign(static_cast<std::size_t>(j_obs) + 1, 0);
        unstuck_.assign(static_cast<std::size_t>(j_obs) + 1, 0);
        auto init = root_.split("init");
        for (int j = 1; j <= j_obs; ++j)
            unstuck_[static_cast<std::size_t>(j)] =
                init.split(static_cast<std::uint64_t>(j))
                    .poisson(lambda_ / seq_.eval(j));
    }

    JammedStepInfo step() {
        ++t_;
        auto st = root_.split(static_cast<std::uint64_t>(t_));
        long long births = st.split("birth").poisson(lambda_);

        auto n = static_cast<std::size_t>(j_obs_);
        std::vector<long long> s_stuck(n + 1, 0), s_unstuck(n + 1, 0);
        long long stucksend = births;  // newborns always send (p_0 = 1)
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

        // all senders advance (no escapes); movers past J_obs are dropped
        for (std::size_t j = n; j >= 1; --j) {
            stuck_[j] -= s_stuck[j];
            unstuck_[j] -= s_unstuck[j];
            if (j < n) {
                stuck_[j + 1] += s_stuck[j];
                unstuck_[j + 1] += s_unstuck[j];
            } else {
                dropped_ += s_stuck[j] + s_unstuck[j];
            }
        }
        stuck_[1] += births;

        bool unstick = stucksend == 1;
        if (unstick) {
            ++unstick_events_;
            // locate the lone newstuck sender's destination bin
            std::size_t dest = 1;  // a lone newborn lands (stuck) in bin 1
            for (std::size_t j = 1; j <= n; ++j)
                if (s_stuck[j] == 1) {
                    dest = j + 1;
                    break;
                }
            if (dest <= n) {
                --stuck_[dest];
                ++unstuck_[dest];
            }
        }

        JammedStepInfo info;
        info.t = t_;
        info.births = births;
        info.stucksend = stucksend;
        info.unstick = unstick;
        info.noise_stuck = stuck_noise(stuck_, seq_, lambda_);
        return info;
    }

    // the coupled backoff view: |b_j(X)| = |stuck_j(Y)|
    const std::vector<long long>& stuck() const { return stuck_; }
    const std::vector<long long>& unstuck() const { return unstuck_; }
    long long total(std::size_t j) const { return stuck_[j] + unstuck_[j]; }
    long long time() const { return t_; }
    long long unstick_events() const { return unstick_events_; }
    long long dropped() const { return dropped_; }
    int j_obs() const { return j_obs_; }

  private:
    SendSequence seq_;
    double lambda_;
    int j_obs_;
    RngStream root_;
    std::vector<long long> stuck_, unstuck_;
    long long t_ = 0;
    long long unstick_events_ = 0;
    long long dropped_ = 0;
};

// ---------------------------------------------------------------------------
// two independent rate-lambda/2 jammed streams sharing one channel. Per step
// both streams make their own births and sends; if exactly one stream has a
// nonempty set of newstuck senders, one uniformly chosen ball of that set
// becomes unstuck (possibly many candidates, exactly one unsticks).

struct TwoStreamStepInfo {
    long long t = 0;
    long long births[2] = {0, 0};
    long long stucksend[2] = {0, 0};
    bool unstick = false;
    int unstick_stream = -1;
    double noise_stuck[2] = {0.0, 0.0};
};

class TwoStreamProcess {
  public:
    TwoStreamProcess(SendSequence seq, double lambda, int j_obs,
                     std::uint64_t seed)
        : seq_(std::move(seq)), lambda_(lambda), j_obs_(j_obs), root_(seed) {
        if (!(lambda > 0.0)) throw SimError("two-stream: lambda must be > 0");
        if (j_obs < 1) throw SimError("two-stream: J_obs must be >= 1");
        detail::require_normalized(seq_, "two-stream");
        for (int c = 0; c < 2; ++c) {
            stuck_[c].assign(static_cast<std::size_t>(j_obs) + 1, 0);
            unstuck_[c].assign(static_cast<std::size_t>(j_obs) + 1, 0);
            auto init = root_.split(static_cast<std::uint64_t>(c), "init");
            for (int j = 1; j <= j_obs; ++j)
                unstuck_[c][static_cast<std::size_t>(j)] =
                    init.split(static_cast<std::uint64_t>(j))
                        .poisson(lambda_ / (2.0 * seq_.eval(j)));
        }
    }

    TwoStreamStepInfo step() {
        ++t_;
        auto st = root_.split(static_cast<std::uint64_t>(t_));
        auto n = static_cast<std::size_t>(j_obs_);
        TwoStreamStepInfo info;
        info.t = t_;

        long long births[2];
        std::vector<long long> s_stuck[2], s_unstuck[2];
        for (int c = 0; c < 2; ++c) {
            auto sc = st.split(static_cast<std::uint64_t>(c));
            births[c] = sc.split("birth").poisson(lambda_ / 2.0);
            s_stuck[c].assign(n + 1, 0);
            s_unstuck[c].assign(n + 1, 0);
            long long ss = births[c];
            for (std::size_t j = 1; j <= n; ++j) {
                double p = seq_.eval(static_cast<long long>(j));
                if (stuck_[c][j] > 0)
                    s_stuck[c][j] =
                        p >= 1.0 ? stuck_[c][j]
                                 : sc.split(static_cast<std::uint64_t>(j), "stuck")
                                       .binomial(stuck_[c][j], p);
                if (unstuck_[c][j] > 0)
                    s_unstuck[c][j] =
                        p >= 1.0
                            ? unstuck_[c][j]
                            : sc.split(static_cast<std::uint64_t>(j), "unstuck")
                                  .binomial(unstuck_[c][j], p);
                ss += s_stuck[c][j];
            }
            info.births[c] = births[c];
            info.stucksend[c] = ss;
        }

        for (int c = 0; c < 2; ++c) {
            for (std::size_t j = n; j >= 1; --j) {
                stuck_[c][j] -= s_stuck[c][j];
                unstuck_[c][j] -= s_unstuck[c][j];
                if (j < n) {
                    stuck_[c][j + 1] += s_stuck[c][j];
                    unstuck_[c][j + 1] += s_unstuck[c][j];
                } else {
                    dropped_ += s_stuck[c][j] + s_unstuck[c][j];
                }
            }
            stuck_[c][1] += births[c];
        }

        // exactly one stream with newstuck senders: one of them unsticks
        bool a = info.stucksend[0] > 0, b = info.stucksend[1] > 0;
        if (a != b) {
            int c = a ? 0 : 1;
            info.unstick = true;
            info.unstick_stream = c;
            ++unstick_events_;
            // uniform over that stream's newstuck senders, by destination
            std::vector<double> w;
            std::vector<std::size_t> dest;
            if (births[c] > 0) {
                w.push_back(static_cast<double>(births[c]));
                dest.push_back(1);
            }
            for (std::size_t j = 1; j <= n; ++j)
                if (s_stuck[c][j] > 0) {
                    w.push_back(static_cast<double>(s_stuck[c][j]));
                    dest.push_back(j + 1);
                }
            auto pick = st.split("unstick-choice").categorical(w);
            std::size_t d = dest[pick];
            if (d <= n) {
                --stuck_[c][d];
                ++unstuck_[c][d];
            }
        }

        for (int c = 0; c < 2; ++c)
            info.noise_stuck[c] = stuck_noise(stuck_[c], seq_, lambda_);
        return info;
    }

    const std::vector<long long>& stuck(int c) const { return stuck_[c]; }
    const std::vector<long long>& unstuck(int c) const { return unstuck_[c]; }
    long long time() const { return t_; }
    long long unstick_events() const { return unstick_events_; }
    int j_obs() const { return j_obs_; }

  private:
    SendSequence seq_;
    double lambda_;
    int j_obs_;
    RngStream root_;
    std::vector<long long> stuck_[2], unstuck_[2];
    long long t_ = 0;
    long long unstick_events_ = 0;
    long long dropped_ = 0;
};

// both streams hold at least c_init stuck balls in bin j_min
inline bool detect_e_init(const TwoStreamProcess& t, long long c_init,
                          long long j_min) {
    if (j_min < 1 || j_min > t.j_obs())
        throw SimError("detect_e_init: j_min outside observed bins");
    auto j = static_cast<std::size_t>(j_min);
    return t.stuck(0)[j] >= c_init && t.stuck(1)[j] >= c_init;
}

// run the two-stream process forward and report the first step t in
// [1, horizon] where both streams hold >= c_init stuck balls in bin j_min
// (-1 if it never happens within the horizon)
inline long long detect_e_init_first(TwoStreamProcess& proc, long long c_init,
                                     long long j_min, long long horizon) {
    for (long long t = 1; t <= horizon; ++t) {
        proc.step();
        if (detect_e_init(proc, c_init, j_min)) return t;
    }
    return -1;
}

// (C,t)-jammed for tau: f(stuckvect(C, t+tau-1)) >= zeta |bins(tau-1)|.
// noise_by_time[s] must hold f of stream C's stuck vector after step s.
inline bool jam_predicate(const std::vector<double>& noise_by_time,
                          long long t, long long tau, const BlockTable& table) {
    if (tau < 1) throw SimError("jam_predicate: tau must be >= 1");
    auto idx = static_cast<std::size_t>(t + tau - 1);
    if (idx >= noise_by_time.size())
        throw SimError("jam_predicate: step beyond recorded run");
    return noise_by_time[idx] >=
           table.zeta * static_cast<double>(table.bins_count_of_tau(tau - 1));
}

inline bool e_jam(const std::vector<double>& noise_by_time, long long t,
                  long long tau, const BlockTable& table) {
    for (long long s = 1; s <= tau; ++s)
        if (!jam_predicate(noise_by_time, t, s, table)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// merged coupled Y/T simulator. One ball population carries both labels: the
// stream it belongs to in T and its stuck/unstuck status in both processes.
// Categories per (stream, bin): ss = stuck in Y and in T, su = stuck in Y
// only, uu = unstuck in both. "Unstuck in Y but stuck in T" cannot occur,
// which is exactly the coupling claim; the simulator asserts it stays out of
// reach by construction.

struct CoupledYTStepInfo {
    long long t = 0;
    bool unstick_y = false;
    bool unstick_t = false;
};

class CoupledYT {
  public:
    CoupledYT(SendSequence seq, double lambda, int j_obs, std::uint64_t seed)
        : seq_(std::move(seq)), lambda_(lambda), j_obs_(j_obs), root_(seed) {
        if (!(lambda > 0.0)) throw SimError("coupled-yt: lambda must be > 0");
        if (j_obs < 1) throw SimError("coupled-yt: J_obs must be >= 1");
        detail::require_normalized(seq_, "coupled-yt");
        auto n = static_cast<std::size_t>(j_obs) + 1;
        for (int c = 0; c < 2; ++c) {
            ss_[c].assign(n, 0);
            su_[c].assign(n, 0);
            uu_[c].assign(n, 0);
            auto init = root_.split(static_cast<std::uint64_t>(c), "init");
            for (int j = 1; j <= j_obs; ++j)
                uu_[c][static_cast<std::size_t>(j)] =
                    init.split(static_cast<std::uint64_t>(j))
                        .poisson(lambda_ / (2.0 * seq_.eval(j)));
        }
    }

    CoupledYTStepInfo step() {
        ++t_;
        auto st = root_.split(static_cast<std::uint64_t>(t_));
        auto n = static_cast<std::size_t>(j_obs_);
        CoupledYTStepInfo info;
        info.t = t_;

        long long births[2];
        std::vector<long long> snd_ss[2], snd_su[2], snd_uu[2];
        long long stucksend_t[2] = {0, 0};
        long long stucksend_y = 0;
        for (int c = 0; c < 2; ++c) {
            auto sc = st.split(static_cast<std::uint64_t>(c));
            births[c] = sc.split("birth").poisson(lambda_ / 2.0);
            snd_ss[c].assign(n + 1, 0);
            snd_su[c].assign(n + 1, 0);
            snd_uu[c].assign(n + 1, 0);
            stucksend_t[c] += births[c];
            stucksend_y += births[c];
            for (std::size_t j = 1; j <= n; ++j) {
                double p = seq_.eval(static_cast<long long>(j));
                auto draw = [&](const char* cat, long long cnt) {
                    if (cnt == 0) return 0LL;
                    if (p >= 1.0) return cnt;
                    return sc.split(static_cast<std::uint64_t>(j), cat)
                        .binomial(cnt, p);
                };
                snd_ss[c][j] = draw("ss", ss_[c][j]);
                snd_su[c][j] = draw("su", su_[c][j]);
                snd_uu[c][j] = draw("uu", uu_[c][j]);
                stucksend_t[c] += snd_ss[c][j];
                stucksend_y += snd_ss[c][j] + snd_su[c][j];
            }
        }

        for (int c = 0; c < 2; ++c) {
            for (std::size_t j = n; j >= 1; --j) {
                ss_[c][j] -= snd_ss[c][j];
                su_[c][j] -= snd_su[c][j];
                uu_[c][j] -= snd_uu[c][j];
                if (j < n) {
                    ss_[c][j + 1] += snd_ss[c][j];
                    su_[c][j + 1] += snd_su[c][j];
                    uu_[c][j + 1] += snd_uu[c][j];
                }
            }
            ss_[c][1] += births[c];
        }

        // Y rule first: a lone newstuck-in-Y sender unsticks in Y
        int y_stream = -1;
        std::size_t y_dest = 0;
        bool y_from_ss = false;
        if (stucksend_y == 1) {
            info.unstick_y = true;
            ++unsticks_y_;
            for (int c = 0; c < 2 && y_stream < 0; ++c) {
                if (births[c] == 1) {
                    y_stream = c;
                    y_dest = 1;
                    y_from_ss = true;
                }
                for (std::size_t j = 1; j <= n && y_stream < 0; ++j) {
                    if (snd_ss[c][j] == 1) {
                        y_stream = c;
                        y_dest = j + 1;
                        y_from_ss = true;
                    } else if (snd_su[c][j] == 1) {
                        y_stream = c;
                        y_dest = j + 1;
                    }
                }
            }
        }

        // T rule: exactly one stream with newstuck-in-T senders
        bool a = stucksend_t[0] > 0, b = stucksend_t[1] > 0;
        if (a != b) {
            int c = a ? 0 : 1;
            info.unstick_t = true;
            ++unsticks_t_;
            std::vector<double> w;
            std::vector<std::size_t> dest;
            if (births[c] > 0) {
                w.push_back(static_cast<double>(births[c]));
                dest.push_back(1);
            }
            for (std::size_t j = 1; j <= n; ++j)
                if (snd_ss[c][j] > 0) {
                    w.push_back(static_cast<double>(snd_ss[c][j]));
                    dest.push_back(j + 1);
                }
            auto pick = st.split("unstick-choice").categorical(w);
            std::size_t d = dest[pick];
            if (info.unstick_y && y_from_ss) {
                // the lone Y-stuck sender is also the only T candidate
                if (c != y_stream || d != y_dest)
                    throw SimError("coupled-yt: coupling consistency broken");
                if (d <= n) {
                    --ss_[c][d];
                    ++uu_[c][d];
                }
            } else if (d <= n) {
                --ss_[c][d];
                ++su_[c][d];
            }
        } else if (info.unstick_y) {
            // Y unsticks a ball that was already unstuck in T
            if (y_from_ss)
                throw SimError("coupled-yt: Y unstick without T unstick");
            if (y_dest <= n) {
                --su_[y_stream][y_dest];
                ++uu_[y_stream][y_dest];
            }
        }

        return info;
    }

    // bin sizes agree between Y and T by shared motion; exposed separately
    // so tests state the equality rather than assume it
    long long y_bin(std::size_t j) const {
        return ss_[0][j] + su_[0][j] + uu_[0][j] + ss_[1][j] + su_[1][j] +
               uu_[1][j];
    }
    long long t_bin(int c, std::size_t j) const {
        return ss_[c][j] + su_[c][j] + uu_[c][j];
    }
    long long y_stuck(std::size_t j) const {
        return ss_[0][j] + su_[0][j] + ss_[1][j] + su_[1][j];
    }
    long long t_stuck(int c, std::size_t j) const { return ss_[c][j]; }
    long long y_unstuck(std::size_t j) const {
        return uu_[0][j] + uu_[1][j];
    }
    long long t_unstuck(std::size_t j) const {
        return su_[0][j] + su_[1][j] + uu_[0][j] + uu_[1][j];
    }
    long long unsticks_y() const { return unsticks_y_; }
    long long unsticks_t() const { return unsticks_t_; }
    long long time() const { return t_; }
    int j_obs() const { return j_obs_; }

  private:
    SendSequence seq_;
    double lambda_;
    int j_obs_;
    RngStream root_;
    std::vector<long long> ss_[2], su_[2], uu_[2];
    long long t_ = 0;
    long long unsticks_y_ = 0;
    long long unsticks_t_ = 0;
};

} // namespace crlab
