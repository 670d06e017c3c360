#pragma once

// The acknowledgement-based backoff process X. Per step: Poisson(lambda)
// births into bin 0; every ball in bin j sends independently with p_j; if
// exactly one ball sends it escapes, otherwise all senders advance one bin.
// State is counts per bin, never ball identities.
//
// Substream labels are chosen to match the stuck-ball draws of the jammed
// process, so a standalone X run and a jammed run on the same seed are the
// coupled pair: bin counts of X equal stuck counts of Y step for step.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rng.hpp"
#include "sequences.hpp"

namespace crlab {

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BackoffStepInfo {
    long long t = 0;         // step index just executed (1-based)
    long long births = 0;
    long long senders = 0;
    bool escape = false;
    double noise = 0.0;      // f of the post-step state
    long long balls = 0;     // post-step population
};

// f(x) = lambda p_0 + sum_j x_j p_j
inline double noise(const std::vector<long long>& bins,
                    const SendSequence& seq, double lambda) {
    double f = lambda * seq.eval(0);
    for (std::size_t j = 0; j < bins.size(); ++j)
        if (bins[j] != 0)
            f += static_cast<double>(bins[j]) * seq.eval(static_cast<long long>(j));
    return f;
}

class BackoffProcess {
  public:
    BackoffProcess(SendSequence seq, double lambda, std::uint64_t seed,
                   std::optional<int> max_bin = std::nullopt)
        : seq_(std::move(seq)), lambda_(lambda), root_(seed),
          max_bin_(max_bin) {
        if (!(lambda >= 0.0)) throw SimError("backoff: lambda must be >= 0");
        bins_.assign(1, 0);
    }

    BackoffStepInfo step() {
        ++t_;
        auto st = root_.split(static_cast<std::uint64_t>(t_));
        long long births =
            st.split("birth").poisson(lambda_);
        bins_[0] += births;

        // sender draws per occupied bin; bin 0 at p_0 = 1 is deterministic
        // (no randomness consumed, matching the jammed process's newborns)
        std::vector<long long> send(bins_.size(), 0);
        long long total = 0;
        for (std::size_t j = 0; j < bins_.size(); ++j) {
            if (bins_[j] == 0) continue;
            double p = seq_.eval(static_cast<long long>(j));
            if (p >= 1.0)
                send[j] = bins_[j];
            else
                send[j] = st.split(static_cast<std::uint64_t>(j), "stuck")
                              .binomial(bins_[j], p);
            total += send[j];
        }

        bool escape = total == 1;
        if (escape) {
            for (std::size_t j = 0; j < send.size(); ++j)
                if (send[j] == 1) {
                    --bins_[j];
                    break;
                }
            ++escaped_;
        } else if (total > 1) {
            if (bins_.size() < send.size() + 1) bins_.resize(send.size() + 1, 0);
            for (std::size_t j = send.size(); j-- > 0;) {
                if (send[j] == 0) continue;
                bins_[j] -= send[j];
                if (max_bin_ && static_cast<long long>(j) >= *max_bin_)
                    dropped_ += send[j];  // truncated run: movers past J_obs leave
                else
                    bins_[j + 1] += send[j];
            }
        }
        trim();

        BackoffStepInfo info;
        info.t = t_;
        info.births = births;
        info.senders = total;
        info.escape = escape;
        info.noise = noise(bins_, seq_, lambda_);
        info.balls = population();
        return info;
    }

    const std::vector<long long>& bins() const { return bins_; }
    long long time() const { return t_; }
    long long escaped() const { return escaped_; }
    long long dropped() const { return dropped_; }
    long long population() const {
        long long s = 0;
        for (long long b : bins_) s += b;
        return s;
    }
    double current_noise() const { return noise(bins_, seq_, lambda_); }

  private:
    void trim() {
        while (bins_.size() > 1 && bins_.back() == 0) bins_.pop_back();
    }

    SendSequence seq_;
    double lambda_;
    RngStream root_;
    std::optional<int> max_bin_;
    std::vector<long long> bins_;
    long long t_ = 0;
    long long escaped_ = 0;
    long long dropped_ = 0;
};

struct BackoffRunSummary {
    long long steps = 0;
    long long total_births = 0;
    long long escapes = 0;
    long long quiet_steps = 0;       // steps with noise < 1
    long long final_population = 0;
    double final_noise = 0.0;
    double mean_noise = 0.0;
    std::vector<BackoffStepInfo> trace;  // filled only when keep_trace
};

inline BackoffRunSummary run_backoff(const SendSequence& seq, double lambda,
                                     long long steps, std::uint64_t seed,
                                     bool keep_trace = false,
                                     std::optional<int> max_bin = std::nullopt) {
    if (steps < 0) throw SimError("run_backoff: steps must be >= 0");
    BackoffProcess x(seq, lambda, seed, max_bin);
    BackoffRunSummary s;
    s.steps = steps;
    double noise_sum = 0.0;
    if (keep_trace) s.trace.reserve(static_cast<std::size_t>(steps));
    for (long long t = 0; t < steps; ++t) {
        auto info = x.step();
        s.total_births += info.births;
        if (info.escape) ++s.escapes;
        if (info.noise < 1.0) ++s.quiet_steps;
        noise_sum += info.noise;
        if (keep_trace) s.trace.push_back(info);
    }
    s.final_population = x.population();
    s.final_noise = x.current_noise();
    s.mean_noise = steps > 0 ? noise_sum / static_cast<double>(steps) : 0.0;
    return s;
}

} // namespace crlab
