// Acceptance gate: twelve pinned criteria, one line each. Exit code is
// nonzero if any criterion fails. Tolerances are fixed here, not tunable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "crlab/analysis.hpp"
#include "crlab/backoff.hpp"
#include "crlab/blocks.hpp"
#include "crlab/cli.hpp"
#include "crlab/jammed.hpp"
#include "crlab/sequences.hpp"
#include "crlab/unsticking.hpp"

using namespace crlab;

namespace {

int failures = 0;

void report(int n, const std::string& what, bool ok) {
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << n << ": "
              << what << "\n";
    if (!ok) ++failures;
}

// normalized constant-0.5 tail used by the toy block tables
SendSequence half_seq() {
    return SendSequence::explicit_prefix({1.0}, SendSequence::constant(0.5));
}

BlockTable toy_table(double zeta) {
    BlockOverrides ov;
    ov.kappa = 3;
    ov.I0 = 1;
    ov.tau_init = 20;
    ov.c_init = 4;
    ov.zeta = zeta;
    return build_block_table(half_seq(), 0.5, 0.5, 0.5, ov);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// --- criterion 1: X/Y coupling exactness -----------------------------------
bool criterion1() {
    auto r = check_coupling_xy(SendSequence::beb(), 0.5, 32, 10'000, 10, 101);
    return r.pass;
}

// --- criterion 2: Y/T coupling ----------------------------------------------
bool criterion2() {
    auto r = check_coupling_yt(SendSequence::beb(), 0.5, 32, 1'000, 10, 202);
    return r.pass;
}

// --- criterion 3: time reversal, exhaustive ---------------------------------
bool criterion3() {
    auto table = toy_table(32.0);
    for (long long tau_end = 1; tau_end <= 4; ++tau_end) {
        int max_bin = static_cast<int>(std::min<long long>(3, tau_end));
        auto r = check_time_reversal(half_seq(), 0.5, table, 2, tau_end,
                                     max_bin);
        if (!r.pass) return false;
    }
    return true;
}

// --- criterion 4: per-trajectory Poisson law --------------------------------
bool criterion4() {
    auto seq = half_seq();
    auto table = toy_table(16.0);
    const long long t0 = 0, tau_end = 2, replicas = 100'000;
    const double lambda = 0.5;

    // three disjoint reverse trajectories over a 2-step horizon
    std::vector<ReverseTrajectory> targets(3);
    targets[0].start_bin = 1;
    targets[0].tau_leave = 1;
    targets[0].sojourns = {1};
    targets[0].flags = {0};
    targets[1].start_bin = 1;
    targets[1].tau_leave = 2;
    targets[1].sojourns = {2};
    targets[1].flags = {0, 0};
    targets[2].start_bin = 2;
    targets[2].tau_leave = 2;
    targets[2].sojourns = {1, 1};
    targets[2].flags = {0, 1};

    std::vector<std::vector<double>> counts(targets.size());
    RngStream root(404);
    for (long long r = 0; r < replicas; ++r) {
        auto run = run_reverse(seq, lambda, table, t0, tau_end,
                               root.split(static_cast<std::uint64_t>(r)));
        std::vector<long long> c(targets.size(), 0);
        for (const auto& ball : run.balls) {
            if (ball.tau_leave < 0) continue;
            for (std::size_t k = 0; k < targets.size(); ++k) {
                const auto& tgt = targets[k];
                if (ball.start_bin == tgt.start_bin &&
                    ball.tau_leave == tgt.tau_leave &&
                    ball.sojourns == tgt.sojourns && ball.flags == tgt.flags)
                    ++c[k];
            }
        }
        for (std::size_t k = 0; k < targets.size(); ++k)
            counts[k].push_back(static_cast<double>(c[k]));
    }

    for (std::size_t k = 0; k < targets.size(); ++k) {
        double mu = trajectory_mean_reverse(targets[k], seq, lambda, table, t0,
                                            tau_end);
        auto m = sample_moments(counts[k]);
        if (std::abs(m.mean - mu) > 3.0 * m.se_mean) return false;
        // Poisson: variance equals the mean
        if (std::abs(m.var - mu) > 3.0 * m.se_var) return false;
    }
    double corr_tol = 4.0 / std::sqrt(static_cast<double>(replicas));
    for (std::size_t a = 0; a < counts.size(); ++a)
        for (std::size_t b = a + 1; b < counts.size(); ++b)
            if (std::abs(sample_correlation(counts[a], counts[b])) > corr_tol)
                return false;
    return true;
}

// --- criterion 5: fill domination -------------------------------------------
bool criterion5() {
    auto res = poisson_domination_experiment(half_seq(), 0.5, toy_table(32.0),
                                             0, 24, 10'000, 505, 3.0);
    for (const auto& b : res.bins)
        if (!b.mean_ok) return false;
    return true;
}

// --- criterion 6: empty-stucksend bound -------------------------------------
bool criterion6() {
    auto r = check_empty_stucksend(SendSequence::beb(), 0.5, {1.0, 2.0, 4.0},
                                   100'000, 606);
    return r.pass;
}

// --- criterion 7: Chernoff bounds vs exact CDF oracles -----------------------
bool criterion7() {
    for (double mu : {1.0, 8.0, 64.0}) {
        for (double delta : {0.25, 0.5, 0.9}) {
            double bound = chernoff_lower(mu, delta);
            auto k = static_cast<long long>(std::floor((1.0 - delta) * mu));
            if (poisson_cdf(k, mu) > bound + 1e-12) return false;
            auto n = static_cast<long long>(4.0 * mu);
            if (binomial_cdf(k, n, 0.25) > bound + 1e-12) return false;
        }
    }
    for (double mu : {1.0, 4.0, 16.0}) {
        for (double x : {1.5, 2.0, std::exp(1.0), 4.0, 10.0}) {
            double bound = chernoff_upper(mu, x);
            auto thr = static_cast<long long>(std::ceil(mu * x));
            if (1.0 - poisson_cdf(thr - 1, mu) > bound + 1e-12) return false;
            auto n = static_cast<long long>(4.0 * mu);
            if (1.0 - binomial_cdf(thr - 1, n, 0.25) > bound + 1e-12)
                return false;
        }
    }
    return true;
}

// --- criterion 8: mu_tau DP vs Monte Carlo ----------------------------------
bool criterion8() {
    // the all-ones closed form first: mu_tau = tau exactly
    auto ones = mu_tau_table(SendSequence::constant(1.0), 256);
    for (long long tau = 0; tau <= 256; ++tau)
        if (std::abs(ones[static_cast<std::size_t>(tau)] -
                     static_cast<double>(tau)) > 1e-9)
            return false;

    const long long samples = 100'000;
    std::uint64_t seed = 808;
    for (const auto& seq :
         {SendSequence::beb(), SendSequence::polynomial(2.0)}) {
        for (long long tau : {16LL, 64LL, 256LL}) {
            RngStream s(seed++);
            double sum = 0, sum2 = 0;
            for (long long i = 0; i < samples; ++i) {
                long long acc = 0, count = 0;
                for (long long j = 0; acc <= tau; ++j) {
                    acc += s.geometric1(seq.eval(j));
                    if (acc <= tau) ++count;
                }
                sum += static_cast<double>(count);
                sum2 += static_cast<double>(count) * static_cast<double>(count);
            }
            double mc = sum / static_cast<double>(samples);
            double var = sum2 / static_cast<double>(samples) - mc * mc;
            double se = std::sqrt(std::max(var, 0.0) /
                                  static_cast<double>(samples));
            if (std::abs(mu_tau(seq, tau) - mc) > 3.0 * se) return false;
        }
    }
    return true;
}

// --- criterion 9: stationarity of the jammed initial profile -----------------
bool criterion9() {
    auto r = check_stationarity(SendSequence::beb(), 0.5, 16, 12, 1'000, 500,
                                909, 4.0, 1e-3);
    return r.pass;
}

// --- criterion 10: classifier goldens ----------------------------------------
bool criterion10() {
    if (classify(SendSequence::double_exponential(), 0.5, 2000).label !=
        Verdict::Killer)
        return false;
    if (classify(SendSequence::polynomial(2.0), 0.5, 2000).label !=
        Verdict::KellyMacPhee)
        return false;
    if (classify(SendSequence::beb(), 0.5, 2000).label != Verdict::Suitable)
        return false;
    // the pinned BEB certificate at (eta, nu) = (0.5, 0.4)
    auto cert = check_suitable(SendSequence::beb(), 0.5, 0.5, 0.4, 2000);
    if (!cert.suitable) return false;
    auto il = SendSequence::interleaved(0.1, {0, 2, 4, 16, 64, 256},
                                        SendSequence::constant(0.5));
    return classify(il, 0.5, 2500).label == Verdict::LcedUndecided;
}

// --- criterion 11: desk-scale instability evidence ---------------------------
bool criterion11() {
    const long long T = 100'000;
    const int seeds = 20;
    std::vector<double> at_t, at_tenth;
    int slow = 0;
    for (int s = 0; s < seeds; ++s) {
        auto seed = 1100 + static_cast<std::uint64_t>(s);
        auto full = run_backoff(SendSequence::beb(), 0.6, T, seed);
        auto tenth = run_backoff(SendSequence::beb(), 0.6, T / 10, seed);
        at_t.push_back(static_cast<double>(full.final_population));
        at_tenth.push_back(static_cast<double>(tenth.final_population));
        double rate = static_cast<double>(full.escapes) /
                      static_cast<double>(T);
        if (rate < 0.6) ++slow;
    }
    if (median(at_t) < 5.0 * median(at_tenth)) return false;
    return slow >= 18;
}

// --- criterion 12: block-table identities ------------------------------------
bool criterion12() {
    for (int kappa = 3; kappa <= 12; ++kappa) {
        BlockOverrides ov;
        ov.kappa = kappa;
        ov.I0 = 1;
        ov.tau_init = 20;
        ov.c_init = 4;
        BlockBudget budget;
        budget.max_blocks = 6;
        auto t = build_block_table(SendSequence::constant(0.5), 0.5, 0.5, 0.5,
                                   ov, budget);
        if (t.num_blocks() < 4) return false;
        long long u_expect = 1;
        for (int i = 1; i <= t.num_blocks(); ++i) {
            auto si = static_cast<std::size_t>(i);
            if (t.u[si] != u_expect) return false;
            if (i >= 2) {
                long long size_expect =
                    u_expect * (kappa - 1) / kappa;  // u(i) (kappa-1)/kappa
                if (t.bsize[si] != size_expect) return false;
                if (t.ell[si] != t.u[si - 1] + 1) return false;
                // telescoping: tau_i - tau_{i-1} = kappa sum_{k<=I0+i} ceil(W)
                long long idx_i = i - t.I0, idx_prev = idx_i - 1;
                if (idx_prev >= 1 &&
                    idx_i < static_cast<long long>(t.tau.size())) {
                    long long sum = 0;
                    for (int k = 1; k <= i; ++k)
                        sum += t.ceilW[static_cast<std::size_t>(k)];
                    if (t.tau[static_cast<std::size_t>(idx_i)] -
                            t.tau[static_cast<std::size_t>(idx_prev)] !=
                        t.kappa * sum)
                        return false;
                }
            }
            if (u_expect > (1LL << 62) / kappa) break;
            u_expect *= kappa;
        }
    }

    // bins(tau) lower bound on a feasible toy table (tau_init on the schedule)
    BlockOverrides ov;
    ov.kappa = 3;
    ov.I0 = 1;
    ov.c_init = 4;
    ov.tau_init = 20;
    auto pre = build_block_table(SendSequence::constant(0.5), 0.5, 0.5, 0.5, ov);
    ov.tau_init = pre.tau[1];
    auto t = build_block_table(SendSequence::constant(0.5), 0.5, 0.5, 0.5, ov);
    double denom = 2.0 * t.kappa * t.kappa * std::log(1.0 / t.nu);
    for (std::size_t i = 1; i < t.tau.size(); ++i) {
        for (long long tau : {t.tau[i - 1], t.tau[i] - 1}) {
            if (tau < t.tau_init) continue;
            if (static_cast<double>(t.bins_count_of_tau(tau)) <=
                std::log(static_cast<double>(tau)) / denom)
                return false;
        }
    }
    return true;
}

} // namespace

int main() {
    report(1, "X/Y coupling exact (BEB, lambda 0.5, 32 bins, 10^4 steps, 10 seeds)",
           criterion1());
    report(2, "Y/T coupling exact, Y unsticks <= T unsticks (10^3 steps, 10 seeds)",
           criterion2());
    report(3, "time-reversal rates within 1e-12, send sets and roundtrip exact",
           criterion3());
    report(4, "per-trajectory counts Poisson: mean/var within 3 sigma, corr <= 4/sqrt(10^5)",
           criterion4());
    report(5, "fill mean >= lambda/(4 p_j) - 3 sigma on the scaled table",
           criterion5());
    report(6, "empty-stucksend frequency <= exp(-f/3) + 3 sigma for f in {1,2,4}",
           criterion6());
    report(7, "Chernoff bounds dominate exact tails on the whole grid",
           criterion7());
    report(8, "mu_tau DP within 3 SE of Monte Carlo; all-ones DP exact",
           criterion8());
    report(9, "jammed profile stationary: means within 4 sigma, chi-square at 1e-3",
           criterion9());
    report(10, "classifier goldens: killer / kelly-macphee / suitable / lced-undecided",
           criterion10());
    report(11, "BEB lambda 0.6 backlog grows >= 5x per decade; success rate < lambda in >= 18/20",
           criterion11());
    report(12, "block identities for kappa 3..12 and the bins(tau) lower bound",
           criterion12());
    if (failures) {
        std::cout << failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all 12 criteria passed\n";
    return 0;
}
