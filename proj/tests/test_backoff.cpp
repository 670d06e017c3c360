// The forward backoff process: step rules, conservation, noise, and the
// p_0-normalization domination check.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "crlab/analysis.hpp"
#include "crlab/backoff.hpp"

using namespace crlab;
using Catch::Approx;

TEST_CASE("noise golden") {
    // lambda p_0 + 2 * p_1 + 1 * p_3 = 0.3 + 1.0 + 0.125 with BEB
    std::vector<long long> bins = {0, 2, 0, 1};
    REQUIRE(noise(bins, SendSequence::beb(), 0.3) == Approx(1.425));
    REQUIRE(noise({}, SendSequence::beb(), 0.7) == Approx(0.7));
}

TEST_CASE("expected senders per step equals the noise (MC oracle)") {
    // fixed state: 2 balls in bin 1, 1 ball in bin 3, normalized BEB
    auto seq = SendSequence::beb();
    double lambda = 0.3;
    std::vector<long long> bins = {0, 2, 0, 1};
    double f = noise(bins, seq, lambda);
    RngStream root(77);
    const long long N = 100'000;
    double sum = 0, sum2 = 0;
    for (long long i = 0; i < N; ++i) {
        auto st = root.split(static_cast<std::uint64_t>(i));
        long long senders = st.split("birth").poisson(lambda);  // p_0 = 1
        for (std::size_t j = 1; j < bins.size(); ++j)
            if (bins[j] > 0)
                senders += st.split(static_cast<std::uint64_t>(j))
                               .binomial(bins[j], seq.eval(static_cast<long long>(j)));
        sum += (double)senders;
        sum2 += (double)senders * (double)senders;
    }
    double mean = sum / N;
    double se = std::sqrt(std::max(sum2 / N - mean * mean, 0.0) / N);
    REQUIRE(std::abs(mean - f) <= 3.0 * se);
}

TEST_CASE("lambda = 0 run stays empty") {
    auto s = run_backoff(SendSequence::beb(), 0.0, 500, 3);
    REQUIRE(s.total_births == 0);
    REQUIRE(s.escapes == 0);
    REQUIRE(s.final_population == 0);
    REQUIRE(s.final_noise == 0.0);
}

TEST_CASE("ball conservation: backlog = births - escapes - dropped") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        BackoffProcess x(SendSequence::beb(), 0.6, seed);
        long long births = 0;
        for (int t = 0; t < 3000; ++t) {
            auto info = x.step();
            births += info.births;
            REQUIRE(info.balls == x.population());
        }
        REQUIRE(x.population() == births - x.escaped());
        for (long long b : x.bins()) REQUIRE(b >= 0);
    }
    // truncated run: movers past the cap leave through `dropped`
    BackoffProcess x(SendSequence::beb(), 0.9, 11, 4);
    long long births = 0;
    for (int t = 0; t < 3000; ++t) births += x.step().births;
    REQUIRE(x.population() == births - x.escaped() - x.dropped());
    REQUIRE(static_cast<int>(x.bins().size()) <= 5);
}

TEST_CASE("lone sender escapes, multiple senders advance") {
    // all-ones sequence: every ball sends every step, so a step with exactly
    // one birth into an empty system escapes immediately; a step with k >= 2
    // births advances all k to bin 1, where they stay in lockstep forever
    BackoffProcess x(SendSequence::constant(1.0), 0.9, 5);
    long long prev_pop = 0;
    for (int t = 0; t < 200; ++t) {
        auto info = x.step();
        if (info.senders == 1) REQUIRE(info.escape);
        if (info.senders != 1) REQUIRE_FALSE(info.escape);
        // with p = 1 everywhere a cohort never splits: population only
        // changes by births and single escapes
        REQUIRE(info.balls == prev_pop + info.births - (info.escape ? 1 : 0));
        prev_pop = info.balls;
    }
}

TEST_CASE("escape removes exactly the lone sender's ball") {
    // explicit two-bin sequence p = (1, tiny): newborns send, bin-1 balls
    // essentially never do. A lone birth escapes from bin 0 before ever
    // entering bin 1.
    auto seq = SendSequence::explicit_prefix({1.0, 1e-12},
                                             SendSequence::constant(1e-12));
    BackoffProcess x(seq, 0.2, 9);
    long long births = 0;
    for (int t = 0; t < 2000; ++t) births += x.step().births;
    // nearly every ball either escaped alone or collided into bin 1
    REQUIRE(x.population() == births - x.escaped());
}

TEST_CASE("run_backoff summary fields are consistent") {
    auto s = run_backoff(SendSequence::beb(), 0.6, 2000, 17, true);
    REQUIRE(s.trace.size() == 2000);
    long long births = 0, escapes = 0, quiet = 0;
    for (auto& i : s.trace) {
        births += i.births;
        escapes += i.escape ? 1 : 0;
        quiet += i.noise < 1.0 ? 1 : 0;
    }
    REQUIRE(births == s.total_births);
    REQUIRE(escapes == s.escapes);
    REQUIRE(quiet == s.quiet_steps);
    REQUIRE(s.final_population == s.trace.back().balls);

    // determinism: identical seed, identical run
    auto s2 = run_backoff(SendSequence::beb(), 0.6, 2000, 17, true);
    REQUIRE(s2.final_population == s.final_population);
    REQUIRE(s2.escapes == s.escapes);
    for (std::size_t i = 0; i < s.trace.size(); ++i) {
        REQUIRE(s.trace[i].births == s2.trace[i].births);
        REQUIRE(s.trace[i].senders == s2.trace[i].senders);
    }
}

TEST_CASE("p_0 normalization: primed process is dominated in the mean") {
    // p = (0.5, 0.5, ...) against p' = (1, 0.5, ...) with lambda' = lambda/2.
    // The primed arrivals are exactly the newborns of the unprimed process
    // that send at birth (binomial thinning), so mean bin occupancy and mean
    // noise of the primed run cannot exceed the unprimed one.
    auto p = SendSequence::constant(0.5);
    auto norm = normalize_p0(p, 0.6);
    const int seeds = 120;
    const long long T = 1500;
    std::vector<double> pop_unprimed, pop_primed, noise_unprimed, noise_primed;
    for (int s = 0; s < seeds; ++s) {
        auto a = run_backoff(p, 0.6, T, 1000 + static_cast<std::uint64_t>(s));
        auto b = run_backoff(norm.seq, norm.lambda, T,
                             5000 + static_cast<std::uint64_t>(s));
        pop_unprimed.push_back(static_cast<double>(a.final_population));
        pop_primed.push_back(static_cast<double>(b.final_population));
        noise_unprimed.push_back(a.mean_noise);
        noise_primed.push_back(b.mean_noise);
    }
    auto mu = sample_moments(pop_unprimed);
    auto mp = sample_moments(pop_primed);
    double se = std::sqrt(mu.se_mean * mu.se_mean + mp.se_mean * mp.se_mean);
    REQUIRE(mp.mean <= mu.mean + 3.0 * se);
    auto nu_ = sample_moments(noise_unprimed);
    auto np_ = sample_moments(noise_primed);
    double se2 = std::sqrt(nu_.se_mean * nu_.se_mean + np_.se_mean * np_.se_mean);
    REQUIRE(np_.mean <= nu_.mean + 3.0 * se2);
}
