// Block geometry identities, the tau schedule, the tau -> I -> bins lookups,
// and the constants search (which is expected to be infeasible without
// overrides at any realistic parameter choice).

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <string>

#include "crlab/blocks.hpp"
#include "crlab/json_io.hpp"

using namespace crlab;
using Catch::Approx;

namespace {

BlockOverrides toy_overrides(int i0 = 1) {
    BlockOverrides ov;
    ov.I0 = i0;
    ov.tau_init = 20;
    ov.c_init = 4;
    return ov;
}

} // namespace

TEST_CASE("block geometry identities for kappa 3..12") {
    for (int kappa = 3; kappa <= 12; ++kappa) {
        BlockOverrides ov = toy_overrides();
        ov.kappa = kappa;
        BlockBudget budget;
        budget.max_blocks = 12;
        auto t = build_block_table(SendSequence::constant(0.5), 0.5, 0.5, 0.5,
                                   ov, budget);
        REQUIRE(t.ell[1] == 1);
        REQUIRE(t.u[1] == 1);
        long long pw = 1;
        for (int i = 1; i <= t.num_blocks(); ++i) {
            auto si = static_cast<std::size_t>(i);
            REQUIRE(t.u[si] == pw);  // u(i) = kappa^(i-1)
            if (i >= 2) {
                REQUIRE(t.ell[si] == t.u[si - 1] + 1);
                REQUIRE(t.bsize[si] == t.u[si] * (kappa - 1) / kappa);
            }
            pw *= kappa;
        }
        REQUIRE(t.num_blocks() >= 5);
    }
}

TEST_CASE("tau schedule golden: all-ones, I0=1, kappa=6 gives tau_1 = 42") {
    BlockOverrides ov = toy_overrides();
    ov.kappa = 6;
    auto t = build_block_table(SendSequence::constant(1.0), 0.5, 0.5, 0.5, ov);
    // W = (1, 5, 30, ...): weights of all-ones blocks are just their sizes
    REQUIRE(t.W[1] == Approx(1.0));
    REQUIRE(t.W[2] == Approx(5.0));
    REQUIRE(t.W[3] == Approx(30.0));
    REQUIRE(t.tau[0] == 0);
    REQUIRE(t.tau[1] == 42);  // 6 * (2*1 + 1*5)

    // I(tau) boundaries around tau_1
    REQUIRE(t.I_of_tau(0) == 2);  // I(0) = I0 + 1
    REQUIRE(t.I_of_tau(41) == 2);
    REQUIRE(t.I_of_tau(42) == 3);

    // bins(tau) = B_{I(tau)-1}
    REQUIRE(t.bins_of_tau(0) == std::pair<long long, long long>{1, 1});
    REQUIRE(t.bins_of_tau(42) == std::pair<long long, long long>{2, 6});
    REQUIRE(t.bins_count_of_tau(42) == 5);

    REQUIRE_THROWS_AS(t.I_of_tau(t.tau.back()), BlockError);
    REQUIRE_THROWS_AS(t.I_of_tau(-1), BlockError);
}

TEST_CASE("I_of_tau is nondecreasing and tau_i strictly increasing") {
    auto t = build_block_table(SendSequence::constant(0.5), 0.5, 0.5, 0.5,
                               toy_overrides());
    for (std::size_t i = 1; i < t.tau.size(); ++i)
        REQUIRE(t.tau[i] > t.tau[i - 1]);
    int prev = t.I_of_tau(0);
    for (long long tau = 1; tau < std::min<long long>(t.tau.back(), 5000); ++tau) {
        int cur = t.I_of_tau(tau);
        REQUIRE(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("telescoping identity tau_i - tau_{i-1}") {
    auto t = build_block_table(SendSequence::constant(0.5), 0.5, 0.5, 0.5,
                               toy_overrides(2));
    REQUIRE(t.tau.size() >= 3);
    // tau_0 is pinned to 0, so the telescoping difference starts at i = 2
    for (std::size_t i = 2; i < t.tau.size(); ++i) {
        long long inner = 0;
        for (int k = 1; k <= t.I0 + static_cast<int>(i); ++k)
            inner += t.ceilW[static_cast<std::size_t>(k)];
        REQUIRE(t.tau[i] - t.tau[i - 1] == t.kappa * inner);
    }
}

TEST_CASE("zeta formula") {
    auto t = build_block_table(SendSequence::constant(0.5), 0.48, 0.5, 0.5,
                               toy_overrides());
    REQUIRE(t.zeta == Approx(0.01));  // eta * lambda / 24
}

TEST_CASE("fast-decaying weights just end the table early") {
    // BEB weights are ~2^u(i): only a handful of blocks fit in long long
    BlockOverrides ov = toy_overrides();
    ov.kappa = 6;
    auto t = build_block_table(SendSequence::beb(), 0.5, 0.5, 0.5, ov);
    REQUIRE(t.num_blocks() >= 3);
    REQUIRE(t.num_blocks() <= 4);
}

TEST_CASE("suitable-fraction property inside blocks") {
    // polynomial(2) is (0.5, eta=0.5, nu)-suitable from n ~ 850 on; blocks
    // past that point have nearly every bin below p_*
    BlockBudget budget;
    budget.max_blocks = 8;
    auto t = build_block_table(SendSequence::polynomial(2.0), 0.5, 0.5, 0.5,
                               toy_overrides(6), budget);
    REQUIRE(check_suitable(t.seq, t.lambda, t.eta, t.nu, t.u.back()).suitable);
    for (int i = t.I0; i <= t.num_blocks(); ++i)
        REQUIRE(static_cast<double>(small_count_in_block(t, i)) >
                2.0 * t.eta * static_cast<double>(t.bsize[static_cast<std::size_t>(i)]) / 3.0);
}

TEST_CASE("un-overridden constant search reports constants-infeasible") {
    try {
        build_block_table(SendSequence::beb(), 0.5, 0.5, 0.5);
        FAIL("expected constants-infeasible");
    } catch (const BlockError& e) {
        REQUIRE(std::string(e.what()).find("constants-infeasible") !=
                std::string::npos);
    }
    // all-ones with no j_min and no c_init override also fails
    BlockOverrides ov;
    ov.I0 = 1;
    ov.tau_init = 20;
    REQUIRE_THROWS_AS(
        build_block_table(SendSequence::constant(1.0), 0.5, 0.5, 0.5, ov),
        BlockError);
}

TEST_CASE("parameter validation") {
    REQUIRE_THROWS_AS(
        build_block_table(SendSequence::beb(), 1.5, 0.5, 0.5, toy_overrides()),
        BlockError);
    REQUIRE_THROWS_AS(
        build_block_table(SendSequence::beb(), 0.5, 0.0, 0.5, toy_overrides()),
        BlockError);
    BlockOverrides bad = toy_overrides();
    bad.I0 = 99;
    REQUIRE_THROWS_AS(
        build_block_table(SendSequence::beb(), 0.5, 0.5, 0.5, bad), BlockError);
}

TEST_CASE("audit re-checks the defining bullets on override tables") {
    BlockBudget budget;
    budget.max_blocks = 8;
    auto t = build_block_table(SendSequence::polynomial(2.0), 0.5, 0.5, 0.5,
                               toy_overrides(6), budget);
    auto a = audit_conditions(t);
    REQUIRE(t.j_min == 1);
    REQUIRE(a.i0_ge_jmin);
    // the suitability bullets hold from ell(I0) = 1297 on for this sequence
    REQUIRE(a.i0_suitability_tail);
    // desk-scale zeta and I0 cannot satisfy the growth bullets: that is the
    // reason overrides exist
    REQUIRE_FALSE(a.i0_growth);
    REQUIRE_FALSE(a.all());
    // tau_init floor needs ~1e7/lambda^2; the toy override is far below it
    REQUIRE_FALSE(a.tau_init_floor);

    // zeta override large enough to cover zeta |B_I0| >= 4
    BlockOverrides ov = toy_overrides(6);
    ov.zeta = 2.0;
    auto t2 = build_block_table(SendSequence::polynomial(2.0), 0.5, 0.5, 0.5,
                                ov, budget);
    REQUIRE(audit_conditions(t2).i0_zeta_block);
}

TEST_CASE("bins lower bound holds on a toy table") {
    BlockOverrides ov;
    ov.kappa = 3;
    ov.I0 = 1;
    ov.c_init = 4;
    ov.tau_init = 20;
    auto pre = build_block_table(SendSequence::constant(0.5), 0.5, 0.5, 0.5, ov);
    ov.tau_init = pre.tau[1];
    auto t = build_block_table(SendSequence::constant(0.5), 0.5, 0.5, 0.5, ov);
    double denom = 2.0 * t.kappa * t.kappa * std::log(1.0 / t.nu);
    // the bound is tightest just below each schedule boundary, where log(tau)
    // is at its interval maximum and |bins| is about to jump
    for (std::size_t i = 1; i < t.tau.size(); ++i) {
        for (long long tau : {t.tau[i - 1], t.tau[i] - 1}) {
            if (tau < t.tau_init) continue;
            REQUIRE(static_cast<double>(t.bins_count_of_tau(tau)) >
                    std::log(static_cast<double>(tau)) / denom);
        }
    }
}

TEST_CASE("csv dump carries constants and one row per block") {
    auto t = build_block_table(SendSequence::constant(0.5), 0.5, 0.5, 0.5,
                               toy_overrides());
    std::ostringstream os;
    dump_blocks_csv(t, os);
    auto s = os.str();
    REQUIRE(s.find("i,ell,u,size,W,ceilW,tau") != std::string::npos);
    REQUIRE(s.find("kappa") != std::string::npos);
    long long rows = 0;
    for (char c : s)
        if (c == '\n') ++rows;
    REQUIRE(rows >= static_cast<long long>(t.num_blocks()));
}
