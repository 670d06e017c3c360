#pragma once

// Geometric block partition of the bin axis and the derived schedule
// constants. Block i covers bins [ell(i), u(i)] with u(i) = kappa^(i-1);
// weights W_i sum 1/p_j over the block; tau_i is the slack-weighted schedule
// that maps elapsed jamming time tau to the active block via I(tau).
//
// The un-overridden constants (I0, tau_init, C_init) follow their defining
// bullet lists verbatim. For every admissible (lambda, eta, nu) the I0
// bullets force I0 into the tens of thousands, so the un-overridden search is
// expected to exhaust its budget and report constants-infeasible; scaled-down
// overrides are first-class and stamped into the table.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sequences.hpp"

namespace crlab {

struct BlockError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BlockOverrides {
    std::optional<int> kappa;
    std::optional<double> zeta;
    std::optional<int> I0;
    std::optional<long long> tau_init;
    std::optional<long long> c_init;

    bool any() const {
        return kappa || zeta || I0 || tau_init || c_init;
    }
};

struct BlockBudget {
    int max_blocks = 64;
    long long max_total_bins = 20'000'000;  // bins touched while summing W
    long long max_tau = std::numeric_limits<long long>::max() / 4;
};

struct BlockTable {
    // inputs
    SendSequence seq = SendSequence::beb();
    double lambda = 0.0, eta = 0.0, nu = 0.0;
    BlockOverrides overrides;

    // constants
    int kappa = 0;
    double zeta = 0.0;    // eta * lambda / 24 unless overridden
    double p_star = 0.0;
    long long j_min = 0;  // least j >= 1 with p_j < 1
    long long j0 = 0;     // least j with p_i > nu^i for all i in [j, horizon]
    int I0 = 0;
    long long Q = 0;      // max_{k <= I0} ceil(W_k)
    long long tau_init = 0;
    long long c_init = 0;

    // per-block data, index 1..num_blocks (index 0 unused)
    std::vector<long long> ell, u, bsize;
    std::vector<double> W;
    std::vector<long long> ceilW;

    // tau[0] = 0, tau[i] = kappa * sum_{k=1}^{I0+i} (I0+i-k+1) ceil(W_k)
    std::vector<long long> tau;

    int num_blocks() const { return static_cast<int>(u.size()) - 1; }

    // unique I >= I0+1 with tau_{I-I0-1} <= t < tau_{I-I0}
    int I_of_tau(long long t) const {
        if (t < 0) throw BlockError("I_of_tau: negative tau");
        if (tau.size() < 2 || t >= tau.back())
            throw BlockError("I_of_tau: tau beyond tabulated schedule");
        std::size_t lo = 0, hi = tau.size() - 1;
        while (lo + 1 < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (tau[mid] <= t)
                lo = mid;
            else
                hi = mid;
        }
        return I0 + 1 + static_cast<int>(lo);
    }

    // bins(t) = B_{I(t)-1}, returned as [first, last]
    std::pair<long long, long long> bins_of_tau(long long t) const {
        int b = I_of_tau(t) - 1;
        if (b < 1 || b > num_blocks())
            throw BlockError("bins_of_tau: block out of range");
        return {ell[static_cast<std::size_t>(b)],
                u[static_cast<std::size_t>(b)]};
    }

    long long bins_count_of_tau(long long t) const {
        auto [lo, hi] = bins_of_tau(t);
        return hi - lo + 1;
    }
};

namespace detail {

inline long long checked_ceil(double x, const char* what) {
    double c = std::ceil(x);
    if (!(c >= 0) || c > 9.0e18) throw BlockError(std::string(what) + ": not representable");
    return static_cast<long long>(c);
}

} // namespace detail

// |{j in B_i : p_j <= p_*}|, for the suitable-fraction check
inline long long small_count_in_block(const BlockTable& t, int i) {
    if (i < 1 || i > t.num_blocks())
        throw BlockError("small_count_in_block: bad block");
    double log_pstar = std::log(t.p_star);
    long long cnt = 0;
    for (long long j = t.ell[static_cast<std::size_t>(i)];
         j <= t.u[static_cast<std::size_t>(i)]; ++j)
        if (t.seq.log_p(j) <= log_pstar) ++cnt;
    return cnt;
}

inline BlockTable build_block_table(const SendSequence& seq, double lambda,
                                    double eta, double nu,
                                    const BlockOverrides& ov = {},
                                    const BlockBudget& budget = {}) {
    if (!(lambda > 0.0 && lambda < 1.0))
        throw BlockError("build_block_table: lambda must be in (0,1)");
    if (!(eta > 0.0 && eta < 1.0) || !(nu > 0.0 && nu < 1.0))
        throw BlockError("build_block_table: eta, nu must be in (0,1)");

    BlockTable t;
    t.seq = seq;
    t.lambda = lambda;
    t.eta = eta;
    t.nu = nu;
    t.overrides = ov;

    auto sc = suitability_constants(lambda, eta, nu);
    t.kappa = ov.kappa.value_or(sc.kappa);
    if (t.kappa < 2) throw BlockError("build_block_table: kappa must be >= 2");
    t.p_star = sc.p_star;
    t.zeta = ov.zeta.value_or(eta * lambda / 24.0);

    // block geometry and weights, up to the budget
    t.ell = {0, 1};
    t.u = {0, 1};
    t.bsize = {0, 1};
    t.W = {0.0, 1.0 / seq.eval(1)};
    t.ceilW = {0, detail::checked_ceil(t.W[1], "ceil(W_1)")};
    long long bins_touched = 1;
    for (int i = 2; i <= budget.max_blocks; ++i) {
        long long prev_u = t.u.back();
        if (prev_u > budget.max_total_bins / t.kappa) break;
        long long next_u = prev_u * t.kappa;
        long long lo = prev_u + 1;
        bins_touched += next_u - prev_u;
        if (bins_touched > budget.max_total_bins) break;
        double w = 0.0;
        for (long long j = lo; j <= next_u; ++j) w += 1.0 / seq.eval(j);
        // weights past the representable range end the table, like any other
        // budget edge (fast-decaying sequences hit this within a few blocks)
        if (!(std::ceil(w) <= 9.0e18)) break;
        t.ell.push_back(lo);
        t.u.push_back(next_u);
        t.bsize.push_back(next_u - prev_u);
        t.W.push_back(w);
        t.ceilW.push_back(detail::checked_ceil(w, "ceil(W_i)"));
    }
    long long horizon = t.u.back();

    // j_min: least j >= 1 with p_j < 1 (-1 if none tabulated; only the
    // constants that mention j_min require it)
    t.j_min = -1;
    for (long long j = 1; j <= horizon; ++j)
        if (seq.eval(j) < 1.0) {
            t.j_min = j;
            break;
        }

    // j0: least j such that p_i > nu^i for every i in [j, horizon]
    double log_nu = std::log(nu);
    long long last_nu_violation = 0;
    for (long long j = 1; j <= horizon; ++j)
        if (!(static_cast<double>(j) * log_nu < seq.log_p(j)))
            last_nu_violation = j;
    t.j0 = last_nu_violation + 1;

    // per-n suitability bullets (used by the I0 search)
    double log_pstar = std::log(t.p_star);
    std::vector<char> bullets_ok(static_cast<std::size_t>(horizon) + 1, 0);
    {
        long long small = 0;
        for (long long n = 1; n <= horizon; ++n) {
            if (seq.log_p(n) <= log_pstar) ++small;
            bool a = static_cast<double>(small) > eta * static_cast<double>(n);
            bool b = static_cast<double>(n) * log_nu < seq.log_p(n);
            bullets_ok[static_cast<std::size_t>(n)] = a && b;
        }
    }
    std::vector<long long> ok_suffix(static_cast<std::size_t>(horizon) + 2, 0);
    // ok_suffix[n] = 1 if bullets hold for every m in [n, horizon]
    {
        char all = 1;
        for (long long n = horizon; n >= 1; --n) {
            all = all && bullets_ok[static_cast<std::size_t>(n)];
            ok_suffix[static_cast<std::size_t>(n)] = all;
        }
    }

    if (ov.I0) {
        t.I0 = *ov.I0;
        if (t.I0 < 1 || t.I0 > t.num_blocks())
            throw BlockError("build_block_table: I0 override out of range");
    } else {
        double c = t.zeta * (t.kappa - 1) / (16.0 * t.kappa * t.kappa);
        t.I0 = -1;
        for (int i = 1; i <= t.num_blocks(); ++i) {
            auto si = static_cast<std::size_t>(i);
            if (i < t.j_min) continue;
            if (!ok_suffix[static_cast<std::size_t>(t.ell[si])]) continue;
            if (!(t.zeta * static_cast<double>(t.bsize[si]) >= 4.0)) continue;
            double di = static_cast<double>(i);
            if (!(di >= std::log(4.0 / c) / c)) continue;
            if (!(std::exp(di * c) >= 4.0 * di)) continue;
            t.I0 = i;
            break;
        }
        if (t.I0 < 0)
            throw BlockError(
                "constants-infeasible: no I0 within block budget satisfies "
                "the defining bullets (expected at realistic parameters; "
                "use overrides for desk-scale runs)");
    }
    if (t.I0 > t.num_blocks())
        throw BlockError("build_block_table: I0 beyond tabulated blocks");

    t.Q = 0;
    for (int k = 1; k <= t.I0; ++k)
        t.Q = std::max(t.Q, t.ceilW[static_cast<std::size_t>(k)]);

    // tau schedule: tau_i needs blocks up to I0+i
    t.tau = {0};
    for (int i = 1; t.I0 + i <= t.num_blocks(); ++i) {
        long long s = 0;
        for (int k = 1; k <= t.I0 + i; ++k) {
            long long mult = t.I0 + i - k + 1;
            long long term = t.ceilW[static_cast<std::size_t>(k)];
            if (term > budget.max_tau / mult / t.kappa / 4)
                throw BlockError("build_block_table: tau overflow");
            s += mult * term;
        }
        long long ti = t.kappa * s;
        if (ti > budget.max_tau) break;
        t.tau.push_back(ti);
    }
    if (t.tau.size() < 2)
        throw BlockError("build_block_table: schedule has no tau_1");

    if (ov.tau_init) {
        t.tau_init = *ov.tau_init;
        if (t.tau_init < 0)
            throw BlockError("build_block_table: bad tau_init override");
    } else {
        double lb = std::max({1.0e7 / (lambda * lambda), 20.0,
                              std::pow(2.0 * t.kappa / (1.0 - nu), 4.0)});
        long long floor_tau = detail::checked_ceil(lb, "tau_init bound");
        long long i_target =
            std::max<long long>(t.I0 + 3, 2LL * t.I0 * (2 * t.Q + 1));
        long long idx = i_target - t.I0 - 1;  // need tau_idx <= tau_init
        if (idx < 0) idx = 0;
        if (idx >= static_cast<long long>(t.tau.size()))
            throw BlockError(
                "constants-infeasible: tau_init needs I(tau) >= " +
                std::to_string(i_target) + ", beyond the tabulated schedule");
        t.tau_init = std::max(floor_tau, t.tau[static_cast<std::size_t>(idx)]);
        if (t.tau_init >= t.tau.back())
            throw BlockError(
                "constants-infeasible: tau_init beyond tabulated schedule");
    }

    if (ov.c_init) {
        t.c_init = *ov.c_init;
        if (t.c_init < 1)
            throw BlockError("build_block_table: bad c_init override");
    } else {
        if (t.j_min < 0)
            throw BlockError(
                "constants-infeasible: C_init needs j_min but no p_j < 1 "
                "was found within the tabulated bins");
        double pj = seq.eval(t.j_min);
        double decay = std::pow(1.0 - pj, static_cast<double>(t.tau_init));
        double binsct = t.tau_init < t.tau.back()
                            ? static_cast<double>(t.bins_count_of_tau(t.tau_init))
                            : std::numeric_limits<double>::infinity();
        double a = t.zeta * static_cast<double>(t.bsize[static_cast<std::size_t>(t.I0)]) / pj;
        double b = 12.0 * std::log(100.0 * static_cast<double>(t.tau_init)) / decay;
        double cc = 2.0 * t.zeta * binsct / (pj * decay);
        double m = std::max({a, b, cc});
        if (!std::isfinite(m))
            throw BlockError(
                "constants-infeasible: C_init diverges ((1-p_jmin)^tau_init "
                "underflows); use overrides for desk-scale runs");
        t.c_init = detail::checked_ceil(m, "C_init");
    }

    return t;
}

// re-checks the defining bullet lists against a built table (whether or not
// its constants were overridden); used to audit scaled-down configs
struct ConditionAudit {
    bool i0_ge_jmin = false;
    bool i0_suitability_tail = false;  // bullets hold for n in [ell(I0), horizon]
    bool i0_zeta_block = false;        // zeta |B_I0| >= 4
    bool i0_growth = false;            // I0 >= log(4/c)/c and e^(I0 c) >= 4 I0
    bool tau_init_floor = false;       // tau_init >= max{1e7/lambda^2, 20, (2k/(1-nu))^4}
    bool tau_init_depth = false;       // I(tau_init) >= max{I0+3, 2 I0 (2Q+1)}
    bool c_init_formula = false;       // c_init >= the defining max
    bool all() const {
        return i0_ge_jmin && i0_suitability_tail && i0_zeta_block &&
               i0_growth && tau_init_floor && tau_init_depth && c_init_formula;
    }
};

inline ConditionAudit audit_conditions(const BlockTable& t) {
    ConditionAudit a;
    a.i0_ge_jmin = t.j_min >= 1 && t.I0 >= t.j_min;

    long long horizon = t.u.back();
    double log_pstar = std::log(t.p_star);
    double log_nu = std::log(t.nu);
    {
        long long small = 0;
        bool ok_tail = true;
        long long start = t.ell[static_cast<std::size_t>(t.I0)];
        for (long long n = 1; n <= horizon; ++n) {
            if (t.seq.log_p(n) <= log_pstar) ++small;
            if (n < start) continue;
            bool ok = static_cast<double>(small) >
                          t.eta * static_cast<double>(n) &&
                      static_cast<double>(n) * log_nu < t.seq.log_p(n);
            if (!ok) ok_tail = false;
        }
        a.i0_suitability_tail = ok_tail;
    }
    a.i0_zeta_block =
        t.zeta * static_cast<double>(t.bsize[static_cast<std::size_t>(t.I0)]) >= 4.0;
    {
        double c = t.zeta * (t.kappa - 1) / (16.0 * t.kappa * t.kappa);
        double di = static_cast<double>(t.I0);
        a.i0_growth =
            di >= std::log(4.0 / c) / c && std::exp(di * c) >= 4.0 * di;
    }
    {
        double lb = std::max({1.0e7 / (t.lambda * t.lambda), 20.0,
                              std::pow(2.0 * t.kappa / (1.0 - t.nu), 4.0)});
        a.tau_init_floor = static_cast<double>(t.tau_init) >= lb;
        long long i_target =
            std::max<long long>(t.I0 + 3, 2LL * t.I0 * (2 * t.Q + 1));
        a.tau_init_depth = t.tau_init < t.tau.back() &&
                           t.I_of_tau(t.tau_init) >= i_target;
    }
    if (t.j_min >= 1) {
        double pj = t.seq.eval(t.j_min);
        double decay = std::pow(1.0 - pj, static_cast<double>(t.tau_init));
        double va = t.zeta * static_cast<double>(t.bsize[static_cast<std::size_t>(t.I0)]) / pj;
        double vb = 12.0 * std::log(100.0 * static_cast<double>(t.tau_init)) / decay;
        double vc = t.tau_init < t.tau.back()
                        ? 2.0 * t.zeta *
                              static_cast<double>(t.bins_count_of_tau(t.tau_init)) /
                              (pj * decay)
                        : std::numeric_limits<double>::infinity();
        double m = std::max({va, vb, vc});
        a.c_init_formula =
            std::isfinite(m) && static_cast<double>(t.c_init) >= m - 0.5;
    }
    return a;
}

} // namespace crlab
