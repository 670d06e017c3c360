#pragma once

// Send sequences p = (p_0, p_1, ...) and the prefix classifiers. A sequence
// maps bin index j to the per-step send probability of a ball in bin j. All
// classifiers work on a finite checked prefix and say so via a caveat flag;
// none of them can prove an asymptotic statement.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace crlab {

struct SeqError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class SendSequence {
  public:
    enum class Kind {
        Constant,      // p_j = c
        Geometric,     // p_j = rho^j
        Beb,           // p_j = 2^-j
        Polynomial,    // p_j = (j+1)^-alpha
        Interleaved,   // rho^j on even splice intervals, tail g on odd ones
        Explicit,      // listed prefix, then a tail rule evaluated at j
        DoubleExp,     // p_j = 2^-(2^j)
    };

    static SendSequence constant(double c) {
        require(c > 0.0 && c <= 1.0, "constant: c must be in (0,1]");
        SendSequence s(Kind::Constant);
        s.a_ = c;
        return s;
    }
    static SendSequence geometric(double rho) {
        require(rho > 0.0 && rho < 1.0, "geometric: rho must be in (0,1)");
        SendSequence s(Kind::Geometric);
        s.a_ = rho;
        return s;
    }
    static SendSequence beb() { return SendSequence(Kind::Beb); }
    static SendSequence polynomial(double alpha) {
        require(alpha > 0.0, "polynomial: alpha must be positive");
        SendSequence s(Kind::Polynomial);
        s.a_ = alpha;
        return s;
    }
    static SendSequence double_exponential() {
        return SendSequence(Kind::DoubleExp);
    }
    static SendSequence interleaved(double rho, std::vector<long long> splices,
                                    SendSequence tail) {
        require(rho > 0.0 && rho < 1.0, "interleaved: rho must be in (0,1)");
        require(!splices.empty() && splices.front() == 0,
                "interleaved: splices must start at 0");
        for (std::size_t i = 1; i < splices.size(); ++i)
            require(splices[i] > splices[i - 1],
                    "interleaved: splices must be strictly increasing");
        SendSequence s(Kind::Interleaved);
        s.a_ = rho;
        s.splices_ = std::move(splices);
        s.tail_ = std::make_shared<SendSequence>(std::move(tail));
        return s;
    }
    static SendSequence explicit_prefix(std::vector<double> prefix,
                                        SendSequence tail) {
        require(!prefix.empty(), "explicit: empty prefix");
        for (double v : prefix)
            require(v > 0.0 && v <= 1.0, "explicit: values must be in (0,1]");
        SendSequence s(Kind::Explicit);
        s.prefix_ = std::move(prefix);
        s.tail_ = std::make_shared<SendSequence>(std::move(tail));
        return s;
    }

    // splices 0, 2, 4, 16, 256, ... (2^(2^k), capped at 2^32)
    static SendSequence rho_interleaved(double rho, SendSequence tail) {
        std::vector<long long> a{0};
        for (int k = 0; k <= 5; ++k)
            a.push_back(1LL << (1LL << k));
        return interleaved(rho, std::move(a), std::move(tail));
    }

    Kind kind() const { return kind_; }
    double param() const { return a_; }
    const std::vector<long long>& splices() const { return splices_; }
    const std::vector<double>& prefix() const { return prefix_; }
    const SendSequence* tail() const { return tail_.get(); }

    // log p_j, exact per kind (avoids underflow for fast-decaying tails)
    double log_p(long long j) const {
        require(j >= 0, "log_p: negative index");
        switch (kind_) {
        case Kind::Constant: return std::log(a_);
        case Kind::Geometric: return static_cast<double>(j) * std::log(a_);
        case Kind::Beb: return -static_cast<double>(j) * kLn2;
        case Kind::Polynomial:
            return -a_ * std::log(static_cast<double>(j) + 1.0);
        case Kind::DoubleExp:
            return -std::exp2(static_cast<double>(j)) * kLn2;
        case Kind::Interleaved:
            if (rho_branch(j))
                return static_cast<double>(j) * std::log(a_);
            return tail_->log_p(j);
        case Kind::Explicit:
            if (j < static_cast<long long>(prefix_.size()))
                return std::log(prefix_[static_cast<std::size_t>(j)]);
            return tail_->log_p(j);
        }
        throw SeqError("log_p: bad kind");
    }

    // p_j in (0,1]; fully-underflowed values are clamped to the smallest
    // positive double so the range contract holds
    double eval(long long j) const {
        require(j >= 0, "eval: negative index");
        switch (kind_) {
        case Kind::Constant: return a_;
        case Kind::Beb:
            return j < 1075 ? std::exp2(-static_cast<double>(j)) : kTiny;
        case Kind::Polynomial:
            return std::pow(static_cast<double>(j) + 1.0, -a_);
        case Kind::Explicit:
            if (j < static_cast<long long>(prefix_.size()))
                return prefix_[static_cast<std::size_t>(j)];
            return tail_->eval(j);
        default: {
            double lp = log_p(j);
            double v = std::exp(lp);
            return v > 0.0 ? std::min(v, 1.0) : kTiny;
        }
        }
    }

  private:
    static constexpr double kLn2 = 0.6931471805599453;
    static constexpr double kTiny = std::numeric_limits<double>::min();

    explicit SendSequence(Kind k) : kind_(k) {}

    static void require(bool ok, const char* msg) {
        if (!ok) throw SeqError(msg);
    }

    bool rho_branch(long long j) const {
        // index of the last splice <= j; even interval index means rho^j
        auto it = std::upper_bound(splices_.begin(), splices_.end(), j);
        auto idx = static_cast<std::size_t>(it - splices_.begin()) - 1;
        return idx % 2 == 0;
    }

    Kind kind_;
    double a_ = 0.0;
    std::vector<long long> splices_;
    std::vector<double> prefix_;
    std::shared_ptr<SendSequence> tail_;
};

// ---------------------------------------------------------------------------
// normalization (p_0 forced to 1, lambda scaled by the old p_0)

struct Normalized {
    SendSequence seq;
    double lambda;
};

inline Normalized normalize_p0(const SendSequence& seq, double lambda) {
    if (!(lambda > 0.0)) throw SeqError("normalize_p0: lambda must be > 0");
    double p0 = seq.eval(0);
    return Normalized{SendSequence::explicit_prefix({1.0}, seq), lambda * p0};
}

// ---------------------------------------------------------------------------
// suitability

struct SuitabilityConstants {
    int kappa;      // ceil(3/eta)
    double p_star;  // min(lambda/200, lambda*eta / (1800 kappa^2 log(1/nu)))
};

inline SuitabilityConstants suitability_constants(double lambda, double eta,
                                                  double nu) {
    if (!(lambda > 0.0 && lambda < 1.0))
        throw SeqError("suitability_constants: lambda must be in (0,1)");
    if (!(eta > 0.0 && eta < 1.0))
        throw SeqError("suitability_constants: eta must be in (0,1)");
    if (!(nu > 0.0 && nu < 1.0))
        throw SeqError("suitability_constants: nu must be in (0,1)");
    int kappa = static_cast<int>(std::ceil(3.0 / eta));
    double k2 = static_cast<double>(kappa) * kappa;
    double second = lambda * eta / (1800.0 * k2 * std::log(1.0 / nu));
    return SuitabilityConstants{kappa, std::min(lambda / 200.0, second)};
}

struct SuitableReport {
    bool suitable = false;
    long long n0 = -1;               // least valid start if suitable
    long long first_violation = -1;  // smallest violating n otherwise
    SuitabilityConstants constants{0, 0.0};
    long long horizon = 0;
    bool finite_prefix_caveat = true;
};

// checks |{j in [1..n] : p_j <= p_*}| > eta n and nu^n < p_n for every
// n in [n0, horizon], for the least such n0
inline SuitableReport check_suitable(const SendSequence& seq, double lambda,
                                     double eta, double nu,
                                     long long horizon) {
    if (horizon < 1) throw SeqError("check_suitable: horizon must be >= 1");
    if (std::abs(seq.eval(0) - 1.0) > 1e-12)
        throw SeqError("check_suitable: p_0 must be 1 (normalize first)");
    SuitableReport r;
    r.constants = suitability_constants(lambda, eta, nu);
    r.horizon = horizon;
    double log_pstar = std::log(r.constants.p_star);
    double log_nu = std::log(nu);
    long long small = 0;          // running |{j <= n : p_j <= p_*}|
    long long last_violation = 0; // 0 means none
    long long first_violation = -1;
    for (long long n = 1; n <= horizon; ++n) {
        double lp = seq.log_p(n);
        if (lp <= log_pstar) ++small;
        bool ok = static_cast<double>(small) > eta * static_cast<double>(n) &&
                  static_cast<double>(n) * log_nu < lp;
        if (!ok) {
            last_violation = n;
            if (first_violation < 0) first_violation = n;
        }
    }
    if (last_violation == horizon) {
        r.suitable = false;
        r.first_violation = first_violation;
    } else {
        r.suitable = true;
        r.n0 = last_violation + 1;
    }
    return r;
}

// ---------------------------------------------------------------------------
// killer condition: p_j <= (lambda p_0 / 2)^j for (ideally infinitely many) j

struct KillerReport {
    std::vector<long long> hits;  // j >= 1 with p_j <= (lambda p_0/2)^j
    bool evidence = false;        // some hit in the upper half of the prefix
    long long horizon = 0;
    bool finite_prefix_caveat = true;
};

inline KillerReport check_killer(const SendSequence& seq, double lambda,
                                 long long horizon) {
    if (horizon < 2) throw SeqError("check_killer: horizon must be >= 2");
    if (!(lambda > 0.0 && lambda < 2.0 / seq.eval(0)))
        throw SeqError("check_killer: need lambda p_0 / 2 < 1");
    KillerReport r;
    r.horizon = horizon;
    double log_rate = std::log(lambda * seq.eval(0) / 2.0);
    long long half = (horizon + 1) / 2;
    for (long long j = 1; j <= horizon; ++j) {
        if (seq.log_p(j) <= static_cast<double>(j) * log_rate) {
            r.hits.push_back(j);
            if (j >= half) r.evidence = true;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// mu_tau = sum_j P(W_0 + ... + W_j <= tau), W_k geometric(p_k) with support
// {1,2,...}. Computed exactly by a truncated convolution sweep.

// all of mu_1 .. mu_tau_max in one O(tau_max^2) pass
inline std::vector<double> mu_tau_table(const SendSequence& seq,
                                        long long tau_max) {
    if (tau_max < 0) throw SeqError("mu_tau: tau_max must be >= 0");
    auto n = static_cast<std::size_t>(tau_max);
    std::vector<double> mu(n + 1, 0.0);
    if (tau_max == 0) return mu;
    std::vector<double> m(n + 1, 0.0), nxt(n + 1, 0.0);
    m[0] = 1.0;  // empty sum
    for (long long j = 0; j < tau_max; ++j) {
        double p = seq.eval(j);
        double q = 1.0 - p;
        nxt[0] = 0.0;
        for (std::size_t v = 1; v <= n; ++v)
            nxt[v] = q * nxt[v - 1] + p * m[v - 1];
        double cdf = 0.0;
        for (std::size_t v = 0; v <= n; ++v) {
            cdf += nxt[v];
            mu[v] += cdf;  // running P(S_j <= v)
        }
        std::swap(m, nxt);
    }
    return mu;
}

inline double mu_tau(const SendSequence& seq, long long tau) {
    if (tau < 0) throw SeqError("mu_tau: tau must be >= 0");
    if (tau == 0) return 0.0;
    auto t = mu_tau_table(seq, tau);
    return t[static_cast<std::size_t>(tau)];
}

struct KmReport {
    double partial_sum = 0.0;      // sum_{tau<=tau_max} mu_tau exp(-lambda mu_tau)
    bool summand_decreasing = false;
    std::vector<double> mu;        // mu_1..mu_tau_max (index 0 unused)
    long long tau_max = 0;
};

inline KmReport km_partial_sum(const SendSequence& seq, double lambda,
                               long long tau_max) {
    if (!(lambda > 0.0)) throw SeqError("km_partial_sum: lambda must be > 0");
    if (tau_max < 0) throw SeqError("km_partial_sum: tau_max must be >= 0");
    KmReport r;
    r.tau_max = tau_max;
    r.mu = mu_tau_table(seq, tau_max);
    std::vector<double> summand(r.mu.size(), 0.0);
    for (std::size_t t = 1; t < r.mu.size(); ++t) {
        summand[t] = r.mu[t] * std::exp(-lambda * r.mu[t]);
        r.partial_sum += summand[t];
    }
    // trend: mean summand over the last tenth vs the tenth before it
    if (tau_max >= 20) {
        auto tenth = static_cast<std::size_t>(tau_max / 10);
        double recent = 0.0, before = 0.0;
        for (std::size_t k = 0; k < tenth; ++k) {
            recent += summand[summand.size() - 1 - k];
            before += summand[summand.size() - 1 - tenth - k];
        }
        r.summand_decreasing = recent < before;
    }
    return r;
}

// ---------------------------------------------------------------------------
// lower median of the multiset {p_0, ..., p_n}

inline double median_prefix(const SendSequence& seq, long long n) {
    if (n < 0) throw SeqError("median_prefix: n must be >= 0");
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(n) + 1);
    for (long long j = 0; j <= n; ++j) v.push_back(seq.eval(j));
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

// ---------------------------------------------------------------------------
// LCED prefix proxies. Three finite-horizon stand-ins for: (i) a largely
// constant bulk, (ii) an exponentially-decaying subsequence, (iii) a global
// O(j) bound on log(1/p_j).

struct LcedReport {
    bool item_i = false;
    bool item_ii = false;
    bool item_iii = false;
    bool likely = false;
    double best_c = 0.0;     // witness for item (i)
    double best_eta = 0.0;
    long long horizon = 0;
    bool finite_prefix_caveat = true;
};

inline LcedReport check_lced_prefix(const SendSequence& seq,
                                    long long horizon) {
    if (horizon < 16) throw SeqError("check_lced_prefix: horizon must be >= 16");
    LcedReport r;
    r.horizon = horizon;
    std::vector<double> p(static_cast<std::size_t>(horizon) + 1);
    std::vector<double> ratio(static_cast<std::size_t>(horizon) + 1, 0.0);
    for (long long j = 1; j <= horizon; ++j) {
        p[static_cast<std::size_t>(j)] = seq.eval(j);
        ratio[static_cast<std::size_t>(j)] =
            -seq.log_p(j) / static_cast<double>(j);
    }

    // item (i): per eta, the ceil((1-eta)n)-th largest prefix value at four
    // geometric checkpoints; pass if it stays bounded away from 0 and the
    // checkpoint curve is not strictly decreasing
    const long long cps[4] = {horizon / 8, horizon / 4, horizon / 2, horizon};
    for (int e = 1; e <= 9 && !r.item_i; ++e) {
        double eta = 0.1 * e;
        double c[4];
        for (int m = 0; m < 4; ++m) {
            long long n = cps[m];
            std::vector<double> v(p.begin() + 1, p.begin() + 1 + n);
            auto k = static_cast<std::size_t>(
                std::ceil((1.0 - eta) * static_cast<double>(n)));
            k = std::max<std::size_t>(1, std::min(k, v.size()));
            auto kth = v.begin() + static_cast<std::ptrdiff_t>(k - 1);
            std::nth_element(v.begin(), kth, v.end(), std::greater<>());
            c[m] = *kth;
        }
        bool strictly_down = c[1] < c[0] && c[2] < c[1] && c[3] < c[2];
        if (c[3] >= 1e-6 && !strictly_down) {
            r.item_i = true;
            r.best_c = c[3];
            r.best_eta = eta;
        }
    }

    // item (ii): enough indices with log(1/p_j)/j inside a positive window
    long long in_window = 0;
    for (long long j = 20; j <= horizon; ++j) {
        double rj = ratio[static_cast<std::size_t>(j)];
        if (rj >= 0.05 && rj <= 50.0) ++in_window;
    }
    r.item_ii = in_window >= 10;

    // item (iii): fit C on the first half, check the second half with slack
    double c_fit = 0.0, recent = 0.0;
    for (long long j = 1; j <= horizon / 2; ++j)
        c_fit = std::max(c_fit, ratio[static_cast<std::size_t>(j)]);
    for (long long j = horizon / 2 + 1; j <= horizon; ++j)
        recent = std::max(recent, ratio[static_cast<std::size_t>(j)]);
    r.item_iii = std::isfinite(recent) && std::isfinite(c_fit) &&
                 recent <= 1.5 * c_fit + 1e-9;

    r.likely = r.item_i && r.item_ii && r.item_iii;
    return r;
}

// ---------------------------------------------------------------------------
// classify: killer evidence, then o(j) evidence (Kelly-MacPhee route), then a
// suitability certificate over an (eta, nu) grid, else undecided

enum class Verdict { Killer, KellyMacPhee, Suitable, LcedUndecided };

inline const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::Killer: return "killer";
    case Verdict::KellyMacPhee: return "kelly-macphee";
    case Verdict::Suitable: return "suitable";
    case Verdict::LcedUndecided: return "lced-undecided";
    }
    return "?";
}

struct ClassifyResult {
    Verdict label = Verdict::LcedUndecided;
    long long horizon = 0;
    bool finite_prefix_caveat = true;
    KillerReport killer;
    double slope_recent = 0.0;  // o(j) detector internals
    double slope_mid = 0.0;
    double cert_eta = 0.0;      // suitability certificate
    double cert_nu = 0.0;
    long long cert_n0 = -1;
    LcedReport lced;
};

namespace detail {

// least-squares slope of log(1/p_j) against j over [lo, hi]
inline double lced_slope(const SendSequence& seq, long long lo, long long hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (long long j = lo; j <= hi; ++j) {
        double x = static_cast<double>(j), y = -seq.log_p(j);
        sx += x; sy += y; sxx += x * x; sxy += x * y; n += 1;
    }
    double den = n * sxx - sx * sx;
    return den > 0 ? (n * sxy - sx * sy) / den : 0.0;
}

} // namespace detail

inline ClassifyResult classify(const SendSequence& seq, double lambda,
                               long long horizon) {
    if (horizon < 64) throw SeqError("classify: horizon must be >= 64");
    ClassifyResult r;
    r.horizon = horizon;

    r.killer = check_killer(seq, lambda, horizon);
    if (r.killer.evidence) {
        r.label = Verdict::Killer;
        return r;
    }

    auto norm = normalize_p0(seq, lambda);
    r.slope_recent = detail::lced_slope(norm.seq, horizon / 2, horizon);
    r.slope_mid = detail::lced_slope(norm.seq, horizon / 4, horizon / 2 - 1);
    bool oj = r.slope_mid > 1e-12 && r.slope_recent < 0.9 * r.slope_mid;
    if (!oj && std::abs(r.slope_recent) <= 1e-12 &&
        std::abs(r.slope_mid) <= 1e-12) {
        // flat windows: bounded log(1/p_j) over the whole prefix is genuine
        // o(j) evidence; unbounded spikes earlier in the prefix are not
        double worst = 0.0;
        for (long long j = 1; j <= horizon; ++j)
            worst = std::max(worst, -norm.seq.log_p(j));
        oj = worst <= 50.0;
    }
    if (oj) {
        r.label = Verdict::KellyMacPhee;
        return r;
    }

    for (int e = 1; e <= 9; ++e) {
        for (int v = 1; v <= 9; ++v) {
            double eta = 0.1 * e, nu = 0.1 * v;
            auto s = check_suitable(norm.seq, norm.lambda, eta, nu, horizon);
            if (s.suitable) {
                r.label = Verdict::Suitable;
                r.cert_eta = eta;
                r.cert_nu = nu;
                r.cert_n0 = s.n0;
                return r;
            }
        }
    }

    r.label = Verdict::LcedUndecided;
    r.lced = check_lced_prefix(seq, horizon);
    return r;
}

} // namespace crlab
