#pragma once

// Verification math: exact Poisson/binomial CDFs, the two concentration
// bounds used by the proofs, and the statistical checks shared by tests and
// the CLI (quiet-period scan, stationarity test, empty-stucksend bound).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rng.hpp"
#include "sequences.hpp"

namespace crlab {

struct AnalysisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// regularized incomplete gamma, series + continued fraction (for exact
// Poisson CDFs and chi-square p-values)

namespace detail {

inline double gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw AnalysisError("gamma_p: bad args");
    if (x == 0.0) return 0.0;
    double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // series
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    // continued fraction for Q, return 1 - Q
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - lg) * h;
}

} // namespace detail

// P(Poisson(mean) <= k), exact
inline double poisson_cdf(long long k, double mean) {
    if (mean < 0.0) throw AnalysisError("poisson_cdf: bad mean");
    if (k < 0) return 0.0;
    if (mean == 0.0) return 1.0;
    // P(X <= k) = Q(k+1, mean) = 1 - gamma_p(k+1, mean)
    return 1.0 - detail::gamma_p(static_cast<double>(k) + 1.0, mean);
}

// P(Binomial(n,p) <= k), exact by pmf summation
inline double binomial_cdf(long long k, long long n, double p) {
    if (n < 0 || p < 0.0 || p > 1.0) throw AnalysisError("binomial_cdf: bad args");
    if (k < 0) return 0.0;
    if (k >= n) return 1.0;
    double cdf = 0.0;
    for (long long i = 0; i <= k; ++i) {
        double lpmf = std::lgamma(static_cast<double>(n) + 1.0) -
                      std::lgamma(static_cast<double>(i) + 1.0) -
                      std::lgamma(static_cast<double>(n - i) + 1.0);
        if (p > 0.0) lpmf += static_cast<double>(i) * std::log(p);
        if (p < 1.0) lpmf += static_cast<double>(n - i) * std::log(1.0 - p);
        cdf += std::exp(lpmf);
    }
    return std::min(cdf, 1.0);
}

// P(ChiSq(dof) >= x), for goodness-of-fit p-values
inline double chi_square_sf(double x, double dof) {
    if (x <= 0.0) return 1.0;
    return 1.0 - detail::gamma_p(dof / 2.0, x / 2.0);
}

// ---------------------------------------------------------------------------
// concentration bounds

// lower-tail bound for a sum of independent [0,1] variables (or Poisson):
// P(Psi <= (1-delta) mu) <= exp(-delta^2 mu / 2)
inline double chernoff_lower(double mu, double delta) {
    if (!(mu >= 0.0) || !(delta >= 0.0 && delta <= 1.0))
        throw AnalysisError("chernoff_lower: bad args");
    return std::exp(-delta * delta * mu / 2.0);
}

// upper-tail bound: P(Psi >= x mu) < exp(-mu x (log x - 1)) for x > 1
inline double chernoff_upper(double mu, double x) {
    if (!(mu >= 0.0) || !(x > 0.0)) throw AnalysisError("chernoff_upper: bad args");
    if (x <= 1.0) return 1.0;
    return std::exp(-mu * x * (std::log(x) - 1.0));
}

// ---------------------------------------------------------------------------
// quiet periods: steps whose recorded noise is below 1

struct QuietScan {
    // maximal runs of consecutive steps with noise < 1, as [begin, end) pairs
    std::vector<std::pair<long long, long long>> intervals;
    long long quiet_steps = 0;
    long long longest_run = 0;
    long long first_quiet = -1;
    double quiet_fraction = 0.0;
};

inline QuietScan quiet_period_scan(const std::vector<double>& noise) {
    QuietScan q;
    long long run = 0;
    for (std::size_t i = 0; i < noise.size(); ++i) {
        if (noise[i] < 1.0) {
            if (run == 0)
                q.intervals.emplace_back(static_cast<long long>(i),
                                         static_cast<long long>(i));
            ++q.quiet_steps;
            ++run;
            q.intervals.back().second = static_cast<long long>(i) + 1;
            q.longest_run = std::max(q.longest_run, run);
            if (q.first_quiet < 0) q.first_quiet = static_cast<long long>(i);
        } else {
            run = 0;
        }
    }
    if (!noise.empty())
        q.quiet_fraction = static_cast<double>(q.quiet_steps) /
                           static_cast<double>(noise.size());
    return q;
}

// ---------------------------------------------------------------------------
// stationarity test: per-bin ensemble samples against Poisson(target_j).
// Mean must sit within `sigmas` standard errors of the target and a binned
// chi-square test must not reject at `alpha`.

struct BinStationarity {
    double target = 0.0;
    double mean = 0.0;
    double sigma_units = 0.0;  // |mean - target| in standard-error units
    double chi2_pvalue = 1.0;
    bool mean_ok = false;
    bool chi2_ok = false;
};

struct StationarityReport {
    std::vector<BinStationarity> bins;
    bool pass = true;
};

inline BinStationarity stationarity_bin_test(
    const std::vector<long long>& samples, double target, double sigmas,
    double alpha) {
    if (samples.empty() || !(target > 0.0))
        throw AnalysisError("stationarity_bin_test: bad args");
    BinStationarity r;
    r.target = target;
    auto n = static_cast<double>(samples.size());
    double sum = 0.0;
    for (long long v : samples) sum += static_cast<double>(v);
    r.mean = sum / n;
    double se = std::sqrt(target / n);  // Poisson variance = mean
    r.sigma_units = std::abs(r.mean - target) / se;
    r.mean_ok = r.sigma_units <= sigmas;

    // chi-square: cells by value around the target, pooled so every cell
    // expects at least ~5 observations
    double sd = std::sqrt(target);
    long long lo = std::max<long long>(0, static_cast<long long>(target - 4 * sd));
    long long hi = static_cast<long long>(target + 4 * sd) + 1;
    std::vector<double> expect;
    std::vector<long long> observe;
    double cdf_prev = 0.0;
    long long cell_obs = 0;
    double cell_exp = 0.0;
    auto count_leq = [&](long long v) {
        long long c = 0;
        for (long long s : samples)
            if (s <= v) ++c;
        return c;
    };
    long long obs_prev = 0;
    for (long long v = lo; v <= hi; ++v) {
        double cdf = v == hi ? 1.0 : poisson_cdf(v, target);
        if (v == lo) cdf_prev = poisson_cdf(lo - 1, target);
        long long obs_cum = v == hi ? static_cast<long long>(samples.size())
                                    : count_leq(v);
        cell_exp += (cdf - cdf_prev) * n;
        cell_obs += obs_cum - obs_prev;
        cdf_prev = cdf;
        obs_prev = obs_cum;
        if (cell_exp >= 5.0 || v == hi) {
            expect.push_back(cell_exp);
            observe.push_back(cell_obs);
            cell_exp = 0.0;
            cell_obs = 0;
        }
    }
    // merge a trailing underfull cell into its neighbor
    if (expect.size() >= 2 && expect.back() < 5.0) {
        expect[expect.size() - 2] += expect.back();
        observe[observe.size() - 2] += observe.back();
        expect.pop_back();
        observe.pop_back();
    }
    if (expect.size() >= 2) {
        double chi2 = 0.0;
        for (std::size_t i = 0; i < expect.size(); ++i) {
            double d = static_cast<double>(observe[i]) - expect[i];
            chi2 += d * d / expect[i];
        }
        r.chi2_pvalue =
            chi_square_sf(chi2, static_cast<double>(expect.size() - 1));
    }
    r.chi2_ok = r.chi2_pvalue >= alpha;
    return r;
}

// ---------------------------------------------------------------------------
// empty-stucksend bound: for a prepared stuck vector x of one stream of the
// two-stream process, P(no newstuck sender next step) <= exp(-f(x)/3) where
// f(x) = lambda + sum_j x_j p_j. Estimated over `trials` one-step draws.

struct EmptyStucksendResult {
    double f = 0.0;
    double bound = 0.0;        // exp(-f/3)
    double exact = 0.0;        // e^(-lambda/2) prod_j (1-p_j)^(x_j)
    double empirical = 0.0;
    double sigma = 0.0;        // standard error of the empirical estimate
    bool pass = false;         // empirical <= bound + 3 sigma
};

inline EmptyStucksendResult empty_stucksend_bound_test(
    const SendSequence& seq, double lambda,
    const std::vector<long long>& stuck, long long trials, RngStream stream) {
    if (trials < 1) throw AnalysisError("empty_stucksend: trials must be >= 1");
    EmptyStucksendResult r;
    r.f = lambda;
    double log_exact = -lambda / 2.0;  // one stream's births: Poisson(lambda/2)
    for (std::size_t j = 1; j < stuck.size(); ++j) {
        if (stuck[j] == 0) continue;
        double p = seq.eval(static_cast<long long>(j));
        r.f += static_cast<double>(stuck[j]) * p;
        log_exact += static_cast<double>(stuck[j]) * std::log1p(-p);
    }
    r.bound = std::exp(-r.f / 3.0);
    r.exact = std::exp(log_exact);

    long long empty = 0;
    for (long long i = 0; i < trials; ++i) {
        auto tr = stream.split(static_cast<std::uint64_t>(i));
        bool any = tr.split("birth").poisson(lambda / 2.0) > 0;
        for (std::size_t j = 1; j < stuck.size() && !any; ++j) {
            if (stuck[j] == 0) continue;
            double p = seq.eval(static_cast<long long>(j));
            any = tr.split(static_cast<std::uint64_t>(j)).binomial(stuck[j], p) > 0;
        }
        if (!any) ++empty;
    }
    r.empirical = static_cast<double>(empty) / static_cast<double>(trials);
    r.sigma = std::sqrt(std::max(r.empirical * (1.0 - r.empirical), 1e-12) /
                        static_cast<double>(trials));
    r.pass = r.empirical <= r.bound + 3.0 * r.sigma;
    return r;
}

// ---------------------------------------------------------------------------
// sample statistics helpers

struct Moments {
    double n = 0.0, mean = 0.0, var = 0.0;  // unbiased variance
    double se_mean = 0.0;                   // sd / sqrt(n)
    double se_var = 0.0;                    // sqrt((m4 - var^2) / n)
};

inline Moments sample_moments(const std::vector<double>& xs) {
    Moments m;
    m.n = static_cast<double>(xs.size());
    if (xs.empty()) return m;
    double s = 0.0;
    for (double x : xs) s += x;
    m.mean = s / m.n;
    double s2 = 0.0, s4 = 0.0;
    for (double x : xs) {
        double d = x - m.mean;
        s2 += d * d;
        s4 += d * d * d * d;
    }
    m.var = m.n > 1 ? s2 / (m.n - 1.0) : 0.0;
    double m2 = s2 / m.n, m4 = s4 / m.n;
    m.se_mean = std::sqrt(m.var / m.n);
    m.se_var = std::sqrt(std::max(m4 - m2 * m2, 0.0) / m.n);
    return m;
}

inline double sample_correlation(const std::vector<double>& a,
                                 const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw AnalysisError("sample_correlation: bad args");
    double n = static_cast<double>(a.size()), sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
    }
    double ma = sa / n, mb = sb / n, saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

} // namespace crlab
