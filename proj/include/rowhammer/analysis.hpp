#pragma once

// PARA failure-rate and overhead evaluation.
//
// Adversarial model: one aggressor is closed back to back; each close
// refreshes the victim's row with probability q = p/2. The victim fails when
// it sees n_th consecutive closes with no refresh. Over N closes:
//
//   union bound     N * (1 - q)^n_th
//   expected count  (1 - q)^n_th * (1 + (N - n_th) * q)     for N >= n_th
//                   (a failure is a maximal refresh-free run of length >= n_th;
//                    one can start at close 1, or right after any refresh)
//   run probability P(some run of n_th misses in N closes), by recurrence
//
// All three are evaluated in log space where the values underflow doubles.

#include "rowhammer/controller.hpp"
#include "rowhammer/mitigation.hpp"
#include "rowhammer/rng.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace rowhammer {

struct ParaAnalysisInput {
    double p = 0.001;
    std::uint64_t n_th = 139'000;
    double act_rate = 1.0 / 55e-9;        // activations per second
    double horizon_s = 365.25 * 86'400.0; // one year

    [[nodiscard]] double windows() const { return act_rate * horizon_s; }

    void validate() const
    {
        if (!(p > 0.0 && p <= 1.0))
            throw ConfigError("para analysis: p must be in (0, 1]");
        if (n_th < 1)
            throw ConfigError("para analysis: n_th must be >= 1");
        if (!(act_rate > 0.0) || !(horizon_s > 0.0))
            throw ConfigError("para analysis: act_rate and horizon must be > 0");
    }
};

/// log((1 - p/2)^n)
inline double log_survival(double p, std::uint64_t n)
{
    return static_cast<double>(n) * std::log1p(-p / 2.0);
}

/// Union bound on expected failures: N * (1 - p/2)^n_th.
inline double para_failure_rate_analytic(const ParaAnalysisInput& in)
{
    in.validate();
    return std::exp(std::log(in.windows()) + log_survival(in.p, in.n_th));
}

inline double para_union_bound(double p, std::uint64_t n_th, double windows)
{
    if (n_th == 0)
        return windows;
    return std::exp(std::log(windows) + log_survival(p, n_th));
}

/// Exact expected number of failures (maximal refresh-free runs of length
/// >= n_th) over `windows` closes. n_th == 0 fails every window.
inline double para_expected_failures(double p, std::uint64_t n_th, double windows)
{
    if (n_th == 0)
        return windows;
    const double n = static_cast<double>(n_th);
    if (windows < n)
        return 0.0;
    const double q = p / 2.0;
    return std::exp(log_survival(p, n_th) + std::log1p((windows - n) * q));
}

/// P(at least one run of n_th consecutive unrefreshed closes in `windows`
/// closes), by the run-length recurrence
///   a_k = a_{k-1} - q (1-q)^n a_{k-n-1},  a_k = 1 for k < n,  a_n = 1 - (1-q)^n
/// where a_k is the probability of no such run in the first k closes.
inline double para_run_probability(double p, std::uint64_t n_th, std::uint64_t windows)
{
    if (n_th == 0)
        return windows > 0 ? 1.0 : 0.0;
    if (windows < n_th)
        return 0.0;
    const double q = p / 2.0;
    const double miss_run = std::exp(log_survival(p, n_th));
    // Ring buffer of the last n_th + 1 values of a.
    std::vector<double> a(n_th + 1, 1.0);
    const auto at = [&](std::uint64_t k) -> double& { return a[k % (n_th + 1)]; };
    at(n_th) = 1.0 - miss_run;
    for (std::uint64_t k = n_th + 1; k <= windows; ++k) {
        const double prev = at(k - 1);
        const double back = (k - n_th - 1 < n_th) ? 1.0 : at(k - n_th - 1);
        at(k) = prev - q * miss_run * back;
    }
    return 1.0 - at(windows);
}

struct MonteCarloEstimate {
    double mean = 0.0;     // failures per trial
    double ci_low = 0.0;   // 95% confidence interval on the mean
    double ci_high = 0.0;
    std::uint64_t total_failures = 0;
    std::uint64_t trials = 0;
    bool poisson_interval = false; // sparse counts: exact Poisson interval

    [[nodiscard]] bool contains(double v) const { return v >= ci_low && v <= ci_high; }
};

/// Failures (maximal refresh-free runs >= n_th) in one trial of `windows`
/// closes. The close sequence is generated run by run: the gap before each
/// refresh is Geometric(p/2).
inline std::uint64_t para_trial_failures(double p, std::uint64_t n_th, std::uint64_t windows, Rng& rng)
{
    if (n_th == 0)
        return windows;
    const double q = p / 2.0;
    std::uint64_t failures = 0;
    std::uint64_t pos = 0;
    while (pos < windows) {
        const std::uint64_t gap = rng.geometric(q);
        const std::uint64_t left = windows - pos;
        if (std::min(gap, left) >= n_th)
            ++failures;
        if (gap >= left)
            break;
        pos += gap + 1;
    }
    return failures;
}

/// Monte Carlo estimate of failures per trial. Trial i draws from the stream
/// seeded with `seed + i`, so trials are reproducible independently of order.
///
/// Interval: Student-t on the per-trial counts; when fewer than 30 failures
/// are observed in total, the exact (Garwood) Poisson interval on the total.
inline MonteCarloEstimate para_failure_rate_montecarlo(double p, std::uint64_t n_th, std::uint64_t windows,
                                                       std::uint64_t trials, std::uint64_t seed,
                                                       std::optional<double> max_ci_width = std::nullopt)
{
    if (!(p >= 0.0 && p <= 1.0))
        throw ConfigError("monte carlo: p must be in [0, 1]");
    if (trials < 2)
        throw ConfigError("monte carlo: need at least 2 trials");
    MonteCarloEstimate est;
    est.trials = trials;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::uint64_t i = 0; i < trials; ++i) {
        Rng rng(seed + i, Stream::MonteCarlo);
        const auto f = para_trial_failures(p, n_th, windows, rng);
        est.total_failures += f;
        sum += static_cast<double>(f);
        sum_sq += static_cast<double>(f) * static_cast<double>(f);
    }
    const double t = static_cast<double>(trials);
    est.mean = sum / t;
    if (est.total_failures < 30) {
        const double s = static_cast<double>(est.total_failures);
        est.poisson_interval = true;
        est.ci_low = est.total_failures == 0 ? 0.0 : boost::math::gamma_p_inv(s, 0.025) / t;
        est.ci_high = boost::math::gamma_p_inv(s + 1.0, 0.975) / t;
    } else {
        const double var = std::max(0.0, (sum_sq - t * est.mean * est.mean) / (t - 1.0));
        const boost::math::students_t dist(t - 1.0);
        const double half = boost::math::quantile(dist, 0.975) * std::sqrt(var / t);
        est.ci_low = est.mean - half;
        est.ci_high = est.mean + half;
    }
    if (max_ci_width && est.ci_high - est.ci_low > *max_ci_width)
        throw InsufficientTrials("monte carlo: 95% CI width " + std::to_string(est.ci_high - est.ci_low) +
                                 " exceeds the requested " + std::to_string(*max_ci_width));
    return est;
}

/// Replays a baseline command trace with PARA attached and counts the extra
/// activations it would add.
class ParaOverheadMeter {
public:
    ParaOverheadMeter(double p, std::uint32_t rows_per_bank, std::uint64_t seed) : para_(ParaConfig{p, seed}, rows_per_bank) {}

    void observe(const Command& c)
    {
        if (c.kind == CommandKind::ACT)
            ++baseline_;
        else if (c.kind == CommandKind::PRE && !para_.on_row_close(c.bank, c.row, c.time, ActOrigin::Demand).empty())
            ++extra_;
    }
    void operator()(const Command& c) { observe(c); }

    [[nodiscard]] std::uint64_t baseline_activations() const { return baseline_; }
    [[nodiscard]] std::uint64_t extra_activations() const { return extra_; }
    [[nodiscard]] double fraction() const
    {
        return baseline_ == 0 ? 0.0 : static_cast<double>(extra_) / static_cast<double>(baseline_);
    }
    [[nodiscard]] const Para& para() const { return para_; }

private:
    Para para_;
    std::uint64_t baseline_ = 0;
    std::uint64_t extra_ = 0;
};

/// Extra-activation fraction PARA adds to `trace`.
inline double para_overhead(std::span<const Command> trace, double p, std::uint32_t rows_per_bank, std::uint64_t seed)
{
    ParaOverheadMeter meter(p, rows_per_bank, seed);
    for (const auto& c : trace)
        meter.observe(c);
    return meter.fraction();
}

} // namespace rowhammer
