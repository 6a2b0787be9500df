#include "availprop/availability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace availprop {

double NegBinomial::pmf(long long x) const
{
    if (x < 0) return 0.0;
    const double lp = std::lgamma(double(x) + r) - std::lgamma(r) - std::lgamma(double(x) + 1.0) +
                      r * std::log(q) + double(x) * std::log1p(-q);
    return std::exp(lp);
}

double NegBinomial::cdf(long long x) const
{
    if (x < 0) return 0.0;
    double acc = 0.0;
    for (long long i = 0; i <= x; ++i) acc += pmf(i);
    return std::min(acc, 1.0);
}

namespace {

// Mass in each canonical bin; the open tail gets the full remainder.
std::array<double, 6> bin_masses(const NegBinomial& nb)
{
    std::array<double, 6> m{};
    double below_tail = 0.0;
    for (size_t b = 0; b + 1 < kAvailabilityBins.size(); ++b) {
        double acc = 0.0;
        for (long long x = kAvailabilityBins[b].lo; x <= kAvailabilityBins[b].hi; ++x)
            acc += nb.pmf(x);
        m[b] = acc;
        below_tail += acc;
    }
    m.back() = std::max(0.0, 1.0 - below_tail);
    return m;
}

double sse(const NegBinomial& nb, const std::vector<double>& props)
{
    const auto m = bin_masses(nb);
    double acc = 0.0;
    for (size_t b = 0; b < m.size(); ++b) {
        const double d = m[b] - props[b];
        acc += d * d;
    }
    return acc;
}

constexpr double kLogRMin = -6.9;  // r in [~1e-3, ~1e3]
constexpr double kLogRMax = 6.9;
constexpr double kLogitQMin = -13.8; // q in [~1e-6, 1-1e-6]
constexpr double kLogitQMax = 13.8;

NegBinomial from_unconstrained(double log_r, double logit_q)
{
    log_r = std::clamp(log_r, kLogRMin, kLogRMax);
    logit_q = std::clamp(logit_q, kLogitQMin, kLogitQMax);
    return NegBinomial{std::exp(log_r), 1.0 / (1.0 + std::exp(-logit_q))};
}

} // namespace

BinnedFit fit_binned_nb(const std::vector<double>& bin_proportions, long long tail_cap)
{
    if (bin_proportions.size() != kAvailabilityBins.size())
        throw std::invalid_argument("fit_binned_nb: expected " +
                                    std::to_string(kAvailabilityBins.size()) + " bin proportions");
    double total = 0.0;
    for (double p : bin_proportions) {
        if (p < 0.0) throw std::invalid_argument("fit_binned_nb: negative proportion");
        total += p;
    }
    if (std::fabs(total - 1.0) > 1e-6)
        throw std::invalid_argument("fit_binned_nb: proportions must sum to 1");

    double below_tail = std::accumulate(bin_proportions.begin(), bin_proportions.end() - 1, 0.0);
    if (below_tail <= 0.0 && bin_proportions.back() > 0.0)
        throw FitUnstableError(
            "fit_binned_nb: all mass in the open tail bin; the negative binomial "
            "mean is unbounded and the fit cannot be identified");

    // Coarse grid in (log r, logit q).
    double best = std::numeric_limits<double>::infinity();
    double best_lr = 0.0, best_lq = 0.0;
    constexpr int kGrid = 48;
    for (int i = 0; i < kGrid; ++i) {
        const double lr = kLogRMin + (kLogRMax - kLogRMin) * i / (kGrid - 1);
        for (int j = 0; j < kGrid; ++j) {
            const double lq = kLogitQMin + (kLogitQMax - kLogitQMin) * j / (kGrid - 1);
            const double v = sse(from_unconstrained(lr, lq), bin_proportions);
            if (v < best) {
                best = v;
                best_lr = lr;
                best_lq = lq;
            }
        }
    }

    // Compass-search refinement: expand the step on success, halve on
    // failure, so long valley walks stay geometric.
    const double step0 = (kLogRMax - kLogRMin) / (kGrid - 1);
    double step = step0;
    for (int iter = 0; iter < 100000 && step > 1e-8; ++iter) {
        bool improved = false;
        const double cand[4][2] = {{best_lr + step, best_lq}, {best_lr - step, best_lq},
                                   {best_lr, best_lq + step}, {best_lr, best_lq - step}};
        for (const auto& c : cand) {
            const double lr = std::clamp(c[0], kLogRMin, kLogRMax);
            const double lq = std::clamp(c[1], kLogitQMin, kLogitQMax);
            const double v = sse(from_unconstrained(lr, lq), bin_proportions);
            if (v < best - (1e-12 * best + 1e-30)) {
                best = v;
                best_lr = lr;
                best_lq = lq;
                improved = true;
            }
        }
        step = improved ? std::min(step * 2.0, step0) : step * 0.5;
    }

    BinnedFit fit;
    fit.bins.assign(kAvailabilityBins.begin(), kAvailabilityBins.end());
    fit.bin_proportions = bin_proportions;
    fit.nb = from_unconstrained(best_lr, best_lq);
    fit.tail_cap = tail_cap;
    fit.objective = best;

    fit.per_bin_conditional.resize(fit.bins.size());
    for (size_t b = 0; b < fit.bins.size(); ++b) {
        const long long lo = fit.bins[b].lo;
        const long long hi = fit.bins[b].hi == kOpenEnd ? tail_cap : fit.bins[b].hi;
        if (hi < lo)
            throw std::invalid_argument("fit_binned_nb: tail_cap below the tail bin start");
        std::vector<double> cond(size_t(hi - lo + 1));
        double mass = 0.0;
        for (long long x = lo; x <= hi; ++x) {
            cond[size_t(x - lo)] = fit.nb.pmf(x);
            mass += cond[size_t(x - lo)];
        }
        if (mass > 0.0)
            for (double& c : cond) c /= mass;
        else
            cond.assign(cond.size(), 1.0 / double(cond.size())); // underflowed bin: uniform
        fit.per_bin_conditional[b] = std::move(cond);
    }
    return fit;
}

double BinnedFit::prob_at_least(int bin_index, long long k) const
{
    if (bin_index < 0 || size_t(bin_index) >= bins.size())
        throw std::invalid_argument("prob_at_least: bin index out of range");
    if (k < 1)
        throw std::invalid_argument("prob_at_least: k must be >= 1");
    const long long lo = bins[size_t(bin_index)].lo;
    const long long hi = bins[size_t(bin_index)].hi == kOpenEnd ? tail_cap : bins[size_t(bin_index)].hi;
    if (k <= lo) return 1.0;
    if (k > hi) return 0.0;
    const auto& cond = per_bin_conditional[size_t(bin_index)];
    double acc = 0.0;
    for (long long x = k; x <= hi; ++x) acc += cond[size_t(x - lo)];
    return std::min(acc, 1.0);
}

double BinnedFit::bin_mass(int bin_index) const
{
    if (bin_index < 0 || size_t(bin_index) >= bins.size())
        throw std::invalid_argument("bin_mass: bin index out of range");
    const auto m = [&] {
        std::array<double, 6> masses{};
        double below = 0.0;
        for (size_t b = 0; b + 1 < bins.size(); ++b) {
            double acc = 0.0;
            for (long long x = bins[b].lo; x <= bins[b].hi; ++x) acc += nb.pmf(x);
            masses[b] = acc;
            below += acc;
        }
        masses.back() = std::max(0.0, 1.0 - below);
        return masses;
    }();
    return m[size_t(bin_index)];
}

} // namespace availprop
