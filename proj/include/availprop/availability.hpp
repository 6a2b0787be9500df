#pragma once

#include <array>
#include <stdexcept>
#include <vector>

namespace availprop {

// Negative binomial over {0,1,2,...}:
//   pmf(x) = Gamma(x+r) / (Gamma(r) x!) * q^r * (1-q)^x,  mean r(1-q)/q.
struct NegBinomial {
    double r = 1.0;
    double q = 0.5;

    double pmf(long long x) const;
    double cdf(long long x) const; // P(X <= x)
};

struct IntRange {
    long long lo = 0;
    long long hi = 0; // inclusive; kOpenEnd marks the open tail
};

inline constexpr long long kOpenEnd = -1;

// Canonical answer bins of the binned family-count question.
inline constexpr std::array<IntRange, 6> kAvailabilityBins = {
    IntRange{0, 0}, {1, 5}, {6, 10}, {11, 15}, {16, 20}, {21, kOpenEnd}};

struct FitUnstableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Binned-response model: a negative binomial fitted to the observed bin
// proportions plus, per bin, the fitted pmf renormalized within the bin.
// The open tail is truncated at tail_cap and renormalized.
struct BinnedFit {
    std::vector<IntRange> bins;
    std::vector<double> bin_proportions;
    NegBinomial nb;
    long long tail_cap = 200;
    double objective = 0.0; // sum of squared bin-mass errors at the optimum
    std::vector<std::vector<double>> per_bin_conditional; // indexed by bin, value offset lo

    // P(X >= k | X in bin) under the per-bin conditional; 1 if k <= lo,
    // 0 if k exceeds the bin (or the truncated tail support).
    double prob_at_least(int bin_index, long long k) const;

    // Mass the fitted distribution assigns to a bin (untruncated tail).
    double bin_mass(int bin_index) const;
};

// Least-squares fit of NB(r,q) to bin proportions: coarse log-grid over
// (r, q) followed by deterministic pattern-search refinement.
BinnedFit fit_binned_nb(const std::vector<double>& bin_proportions, long long tail_cap = 200);

} // namespace availprop
