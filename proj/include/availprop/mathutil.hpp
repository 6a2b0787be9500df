#pragma once

#include <cstdint>
#include <string_view>

namespace availprop::math {

// log of the binomial coefficient C(n, k), valid for real n >= k >= 0
double log_binomial(double n, double k);

// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Two-sided p-value of a t statistic with df degrees of freedom.
double t_two_sided_pvalue(double t, double df);

// Quantile of the Student t distribution (inverse CDF), df > 0.
double t_quantile(double prob, double df);

// FNV-1a 64-bit hash; used for config hashes and deterministic subseeds.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ull);

// SplitMix64 mixing step; maps any 64-bit value to a well-scrambled one.
std::uint64_t splitmix64(std::uint64_t x);

} // namespace availprop::math
