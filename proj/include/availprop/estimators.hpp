#pragma once

#include "availprop/availability.hpp"
#include "availprop/model.hpp"

#include <span>
#include <vector>

namespace availprop {

// Per-city estimate row: value plus the sample size and variance weight the
// trend analyses consume.
struct CityEstimate {
    std::string location_id;
    double value = 0.0;
    long long sample_size = 0;
    double variance_weight = 0.0;
    bool flagged = false;        // e.g. effective propensity > 1
};

// f(g,alpha) = sum w_i a_i(alpha) / sum w_i.
double interaction_rate(std::span<const Respondent> respondents, const ActivityDay& alpha,
                        const AlphaRegistry& reg);

// phi(g,k) = sum w_i b_i(k) / sum w_i, with b_i(k) = P(>=k nclf | reported bin)
// resolved through the binned negative-binomial fit.
double availability_rate(std::span<const Respondent> respondents, int k, const BinnedFit& fit);

// lambda = f / phi. Values above 1 are legal (two surveys) and flagged by the
// caller, never clamped.
double effective_propensity(double f, double phi);

// t(g,alpha) = sum w_i t_i a_i / sum w_i a_i, averaged over interactors only.
// Throws NoInteractorsError when no respondent interacts (city excluded).
double duration(std::span<const Respondent> respondents, const ActivityDay& alpha,
                const AlphaRegistry& reg);

struct NoInteractorsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// MLE of a binomial success rate: y/s. Serves both kappa*phi (interaction
// counts) and phi (availability counts).
double mle_success_rate(long long y, long long s);

// r(g,alpha_o) = f over nclf flags / f over non-family flags.
double family_nonfamily_ratio(std::span<const Respondent> respondents,
                              const ActivityDay& alpha, const AlphaRegistry& reg);

// <lambda(alpha,k)> = sum w_g lambda_g / sum w_g with w_g the city sample sizes.
double national_average_propensity(std::span<const double> city_values,
                                   std::span<const double> city_sample_sizes);

} // namespace availprop
