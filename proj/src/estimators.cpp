#include "availprop/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace availprop {

double interaction_rate(std::span<const Respondent> respondents, const ActivityDay& alpha,
                        const AlphaRegistry& reg)
{
    double num = 0.0, den = 0.0;
    for (const auto& r : respondents) {
        num += r.weight * r.interacts(alpha, reg);
        den += r.weight;
    }
    if (den <= 0.0)
        throw std::invalid_argument("interaction_rate: zero total weight");
    return num / den;
}

double availability_rate(std::span<const Respondent> respondents, int k, const BinnedFit& fit)
{
    if (k < 1)
        throw std::invalid_argument("availability_rate: k must be >= 1");
    double num = 0.0, den = 0.0;
    for (const auto& r : respondents) {
        if (!r.availability_bin)
            throw std::invalid_argument("availability_rate: respondent " + r.id +
                                        " carries no availability bin");
        num += r.weight * fit.prob_at_least(*r.availability_bin, k);
        den += r.weight;
    }
    if (den <= 0.0)
        throw std::invalid_argument("availability_rate: zero total weight");
    return num / den;
}

double effective_propensity(double f, double phi)
{
    if (phi <= 0.0)
        throw std::domain_error("effective_propensity: undefined for phi = 0");
    return f / phi;
}

double duration(std::span<const Respondent> respondents, const ActivityDay& alpha,
                const AlphaRegistry& reg)
{
    double num = 0.0, den = 0.0;
    for (const auto& r : respondents) {
        const int a = r.interacts(alpha, reg);
        num += r.weight * r.duration_hours(alpha, reg) * a;
        den += r.weight * a;
    }
    if (den <= 0.0)
        throw NoInteractorsError("duration: no interactors for " + alpha.label());
    return num / den;
}

double mle_success_rate(long long y, long long s)
{
    if (s <= 0)
        throw std::invalid_argument("mle_success_rate: s must be positive");
    if (y < 0 || y > s)
        throw std::invalid_argument("mle_success_rate: require 0 <= y <= s");
    return double(y) / double(s);
}

double family_nonfamily_ratio(std::span<const Respondent> respondents,
                              const ActivityDay& alpha, const AlphaRegistry& reg)
{
    double fam_num = 0.0, nonfam_num = 0.0, den = 0.0;
    for (const auto& r : respondents) {
        if (!r.nonfamily_interaction)
            throw std::invalid_argument("family_nonfamily_ratio: respondent " + r.id +
                                        " carries no non-family flag");
        fam_num += r.weight * r.interacts(alpha, reg);
        nonfam_num += r.weight * *r.nonfamily_interaction;
        den += r.weight;
    }
    if (den <= 0.0)
        throw std::invalid_argument("family_nonfamily_ratio: zero total weight");
    if (nonfam_num <= 0.0)
        throw std::domain_error("family_nonfamily_ratio: zero non-family interaction rate");
    return fam_num / nonfam_num;
}

double national_average_propensity(std::span<const double> city_values,
                                   std::span<const double> city_sample_sizes)
{
    if (city_values.empty() || city_values.size() != city_sample_sizes.size())
        throw std::invalid_argument("national_average_propensity: empty or mismatched inputs");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < city_values.size(); ++i) {
        if (city_sample_sizes[i] <= 0.0)
            throw std::invalid_argument("national_average_propensity: sample sizes must be positive");
        num += city_sample_sizes[i] * city_values[i];
        den += city_sample_sizes[i];
    }
    return num / den;
}

} // namespace availprop
