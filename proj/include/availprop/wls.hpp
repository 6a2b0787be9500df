#pragma once

#include <span>
#include <string>
#include <vector>

namespace availprop {

// Weighted least-squares line fit v = beta1 * u + beta0 + eps with
// var(eps_g) proportional to 1/w_g. Exact duplicate (u, v) rows are merged
// (weights summed) before fitting, so a weight-2 point and two unit-weight
// copies produce the same fit and the same standard errors; n reports the
// merged count.
struct WlsFit {
    double beta1 = 0.0;
    double beta0 = 0.0;
    double se1 = 0.0;
    double p_value = 1.0;   // two-sided, t distribution with n-2 df
    double adj_r2 = 0.0;
    double ci95_low = 0.0;
    double ci95_high = 0.0;
    long long n = 0;
};

WlsFit wls_fit(std::span<const double> u, std::span<const double> v,
               std::span<const double> w);

// w_g = s(g) / sum_g s(g).
std::vector<double> sample_size_weights(std::span<const double> sample_sizes);

// Propagation-of-error weight for lambda = f / phi:
//   w = [ (1/phi)^2 var_f + (f/phi^2)^2 var_phi ]^-1.
double lambda_variance_weight(double f, double phi, double var_f, double var_phi);

// "***" p<.01, "**" p<.05, "*" p<.10, "" otherwise.
std::string significance_stars(double p_value);

} // namespace availprop
