#pragma once

#include "availprop/modal_kde.hpp"
#include "availprop/model.hpp"

#include <span>
#include <vector>

namespace availprop {

// Anyone contacted by the survey, respondent or not; carries one
// characteristic marker at a time.
struct SamplingUnit {
    std::string location_id;
    std::string characteristic;
    int responded = 0;
};

// mu(g) = respondents / P(g).
double respondents_per_capita(const Location& loc, long long respondent_count);

// f_u(g,c) / h(g,c): unweighted interaction rate among respondents carrying
// tag c over the response rate among sampling units with characteristic c.
// Throws when h = 0 (the pair is excluded upstream and logged).
double nonresponse_ratio(std::span<const Respondent> respondents_with_c,
                         std::span<const SamplingUnit> units_with_c,
                         const ActivityDay& alpha, const AlphaRegistry& reg);

// psi(g) = sum w_i e_i a_i / sum w_i e_i, the call-weighted share of calls
// that discover an interaction.
double call_statistic(std::span<const Respondent> respondents, const ActivityDay& alpha,
                      const AlphaRegistry& reg);

// Weighted z-score of a city against the conditional column of a density
// grid:
//   z = (w_g / sum_w) * (v_g_snapped - v*(u_g)) / sigma_column,
// with the column mean and sigma computed from the discretized conditional
// exactly as
//   mean = sum_j v_j rho(v_j|u_i) / n_v,
//   sigma = sqrt( sum_j (v_j - mean)^2 / n_v ).
// u_g selects the column with u_i <= u_g < u_{i+1}, clamped to the grid.
double weighted_zscore(double v_g, double u_g, const DensityGrid& grid, double w_g,
                       double sum_w);

struct PsiBinRow {
    double mean_population = 0.0;
    double mean_psi = 0.0;
    int cities = 0;
};

// Equal-count population bins of (P(g), psi(g)) pairs; cities are sorted by
// population and split into n_bins groups of near-equal size.
std::vector<PsiBinRow> psi_population_bins(std::span<const double> populations,
                                           std::span<const double> psi_values, int n_bins);

} // namespace availprop
