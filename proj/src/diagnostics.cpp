#include "availprop/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace availprop {

double respondents_per_capita(const Location& loc, long long respondent_count)
{
    if (loc.population <= 0)
        throw std::invalid_argument("respondents_per_capita: population must be positive");
    if (respondent_count < 0)
        throw std::invalid_argument("respondents_per_capita: negative respondent count");
    return double(respondent_count) / double(loc.population);
}

double nonresponse_ratio(std::span<const Respondent> respondents_with_c,
                         std::span<const SamplingUnit> units_with_c,
                         const ActivityDay& alpha, const AlphaRegistry& reg)
{
    if (units_with_c.empty())
        throw std::invalid_argument("nonresponse_ratio: no sampling units");
    long long responded = 0;
    for (const auto& unit : units_with_c) responded += unit.responded ? 1 : 0;
    const double h = double(responded) / double(units_with_c.size());
    if (h <= 0.0)
        throw std::domain_error("nonresponse_ratio: zero response rate");

    if (respondents_with_c.empty())
        throw std::invalid_argument("nonresponse_ratio: no respondents");
    long long interacting = 0;
    for (const auto& r : respondents_with_c) interacting += r.interacts(alpha, reg);
    const double f_u = double(interacting) / double(respondents_with_c.size());
    return f_u / h;
}

double call_statistic(std::span<const Respondent> respondents, const ActivityDay& alpha,
                      const AlphaRegistry& reg)
{
    double num = 0.0, den = 0.0;
    for (const auto& r : respondents) {
        if (!r.calls) continue;
        const double we = r.weight * double(*r.calls);
        num += we * r.interacts(alpha, reg);
        den += we;
    }
    if (den <= 0.0)
        throw std::invalid_argument("call_statistic: no calls recorded");
    return num / den;
}

double weighted_zscore(double v_g, double u_g, const DensityGrid& grid, double w_g,
                       double sum_w)
{
    if (!(sum_w > 0.0) || !(w_g > 0.0))
        throw std::invalid_argument("weighted_zscore: weights must be positive");
    const auto& ua = grid.u_axis;
    const auto& va = grid.v_axis;
    // column with u_i <= u_g < u_{i+1}; cities below the first tile map to it
    auto it = std::upper_bound(ua.begin(), ua.end(), u_g);
    size_t i = it == ua.begin() ? 0 : size_t(it - ua.begin()) - 1;
    i = std::min(i, ua.size() - 1);

    const int jstar = grid.mode_index[i];
    if (jstar < 0)
        throw std::domain_error("weighted_zscore: empty density column");

    const double n_v = double(va.size());
    double mean = 0.0;
    for (size_t j = 0; j < va.size(); ++j)
        mean += va[j] * grid.conditional(int(i), int(j));
    mean /= n_v;
    double var = 0.0;
    for (double vj : va) var += (vj - mean) * (vj - mean);
    var /= n_v;
    const double sigma = std::sqrt(var);
    if (!(sigma > 0.0))
        throw std::domain_error("weighted_zscore: zero column sigma");

    // snap the observed value to the nearest grid row
    const size_t j_obs = std::min(
        size_t(std::max(0.0, std::round((v_g - va.front()) / grid.dv))), va.size() - 1);
    return (w_g / sum_w) * (va[j_obs] - va[size_t(jstar)]) / sigma;
}

std::vector<PsiBinRow> psi_population_bins(std::span<const double> populations,
                                           std::span<const double> psi_values, int n_bins)
{
    if (populations.size() != psi_values.size() || populations.empty())
        throw std::invalid_argument("psi_population_bins: empty or mismatched inputs");
    if (n_bins < 1)
        throw std::invalid_argument("psi_population_bins: need at least one bin");
    std::vector<size_t> order(populations.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return populations[a] < populations[b]; });

    const size_t n = order.size();
    const size_t bins = std::min(size_t(n_bins), n);
    std::vector<PsiBinRow> rows;
    size_t start = 0;
    for (size_t b = 0; b < bins; ++b) {
        const size_t end = (b + 1) * n / bins;
        PsiBinRow row;
        for (size_t k = start; k < end; ++k) {
            row.mean_population += populations[order[k]];
            row.mean_psi += psi_values[order[k]];
            ++row.cities;
        }
        if (row.cities > 0) {
            row.mean_population /= row.cities;
            row.mean_psi /= row.cities;
            rows.push_back(row);
        }
        start = end;
    }
    return rows;
}

} // namespace availprop
