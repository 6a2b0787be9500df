#include "availprop/diagnostics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <random>

using namespace availprop;

namespace {

Respondent make_resp(double w, int a11, long long calls = 0)
{
    Respondent r;
    r.weight = w;
    r.diary_day = DayType::weekday;
    r.interactions["11"] = a11;
    if (calls > 0) r.calls = calls;
    return r;
}

} // namespace

TEST_CASE("respondents per capita")
{
    CHECK(respondents_per_capita(make_location("g", 300000), 30) == doctest::Approx(1e-4));
    CHECK(respondents_per_capita(make_location("g", 12345), 0) == 0.0);
    // linear in the count at fixed population
    const Location loc = make_location("g", 1000000);
    CHECK(respondents_per_capita(loc, 50) == doctest::Approx(5.0 * respondents_per_capita(loc, 10)));
}

TEST_CASE("coverage is flat when respondents scale with population")
{
    for (long long pop : {300000LL, 1000000LL, 5000000LL, 20000000LL}) {
        const long long count = (long long)std::llround(1e-4 * double(pop));
        CHECK(respondents_per_capita(make_location("g", pop), count) ==
              doctest::Approx(1e-4).epsilon(1e-2));
    }
}

TEST_CASE("nonresponse ratio divides f_u by h")
{
    const AlphaRegistry reg;
    std::vector<SamplingUnit> units;
    for (int i = 0; i < 10; ++i) units.push_back({"g", "renter", i < 4 ? 1 : 0}); // h = 0.4
    std::vector<Respondent> resp;
    for (int i = 0; i < 10; ++i) resp.push_back(make_resp(double(1 + i), i < 3 ? 1 : 0));
    // f_u is unweighted: 0.3
    CHECK(nonresponse_ratio(resp, units, alpha_any(), reg) == doctest::Approx(0.75));

    // h = 1 reduces to f_u
    std::vector<SamplingUnit> all{{"g", "renter", 1}, {"g", "renter", 1}};
    CHECK(nonresponse_ratio(resp, all, alpha_any(), reg) == doctest::Approx(0.3));

    // f_u = 0
    std::vector<Respondent> silent{make_resp(1, 0), make_resp(5, 0)};
    CHECK(nonresponse_ratio(silent, units, alpha_any(), reg) == 0.0);

    std::vector<SamplingUnit> none{{"g", "renter", 0}};
    CHECK_THROWS_AS(nonresponse_ratio(resp, none, alpha_any(), reg), std::domain_error);
}

TEST_CASE("call statistic weights calls by interaction discovery")
{
    const AlphaRegistry reg;
    std::vector<Respondent> all_yes{make_resp(1, 1, 3), make_resp(2, 1, 5)};
    CHECK(call_statistic(all_yes, alpha_any(), reg) == doctest::Approx(1.0));

    // equal call counts cancel: psi equals the weighted interaction rate
    std::vector<Respondent> equal{make_resp(1, 1, 4), make_resp(3, 0, 4)};
    CHECK(call_statistic(equal, alpha_any(), reg) == doctest::Approx(0.25));

    // w=(1,2), e=(4,1), a=(1,0) -> 4/6
    std::vector<Respondent> hand{make_resp(1, 1, 4), make_resp(2, 0, 1)};
    const double psi = call_statistic(hand, alpha_any(), reg);
    CHECK(psi == doctest::Approx(4.0 / 6.0));
    CHECK(psi + (1.0 - psi) == 1.0);

    std::vector<Respondent> no_calls{make_resp(1, 1)};
    CHECK_THROWS_AS(call_statistic(no_calls, alpha_any(), reg), std::invalid_argument);
}

namespace {

// Small grid with a sharp ridge along v = 0.5 + 0.25 u.
DensityGrid ridge_grid()
{
    std::mt19937_64 eng(9);
    std::vector<double> u, v, w;
    for (int i = 0; i < 400; ++i) {
        const double x = double(eng() >> 11) * 0x1.0p-53;
        u.push_back(x);
        v.push_back(0.5 + 0.25 * x + 0.01 * (double(eng() >> 11) * 0x1.0p-53 - 0.5));
        w.push_back(1.0);
    }
    return weighted_kde_grid(u, v, w, 0.3, 20, 50, GridBounds{0.0, 1.0, 0.0, 1.0});
}

} // namespace

TEST_CASE("weighted z-score arithmetic, sign, and invariances")
{
    const DensityGrid grid = ridge_grid();

    // value at the column mode scores zero
    const double u_probe = grid.u_axis[10];
    const int jstar = grid.mode_index[10];
    const double v_mode = grid.v_axis[size_t(jstar)];
    CHECK(weighted_zscore(v_mode, u_probe, grid, 2.0, 20.0) == doctest::Approx(0.0));

    // the documented plug-in case: w/sum_w = 0.1 and v - v* = 2 sigma -> z = 0.2
    const double n_v = double(grid.v_axis.size());
    double mean = 0.0;
    for (size_t j = 0; j < grid.v_axis.size(); ++j)
        mean += grid.v_axis[j] * grid.conditional(10, int(j));
    mean /= n_v;
    double var = 0.0;
    for (double vj : grid.v_axis) var += (vj - mean) * (vj - mean);
    var /= n_v;
    const double sigma = std::sqrt(var);
    // plug-in arithmetic with an exactly on-grid offset: z = (w/sum_w) * offset / sigma.
    // sigma follows the verbatim column formula, which is axis-scale, so a
    // grid-sized offset (not 2 sigma) keeps the probe inside the value range.
    const double offset = 8.0 * grid.dv;
    const double z = weighted_zscore(v_mode + offset, u_probe, grid, 1.0, 10.0);
    CHECK(z == doctest::Approx(0.1 * offset / sigma).epsilon(1e-9));

    // sign flips across the modal curve
    CHECK(weighted_zscore(v_mode + 5 * grid.dv, u_probe, grid, 1.0, 10.0) > 0.0);
    CHECK(weighted_zscore(v_mode - 5 * grid.dv, u_probe, grid, 1.0, 10.0) < 0.0);
}

TEST_CASE("z-score ranking is invariant to a common rescale of values and grid")
{
    std::mt19937_64 eng(14);
    std::vector<double> u, v, w;
    for (int i = 0; i < 200; ++i) {
        u.push_back(double(eng() >> 11) * 0x1.0p-53);
        v.push_back(0.2 + 0.6 * u.back() + 0.05 * (double(eng() >> 11) * 0x1.0p-53 - 0.5));
        w.push_back(1.0 + double(eng() % 3));
    }
    const DensityGrid g1 = weighted_kde_grid(u, v, w, 0.4, 15, 40);
    std::vector<double> v3;
    for (double y : v) v3.push_back(3.0 * y);
    const DensityGrid g3 = weighted_kde_grid(u, v3, w, 0.4, 15, 40);

    double sum_w = 0.0;
    for (double x : w) sum_w += x;
    for (size_t i = 0; i < u.size(); ++i) {
        const double z1 = weighted_zscore(v[i], u[i], g1, w[i], sum_w);
        const double z3 = weighted_zscore(v3[i], u[i], g3, w[i], sum_w);
        CHECK(z1 == doctest::Approx(z3).epsilon(1e-6));
    }
}

TEST_CASE("psi population bins use equal city counts")
{
    std::vector<double> pops, psis;
    for (int i = 0; i < 16; ++i) {
        pops.push_back(double(100000 * (i + 1)));
        psis.push_back(0.1 + 0.05 * i);
    }
    const auto rows = psi_population_bins(pops, psis, 8);
    REQUIRE(rows.size() == 8);
    for (const auto& row : rows) CHECK(row.cities == 2);
    CHECK(rows.front().mean_psi == doctest::Approx(0.125));
    CHECK(rows.back().mean_psi == doctest::Approx(0.1 + 0.05 * 14.5));
    // bins are ordered by population
    for (size_t b = 1; b < rows.size(); ++b)
        CHECK(rows[b].mean_population > rows[b - 1].mean_population);
}
