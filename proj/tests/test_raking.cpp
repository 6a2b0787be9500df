#include "availprop/raking.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>

using namespace availprop;

namespace {

// 2x2 seed table as four items classified on a row and a column dimension.
std::vector<RakingItem> grid_items(const std::vector<std::vector<double>>& table)
{
    std::vector<RakingItem> items;
    for (size_t r = 0; r < table.size(); ++r)
        for (size_t c = 0; c < table[r].size(); ++c)
            items.push_back({{{"row", "r" + std::to_string(r)}, {"col", "c" + std::to_string(c)}},
                             table[r][c]});
    return items;
}

RakingSpec row_col_spec(std::map<std::string, double> rows, std::map<std::string, double> cols)
{
    RakingSpec spec;
    RakingStage stage;
    stage.axes.push_back({{"row"}, std::move(rows)});
    stage.axes.push_back({{"col"}, std::move(cols)});
    spec.stages.push_back(std::move(stage));
    return spec;
}

} // namespace

TEST_CASE("classic 2x2 IPF converges to the hand-derived fixed point")
{
    const auto items = grid_items({{1, 1}, {1, 1}});
    const RakingSpec spec = row_col_spec({{"r0", 3}, {"r1", 1}}, {{"c0", 2}, {"c1", 2}});
    const RakingResult res = rake(items, spec);
    REQUIRE(res.converged);
    // scale rows to (3,1): [[1.5,1.5],[0.5,0.5]]; columns already (2,2)
    CHECK(res.weights[0] == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(res.weights[1] == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(res.weights[2] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(res.weights[3] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("targets proportional to current marginals are a fixed point")
{
    const auto items = grid_items({{2, 1}, {4, 3}});
    RakingSpec spec;
    RakingStage stage;
    stage.axes.push_back({{"row"}, {{"r0", 3}, {"r1", 7}}}); // current row sums
    spec.stages.push_back(stage);
    const RakingResult res = rake(items, spec);
    REQUIRE(res.converged);
    CHECK(res.stages[0].iterations == 1);
    for (size_t i = 0; i < items.size(); ++i)
        CHECK(res.weights[i] == doctest::Approx(items[i].weight).epsilon(1e-12));
}

TEST_CASE("single-axis raking is exact after one pass")
{
    const auto items = grid_items({{2, 1}, {4, 3}});
    RakingSpec spec;
    RakingStage stage;
    stage.axes.push_back({{"row"}, {{"r0", 30}, {"r1", 70}}});
    spec.stages.push_back(stage);
    const RakingResult res = rake(items, spec);
    REQUIRE(res.converged);
    CHECK(res.stages[0].iterations == 1);
    CHECK(res.weights[0] + res.weights[1] == doctest::Approx(30.0));
    CHECK(res.weights[2] + res.weights[3] == doctest::Approx(70.0));
    // within a row, relative proportions are untouched
    CHECK(res.weights[0] / res.weights[1] == doctest::Approx(2.0));
}

TEST_CASE("raking preserves weight positivity")
{
    std::mt19937_64 eng(13);
    auto unit = [&] { return double(eng() >> 11) * 0x1.0p-53; };
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> table(3, std::vector<double>(3));
        for (auto& row : table)
            for (double& w : row) w = 0.05 + unit();
        const auto items = grid_items(table);
        std::map<std::string, double> rows, cols;
        double total = 0.0;
        std::vector<double> row_t(3), col_t(3);
        for (int r = 0; r < 3; ++r) row_t[size_t(r)] = 1.0 + 9.0 * unit();
        for (double v : row_t) total += v;
        // column targets share the grand total
        double ct = 0.0;
        for (int c = 0; c < 2; ++c) {
            col_t[size_t(c)] = total * (0.2 + 0.3 * unit());
            ct += col_t[size_t(c)];
        }
        col_t[2] = total - ct;
        for (int r = 0; r < 3; ++r) rows["r" + std::to_string(r)] = row_t[size_t(r)];
        for (int c = 0; c < 3; ++c) cols["c" + std::to_string(c)] = col_t[size_t(c)];
        const RakingResult res = rake(items, row_col_spec(rows, cols));
        for (double w : res.weights) CHECK(w > 0.0);
        if (res.converged)
            CHECK(res.stages[0].max_rel_error < 1e-6);
    }
}

TEST_CASE("idempotence: raking a converged table applies unit factors")
{
    const auto items = grid_items({{1, 2}, {3, 4}});
    const RakingSpec spec = row_col_spec({{"r0", 4}, {"r1", 6}}, {{"c0", 5}, {"c1", 5}});
    const RakingResult first = rake(items, spec);
    REQUIRE(first.converged);

    std::vector<RakingItem> converged = items;
    for (size_t i = 0; i < items.size(); ++i) converged[i].weight = first.weights[i];
    const RakingResult second = rake(converged, spec);
    REQUIRE(second.converged);
    for (size_t i = 0; i < items.size(); ++i) {
        const double factor = second.weights[i] / first.weights[i];
        CHECK(std::fabs(factor - 1.0) < 1e-6);
    }
}

TEST_CASE("stage order is honored exactly as configured")
{
    // asymmetric fixture: stage targets conflict, so the later stage wins
    const auto items = grid_items({{1, 2}, {3, 4}});
    RakingSpec ab;
    {
        RakingStage s1, s2;
        s1.axes.push_back({{"row"}, {{"r0", 8}, {"r1", 2}}});
        s2.axes.push_back({{"col"}, {{"c0", 3}, {"c1", 7}}});
        ab.stages = {s1, s2};
    }
    RakingSpec ba;
    ba.stages = {ab.stages[1], ab.stages[0]};

    const RakingResult res_ab = rake(items, ab);
    const RakingResult res_ba = rake(items, ba);
    bool differs = false;
    for (size_t i = 0; i < items.size(); ++i)
        if (std::fabs(res_ab.weights[i] - res_ba.weights[i]) > 1e-9) differs = true;
    CHECK(differs);

    // the final stage's margins hold exactly
    CHECK(res_ab.weights[0] + res_ab.weights[2] == doctest::Approx(3.0));
    CHECK(res_ba.weights[0] + res_ba.weights[1] == doctest::Approx(8.0));
}

TEST_CASE("structural zeros and inconsistent totals are rejected")
{
    const auto items = grid_items({{1, 1}, {1, 1}});
    // occupied cell with no target
    RakingSpec missing = row_col_spec({{"r0", 2}}, {{"c0", 1}, {"c1", 1}});
    CHECK_THROWS_AS(rake(items, missing), StructuralZeroError);

    // grand totals differ between axes of one stage
    RakingSpec inconsistent = row_col_spec({{"r0", 3}, {"r1", 1}}, {{"c0", 5}, {"c1", 5}});
    CHECK_THROWS_AS(rake(items, inconsistent), std::invalid_argument);

    // target cell with no respondents: warn and drop
    RakingSpec extra = row_col_spec({{"r0", 2}, {"r1", 2}, {"ghost", 0.0}},
                                    {{"c0", 2}, {"c1", 2}});
    const RakingResult res = rake(items, extra);
    CHECK(res.converged);

    RakingSpec ghost_mass = row_col_spec({{"r0", 2}, {"r1", 2}, {"ghost", 1.0}},
                                         {{"c0", 2.5}, {"c1", 2.5}});
    const RakingResult res2 = rake(items, ghost_mass);
    CHECK(!res2.warnings.empty());
}

TEST_CASE("marginal report matches direct sums")
{
    const auto items = grid_items({{1, 2}, {3, 4}});
    const RakingSpec spec = row_col_spec({{"r0", 3}, {"r1", 7}}, {{"c0", 4}, {"c1", 6}});
    const MarginalReport report = marginal_report(items, spec);
    CHECK(report.total_weight == doctest::Approx(10.0));
    for (const auto& row : report.rows) {
        if (row.stage == 0 && row.axis == 0 && row.cell == "r0") {
            CHECK(row.achieved == doctest::Approx(3.0));
            CHECK(row.rel_error == doctest::Approx(0.0));
        }
        if (row.stage == 0 && row.axis == 1 && row.cell == "c0") {
            CHECK(row.achieved == doctest::Approx(4.0));
        }
    }

    // skewed targets against uniform weights show nonzero errors
    const MarginalReport skew =
        marginal_report(grid_items({{1, 1}, {1, 1}}), row_col_spec({{"r0", 9}, {"r1", 1}},
                                                                   {{"c0", 5}, {"c1", 5}}));
    bool nonzero = false;
    for (const auto& row : skew.rows)
        if (row.rel_error > 0.1) nonzero = true;
    CHECK(nonzero);
}
