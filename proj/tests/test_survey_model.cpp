#include "availprop/survey_model.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace availprop;

namespace {

// Brute-force Pr(y): enumerate all 4^s configurations of (a, b) vectors,
// multiply single-respondent joint probabilities, and keep those whose
// interaction count matches y. Independent of count_pmf's binomial route.
double enumerate_count_probability(long long y, int s, double kappa, double phi)
{
    double total = 0.0;
    for (unsigned a_mask = 0; a_mask < (1u << s); ++a_mask) {
        int ones = 0;
        for (int i = 0; i < s; ++i) ones += (a_mask >> i) & 1u;
        if (ones != y) continue;
        for (unsigned b_mask = 0; b_mask < (1u << s); ++b_mask) {
            double prob = 1.0;
            for (int i = 0; i < s; ++i)
                prob *= joint_probability(int((a_mask >> i) & 1u), int((b_mask >> i) & 1u),
                                          kappa, phi);
            total += prob;
        }
    }
    return total;
}

} // namespace

TEST_CASE("joint probability covers the four response combinations")
{
    CHECK(joint_probability(1, 0, 0.7, 0.4) == 0.0); // no interaction without availability
    CHECK(joint_probability(0, 0, 0.5, 0.6) == doctest::Approx(0.4));
    CHECK(joint_probability(1, 1, 0.5, 0.6) == doctest::Approx(0.30));
    CHECK_THROWS_AS(joint_probability(1, 1, 1.2, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(joint_probability(2, 0, 0.5, 0.5), std::invalid_argument);
}

TEST_CASE("joint probability sums to one over (a,b)")
{
    for (double kappa : {0.0, 0.25, 0.5, 0.9, 1.0})
        for (double phi : {0.0, 0.1, 0.6, 1.0}) {
            double total = 0.0;
            for (int a : {0, 1})
                for (int b : {0, 1}) total += joint_probability(a, b, kappa, phi);
            CHECK(std::fabs(total - 1.0) < 1e-12);
        }
}

TEST_CASE("count pmf single-draw and closed-form cases")
{
    CHECK(count_pmf(1, 1, 0.6, 0.5) == doctest::Approx(0.3));
    CHECK(count_pmf(1, 2, 1.0, 0.5) == doctest::Approx(0.5));
    CHECK_THROWS_AS(count_pmf(3, 2, 0.5, 0.5), std::invalid_argument);
}

TEST_CASE("count pmf matches the joint-model enumeration for s = 3")
{
    for (double kappa : {0.2, 0.7})
        for (double phi : {0.3, 0.9})
            for (long long y = 0; y <= 3; ++y)
                CHECK(count_pmf(y, 3, kappa, phi) ==
                      doctest::Approx(enumerate_count_probability(y, 3, kappa, phi))
                          .epsilon(1e-12));
}

TEST_CASE("count pmf normalization, mean, and log-space path")
{
    for (long long s : {5LL, 50LL, 120LL, 200LL}) {
        const double kappa = 0.37, phi = 0.81;
        double total = 0.0, mean = 0.0;
        for (long long y = 0; y <= s; ++y) {
            const double p = count_pmf(y, s, kappa, phi);
            total += p;
            mean += double(y) * p;
        }
        CHECK(std::fabs(total - 1.0) < 1e-10);
        CHECK(std::fabs(mean - double(s) * kappa * phi) < 1e-8);
    }
    // naive pow(0.04, 400) underflows to zero; the log-space path does not
    CHECK(count_pmf(400, 10000, 0.2, 0.2) == doctest::Approx(0.0203541900).epsilon(1e-8));
}

namespace {

ModelParams two_cell_params(double kappa, double phi, long long s)
{
    ModelParams params;
    for (int c = 0; c < 2; ++c) {
        CellParams cell;
        cell.location_id = "10001";
        cell.stratum.values = {"g" + std::to_string(c)};
        cell.sample_size = s;
        cell.weight = 3.0;
        cell.phi = phi;
        cell.kappa[{"11", DayType::any}] = kappa;
        params.cells.push_back(cell);
    }
    return params;
}

} // namespace

TEST_CASE("generated surveys honor degenerate parameters")
{
    const auto zero = generate_survey(two_cell_params(0.0, 0.5, 200), 9);
    for (const auto& r : zero) CHECK(r.interactions.at("11") == 0);

    const auto all = generate_survey(two_cell_params(1.0, 1.0, 200), 9);
    for (const auto& r : all) {
        CHECK(r.interactions.at("11") == 1);
        CHECK(*r.availability_bin == 1);
    }
}

TEST_CASE("generated samples never contain interaction without availability")
{
    const auto sample = generate_survey(two_cell_params(0.8, 0.3, 500), 17);
    for (const auto& r : sample) {
        if (*r.availability_bin == 0) CHECK(r.interactions.at("11") == 0);
        if (r.interactions.at("11") == 1) CHECK(r.durations.count("11") == 1);
        r.validate();
    }
}

TEST_CASE("sample mean concentrates around kappa*phi")
{
    // kappa*phi = 0.12 with a large sample: binomial 3-sigma band
    ModelParams params = two_cell_params(0.3, 0.4, 500000);
    const auto sample = generate_survey(params, 31);
    double mean = 0.0;
    for (const auto& r : sample) mean += r.interactions.at("11");
    mean /= double(sample.size());
    const double expect = 0.12;
    const double band = 3.0 * std::sqrt(expect * (1.0 - expect) / double(sample.size()));
    CHECK(std::fabs(mean - expect) < band);
}

TEST_CASE("generation is deterministic for a fixed seed")
{
    const auto a = generate_survey(two_cell_params(0.4, 0.7, 300), 123);
    const auto b = generate_survey(two_cell_params(0.4, 0.7, 300), 123);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].weight == b[i].weight);
        CHECK(a[i].interactions == b[i].interactions);
        CHECK(a[i].durations == b[i].durations);
        CHECK(a[i].diary_date == b[i].diary_date);
        CHECK(a[i].availability_bin == b[i].availability_bin);
        CHECK(a[i].calls == b[i].calls);
    }
    const auto c = generate_survey(two_cell_params(0.4, 0.7, 300), 124);
    bool any_diff = false;
    for (size_t i = 0; i < a.size() && !any_diff; ++i)
        any_diff = a[i].interactions != c[i].interactions || a[i].diary_date != c[i].diary_date;
    CHECK(any_diff);
}

TEST_CASE("empty parameter sets are rejected")
{
    CHECK_THROWS_AS(generate_survey(ModelParams{}, 1), std::invalid_argument);
    ModelParams bad = two_cell_params(0.5, 1.5, 10);
    CHECK_THROWS_AS(generate_survey(bad, 1), std::invalid_argument);
}

TEST_CASE("cell subseeds differ across cells and seeds")
{
    Stratum s1{{"a"}}, s2{{"b"}};
    CHECK(cell_subseed(1, "x", s1) != cell_subseed(1, "x", s2));
    CHECK(cell_subseed(1, "x", s1) != cell_subseed(1, "y", s1));
    CHECK(cell_subseed(1, "x", s1) != cell_subseed(2, "x", s1));
    CHECK(cell_subseed(1, "x", s1) == cell_subseed(1, "x", s1));
}
