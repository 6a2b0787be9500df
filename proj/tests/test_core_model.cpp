#include "availprop/model.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>

using namespace availprop;

TEST_CASE("aggregate_activity follows OR semantics")
{
    const AlphaRegistry reg;
    const std::map<std::string, int> social{{"11", 1}, {"12", 0}, {"13", 0}};
    CHECK(reg.aggregate_activity(social, DayType::weekday, {"social", DayType::any}) == 1);

    const std::map<std::string, int> zeros{{"11", 0}, {"12", 0}, {"13", 0}, {"05", 0}};
    CHECK(reg.aggregate_activity(zeros, DayType::weekday, {"any", DayType::any}) == 0);
    CHECK(reg.aggregate_activity(zeros, DayType::weekend, {"social", DayType::weekend}) == 0);

    // care on a weekday: codes 03-04 combined
    const std::map<std::string, int> care{{"03", 0}, {"04", 1}};
    CHECK(reg.aggregate_activity(care, DayType::weekday, {"care", DayType::weekday}) == 1);
    CHECK(reg.aggregate_activity(care, DayType::weekday, {"care", DayType::weekend}) == 0);

    CHECK_THROWS_AS(reg.aggregate_activity(care, DayType::weekday, {"bogus", DayType::any}),
                    std::invalid_argument);
}

TEST_CASE("aggregate membership is configurable")
{
    const AlphaRegistry wide({"11", "12", "13", "14"}, {"03", "04"});
    const std::map<std::string, int> diary{{"14", 1}};
    CHECK(wide.aggregate_activity(diary, DayType::weekday, {"social", DayType::any}) == 1);

    const AlphaRegistry narrow; // default social = {11,12,13}
    CHECK(narrow.is_base("14"));
    CHECK_FALSE(narrow.members("social").count("14"));
}

TEST_CASE("aggregate flag dominates its constituents")
{
    const AlphaRegistry reg;
    std::mt19937_64 eng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::map<std::string, int> diary;
        for (const auto& code : reg.base_codes()) diary[code] = int(eng() % 2);
        const DayType day = eng() % 2 ? DayType::weekday : DayType::weekend;
        for (const std::string agg : {"any", "social", "care"}) {
            int any_base = 0;
            for (const auto& code : reg.members(agg))
                any_base = std::max(any_base,
                                    reg.aggregate_activity(diary, day, {code, DayType::any}));
            CHECK(reg.aggregate_activity(diary, day, {agg, DayType::any}) == any_base);
        }
    }
}

TEST_CASE("location log-population is exact")
{
    for (long long pop : {1LL, 300000LL, 8000000LL, 1LL << 40}) {
        const Location loc = make_location("x", pop);
        CHECK(std::fabs(loc.log_population() - std::log10(double(pop))) < 1e-12);
    }
    CHECK_THROWS_AS(make_location("x", 0), std::invalid_argument);
}

TEST_CASE("respondent validation rejects duration without interaction")
{
    Respondent r;
    r.id = "p1";
    r.weight = 2.0;
    r.interactions["11"] = 0;
    r.durations["11"] = 1.5;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);

    r.interactions["11"] = 1;
    CHECK_NOTHROW(r.validate());

    r.weight = -1.0;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
}

TEST_CASE("aggregate durations sum over constituent codes")
{
    const AlphaRegistry reg;
    Respondent r;
    r.weight = 1.0;
    r.diary_day = DayType::weekend;
    r.interactions = {{"11", 1}, {"12", 1}, {"05", 1}};
    r.durations = {{"11", 1.0}, {"12", 0.5}, {"05", 8.0}};
    CHECK(r.duration_hours({"social", DayType::any}, reg) == doctest::Approx(1.5));
    CHECK(r.duration_hours({"any", DayType::any}, reg) == doctest::Approx(9.5));
    CHECK(r.duration_hours({"social", DayType::weekday}, reg) == 0.0);
    CHECK(r.duration_hours({"care", DayType::any}, reg) == 0.0);
}

TEST_CASE("day type from date uses the ISO weekend")
{
    CHECK(day_type_from_date(2019, 1, 7) == DayType::weekday);  // Monday
    CHECK(day_type_from_date(2019, 1, 12) == DayType::weekend); // Saturday
    CHECK(day_type_from_date(2019, 1, 13) == DayType::weekend); // Sunday
    CHECK(day_type_from_date(2016, 2, 29) == DayType::weekday); // leap Monday
}

TEST_CASE("stratum cell target population")
{
    StratumCell cell{"g", Stratum{{"a", "b"}}, 25, 120.0};
    CHECK(cell.target_population() == doctest::Approx(3000.0));
}

TEST_CASE("availability bins round-trip")
{
    for (int b = 0; b < kAvailabilityBinCount; ++b)
        CHECK(availability_bin_from_string(availability_bin_to_string(b)) == b);
    CHECK_THROWS_AS(availability_bin_from_string("5-9"), std::invalid_argument);
}
