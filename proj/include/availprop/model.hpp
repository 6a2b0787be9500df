#pragma once

#include "availprop/activity.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace availprop {

// A city (CBSA). log_population is derived, never stored independently.
struct Location {
    std::string id;          // CBSA code
    std::string name;
    long long population = 0;

    double log_population() const { return std::log10(double(population)); }
};

Location make_location(std::string id, long long population, std::string name = "");

// Ordered vector of categorical personal characteristics; the component
// names live in the dataset's StratumSchema, values here are positional.
struct Stratum {
    std::vector<std::string> values;

    bool operator==(const Stratum&) const = default;
    auto operator<=>(const Stratum&) const = default;
    std::string key() const;
};

struct StratumSchema {
    std::vector<std::string> names;                       // e.g. age, sex, race, education
    std::vector<std::vector<std::string>> categories;     // declared category sets, per component

    void validate(const Stratum& s) const;                // throws on arity/category mismatch
};

// Availability answer categories of the binned family-count question.
// Index into the canonical bin schema {[0,0],[1,5],[6,10],[11,15],[16,20],[21,inf)}.
inline constexpr int kAvailabilityBinCount = 6;
int availability_bin_from_string(const std::string& s);   // "0","1-5",...,"21+"
std::string availability_bin_to_string(int bin);

// One surveyed person. Diary flags/durations are stored per base activity
// code; activity-day values are derived with the day type of the single
// diary day. Durations are hours.
struct Respondent {
    std::string id;
    std::string location_id;
    Stratum stratum;
    double weight = 0.0;
    std::optional<std::string> diary_date;            // YYYY-MM-DD, diary surveys only
    DayType diary_day = DayType::any;                 // derived from diary date
    std::map<std::string, int> interactions;          // base code -> {0,1}, nclf
    std::map<std::string, double> durations;          // base code -> hours
    std::optional<int> nonfamily_interaction;         // any-activity flag, non-coresident non-family
    std::optional<int> availability_bin;              // present on PSTS-style records
    std::optional<long long> calls;                   // interviewer call count
    std::vector<std::string> tags;                    // single-characteristic markers for diagnostics

    // a_i(alpha): OR over constituent base codes with matching day type.
    int interacts(const ActivityDay& alpha, const AlphaRegistry& reg) const;
    // t_i(alpha): total hours over constituent base codes, 0 unless interacts().
    double duration_hours(const ActivityDay& alpha, const AlphaRegistry& reg) const;
    bool has_tag(const std::string& tag) const;

    // Enforces w >= 0 and t(alpha) > 0 => a(alpha) = 1; throws on violation.
    void validate() const;
};

// Sample cell of a stratified survey: respondents sharing (location, stratum).
struct StratumCell {
    std::string location_id;
    Stratum stratum;
    long long sample_size = 0;   // s(g,c)
    double weight = 0.0;         // w(g,c), persons per respondent

    // Q(g,c) = w(g,c) * s(g,c)
    double target_population() const { return weight * double(sample_size); }
};

} // namespace availprop
