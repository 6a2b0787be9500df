#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace availprop {

enum class DayType { weekday, weekend, any };

std::string to_string(DayType d);
DayType day_type_from_string(const std::string& s);

// ISO weekday rule: Saturday and Sunday count as weekend.
DayType day_type_from_date(int year, int month, int day);

// Activity-day vector: a 2-digit activity category (or an aggregate code)
// paired with a day type. (any, any) is the baseline "any activity, any day".
struct ActivityDay {
    std::string activity;   // "01".."18", or aggregate "any"/"social"/"care"
    DayType day_type = DayType::any;

    bool operator==(const ActivityDay&) const = default;
    auto operator<=>(const ActivityDay&) const = default;
    std::string label() const { return activity + ":" + to_string(day_type); }
};

ActivityDay alpha_from_label(const std::string& label);

inline ActivityDay alpha_any() { return {"any", DayType::any}; }

// Maps aggregate activity codes to their constituent base codes.
// The base-code universe and the aggregate memberships are configurable
// per dataset; defaults follow the 2-digit major categories 01-16 and 18,
// social = {11,12,13} and care = {03,04}.
class AlphaRegistry {
public:
    AlphaRegistry();
    AlphaRegistry(std::set<std::string> social_codes, std::set<std::string> care_codes);
    AlphaRegistry(std::vector<std::string> base_codes,
                  std::set<std::string> social_codes,
                  std::set<std::string> care_codes);

    const std::vector<std::string>& base_codes() const { return base_codes_; }
    bool is_aggregate(const std::string& code) const;
    bool is_base(const std::string& code) const;

    // Constituent base codes of an aggregate; throws on unknown codes.
    const std::set<std::string>& members(const std::string& aggregate_code) const;

    // OR semantics over constituent codes: 1 iff any matching base flag is 1
    // and the diary's day type matches the target's.
    int aggregate_activity(const std::map<std::string, int>& diary,
                           DayType diary_day,
                           const ActivityDay& target) const;

private:
    std::vector<std::string> base_codes_;
    std::map<std::string, std::set<std::string>> aggregates_;
};

} // namespace availprop
