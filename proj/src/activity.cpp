#include "availprop/activity.hpp"

#include <stdexcept>

namespace availprop {

std::string to_string(DayType d)
{
    switch (d) {
        case DayType::weekday: return "weekday";
        case DayType::weekend: return "weekend";
        case DayType::any: return "any";
    }
    throw std::logic_error("unreachable day type");
}

DayType day_type_from_string(const std::string& s)
{
    if (s == "weekday") return DayType::weekday;
    if (s == "weekend") return DayType::weekend;
    if (s == "any") return DayType::any;
    throw std::invalid_argument("unknown day type: " + s);
}

DayType day_type_from_date(int year, int month, int day)
{
    if (month < 1 || month > 12 || day < 1 || day > 31)
        throw std::invalid_argument("invalid date");
    // Sakamoto's day-of-week; 0 = Sunday.
    static const int t[] = {0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4};
    int y = year - (month < 3);
    int dow = (y + y / 4 - y / 100 + y / 400 + t[month - 1] + day) % 7;
    return (dow == 0 || dow == 6) ? DayType::weekend : DayType::weekday;
}

ActivityDay alpha_from_label(const std::string& label)
{
    const auto pos = label.find(':');
    if (pos == std::string::npos)
        return ActivityDay{label, DayType::any};
    return ActivityDay{label.substr(0, pos), day_type_from_string(label.substr(pos + 1))};
}

namespace {
std::vector<std::string> default_base_codes()
{
    std::vector<std::string> codes;
    for (int c = 1; c <= 16; ++c) {
        char buf[3];
        buf[0] = char('0' + c / 10);
        buf[1] = char('0' + c % 10);
        buf[2] = 0;
        codes.emplace_back(buf);
    }
    codes.emplace_back("18");
    return codes;
}
} // namespace

AlphaRegistry::AlphaRegistry()
    : AlphaRegistry(default_base_codes(), {"11", "12", "13"}, {"03", "04"})
{
}

AlphaRegistry::AlphaRegistry(std::set<std::string> social_codes, std::set<std::string> care_codes)
    : AlphaRegistry(default_base_codes(), std::move(social_codes), std::move(care_codes))
{
}

AlphaRegistry::AlphaRegistry(std::vector<std::string> base_codes,
                             std::set<std::string> social_codes,
                             std::set<std::string> care_codes)
    : base_codes_(std::move(base_codes))
{
    const std::set<std::string> universe(base_codes_.begin(), base_codes_.end());
    auto declare = [&](const std::string& name, const std::set<std::string>& members) {
        for (const auto& c : members)
            if (!universe.count(c))
                throw std::invalid_argument("aggregate '" + name + "' references unknown code " + c);
        aggregates_[name] = members;
    };
    declare("social", social_codes);
    declare("care", care_codes);
    aggregates_["any"] = universe;
}

bool AlphaRegistry::is_aggregate(const std::string& code) const
{
    return aggregates_.count(code) > 0;
}

bool AlphaRegistry::is_base(const std::string& code) const
{
    for (const auto& c : base_codes_)
        if (c == code) return true;
    return false;
}

const std::set<std::string>& AlphaRegistry::members(const std::string& aggregate_code) const
{
    auto it = aggregates_.find(aggregate_code);
    if (it == aggregates_.end())
        throw std::invalid_argument("unknown aggregate code: " + aggregate_code);
    return it->second;
}

int AlphaRegistry::aggregate_activity(const std::map<std::string, int>& diary,
                                      DayType diary_day,
                                      const ActivityDay& target) const
{
    if (target.day_type != DayType::any && target.day_type != diary_day)
        return 0;
    const std::set<std::string>* codes;
    std::set<std::string> single;
    if (is_aggregate(target.activity)) {
        codes = &members(target.activity);
    } else if (is_base(target.activity)) {
        single.insert(target.activity);
        codes = &single;
    } else {
        throw std::invalid_argument("unknown activity code: " + target.activity);
    }
    for (const auto& c : *codes) {
        auto it = diary.find(c);
        if (it != diary.end() && it->second != 0) return 1;
    }
    return 0;
}

} // namespace availprop
