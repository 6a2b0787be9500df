#include "availprop/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace availprop {

Location make_location(std::string id, long long population, std::string name)
{
    if (population < 1)
        throw std::invalid_argument("location " + id + ": population must be >= 1");
    return Location{std::move(id), std::move(name), population};
}

std::string Stratum::key() const
{
    std::string k;
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) k += '|';
        k += values[i];
    }
    return k;
}

void StratumSchema::validate(const Stratum& s) const
{
    if (s.values.size() != names.size())
        throw std::invalid_argument("stratum arity mismatch: expected " +
                                    std::to_string(names.size()) + " components");
    for (size_t i = 0; i < names.size(); ++i) {
        const auto& cats = categories[i];
        if (std::find(cats.begin(), cats.end(), s.values[i]) == cats.end())
            throw std::invalid_argument("stratum component '" + names[i] +
                                        "' has undeclared category '" + s.values[i] + "'");
    }
}

namespace {
const char* kBinLabels[kAvailabilityBinCount] = {"0", "1-5", "6-10", "11-15", "16-20", "21+"};
}

int availability_bin_from_string(const std::string& s)
{
    for (int i = 0; i < kAvailabilityBinCount; ++i)
        if (s == kBinLabels[i]) return i;
    throw std::invalid_argument("unknown availability bin: " + s);
}

std::string availability_bin_to_string(int bin)
{
    if (bin < 0 || bin >= kAvailabilityBinCount)
        throw std::invalid_argument("availability bin index out of range");
    return kBinLabels[bin];
}

int Respondent::interacts(const ActivityDay& alpha, const AlphaRegistry& reg) const
{
    return reg.aggregate_activity(interactions, diary_day, alpha);
}

double Respondent::duration_hours(const ActivityDay& alpha, const AlphaRegistry& reg) const
{
    if (!interacts(alpha, reg)) return 0.0;
    double total = 0.0;
    if (reg.is_aggregate(alpha.activity)) {
        for (const auto& c : reg.members(alpha.activity)) {
            auto it = durations.find(c);
            if (it != durations.end()) total += it->second;
        }
    } else {
        auto it = durations.find(alpha.activity);
        if (it != durations.end()) total = it->second;
    }
    return total;
}

bool Respondent::has_tag(const std::string& tag) const
{
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

void Respondent::validate() const
{
    if (weight < 0.0)
        throw std::invalid_argument("respondent " + id + ": negative weight");
    for (const auto& [code, t] : durations) {
        if (t < 0.0)
            throw std::invalid_argument("respondent " + id + ": negative duration for " + code);
        auto it = interactions.find(code);
        const int a = it == interactions.end() ? 0 : it->second;
        if (t > 0.0 && a == 0)
            throw std::invalid_argument("respondent " + id + ": duration without interaction for " + code);
    }
}

} // namespace availprop
