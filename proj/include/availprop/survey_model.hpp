#pragma once

#include "availprop/model.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace availprop {

// Pr(a, b | kappa, phi) for one respondent:
//   kappa^a (1-kappa)^(1-a) phi [b=1]  +  [a=0](1-phi) [b=0].
// The four (a,b) values sum to 1; (a=1, b=0) has probability 0.
double joint_probability(int a, int b, double kappa, double phi);

// Pr(y interactions among s respondents) = C(s,y) (kappa phi)^y (1-kappa phi)^(s-y).
// Computed in log space for s > 50.
double count_pmf(long long y, long long s, double kappa, double phi);

// Model parameters for one (location, stratum) sample cell.
struct CellParams {
    std::string location_id;
    Stratum stratum;
    long long sample_size = 0;           // s(g,c), must be positive
    double weight = 1.0;                 // w(g,c), persons per respondent
    double phi = 0.0;                    // availability probability, alpha-independent
    std::map<ActivityDay, double> kappa; // interaction propensity per activity-day

    StratumCell cell() const { return {location_id, stratum, sample_size, weight}; }
};

struct ModelParams {
    std::vector<CellParams> cells;

    void validate() const; // kappa/phi in [0,1], sizes positive, non-empty
};

// Side-channel fields attached to generated respondents so that every
// downstream analysis (durations, calls, non-family comparison) has data
// to run on. These do not belong to the probabilistic model.
struct EmissionOptions {
    double nonfamily_rate = 0.45;        // Bernoulli flag for the non-family channel
    long long max_calls = 6;             // calls drawn uniform on {1..max_calls}
    double duration_min_hours = 1.0;     // durations uniform on [min, max) when interacting
    double duration_max_hours = 3.0;
};

// RNG algorithm identifier recorded in output metadata.
inline constexpr const char* kRngAlgorithm = "mt19937_64+splitmix64-subseeds";

// Deterministic per-cell subseed:
//   splitmix64( splitmix64(seed ^ fnv1a64(location_id)) ^ fnv1a64(stratum_key) ).
std::uint64_t cell_subseed(std::uint64_t seed, const std::string& location_id,
                           const Stratum& stratum);

// Draws s(g,c) independent (b, a(alpha)) tuples per cell from the joint model
// and emits full respondent records. Deterministic: cells are processed in
// sorted (location, stratum) order, each with its own subseeded engine.
// kappa keys must be base activity codes; lookup prefers the respondent's
// drawn day type over DayType::any.
std::vector<Respondent> generate_survey(const ModelParams& params, std::uint64_t seed,
                                        const EmissionOptions& opts = {});

} // namespace availprop
