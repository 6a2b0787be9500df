#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace availprop {

// One marginal constraint: a cross-classification of the named dimensions,
// with a target population per cell. Cell keys join the category values
// with '|' in dims order.
struct RakingAxis {
    std::vector<std::string> dims;
    std::map<std::string, double> targets;
};

// A stage is raked to convergence over its axes before the next stage runs;
// stage order therefore matters and is honored exactly as configured.
struct RakingStage {
    std::vector<RakingAxis> axes;
};

struct RakingSpec {
    std::vector<RakingStage> stages;
    double tolerance = 1e-6;        // max relative marginal error
    long long max_iterations = 1000; // per stage

    // Targets within a stage must share grand totals within tolerance.
    void validate() const;
};

struct RakingItem {
    std::map<std::string, std::string> categories; // dim -> value
    double weight = 0.0;
};

struct StageReport {
    long long iterations = 0;
    double max_rel_error = 0.0;
    bool converged = false;
};

struct RakingResult {
    std::vector<double> weights;
    bool converged = false;
    std::vector<StageReport> stages;
    std::vector<std::string> warnings; // structural zeros dropped from adjustment
};

struct StructuralZeroError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Iterative proportional fitting. Initial weights must be positive; every
// item must be classified on every dimension an axis references. Weights
// stay positive throughout. Non-convergence within max_iterations is
// reported via the flags, not thrown.
RakingResult rake(const std::vector<RakingItem>& items, const RakingSpec& spec);

struct MarginalRow {
    int stage = 0;
    int axis = 0;
    std::string cell;
    double achieved = 0.0;
    double target = 0.0;
    double rel_error = 0.0;
};

struct MarginalReport {
    std::vector<MarginalRow> rows;
    double total_weight = 0.0; // sum of item weights
};

MarginalReport marginal_report(const std::vector<RakingItem>& items, const RakingSpec& spec);

} // namespace availprop
