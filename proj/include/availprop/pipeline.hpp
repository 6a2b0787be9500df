#pragma once

#include "availprop/availability.hpp"
#include "availprop/diagnostics.hpp"
#include "availprop/estimators.hpp"
#include "availprop/model.hpp"
#include "availprop/raking.hpp"
#include "availprop/survey_model.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace availprop {

// Input the caller got wrong (bad config, malformed file, schema mismatch):
// the CLI maps this to exit code 2, anything else unexpected to 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Stage { calibrate, estimate, trend, diagnose, rank };
std::string to_string(Stage s);

struct StageError : std::runtime_error {
    Stage stage;
    StageError(Stage s, const std::string& what)
        : std::runtime_error("[" + to_string(s) + "] " + what), stage(s) {}
};

struct PipelineConfig {
    // inputs
    std::string atus_csv;
    std::string psts_csv;
    std::string units_csv;       // optional; required by the diagnose stage
    std::string crosswalk_csv;
    std::string population_csv;
    std::string raking_spec;     // optional JSON path; empty = keep input weights

    // analysis parameters
    std::vector<int> k_values{1, 2, 3};
    std::vector<std::string> alpha_labels{"any:any", "social:any", "care:any"};
    std::vector<std::string> social_codes{"11", "12", "13"};
    std::vector<std::string> care_codes{"03", "04"};
    bool filter_small_cities = false;
    long long min_respondents_atus = 30;
    long long min_respondents_psts = 10;
    double bandwidth = 0.75;
    int n_u = 2000;
    int n_v = 2000;
    long long nb_tail_cap = 200;
    int psi_bins = 8;
    int grid_export_max_dim = 250; // long-format grid CSVs are strided down to this
    bool durations_in_minutes = false;
    std::uint64_t seed = 1;

    // output
    std::string output_dir = "out";
    bool force = false; // allow reuse of an output dir holding a different config's results

    static PipelineConfig from_json_file(const std::string& path);
    std::string canonical_json() const;
    std::string config_hash() const; // fnv1a64 of the canonical json, hex

    AlphaRegistry make_registry() const;
    std::vector<ActivityDay> alphas() const;
};

struct RejectedRow {
    std::string file;
    size_t line = 0; // 1-based physical line number
    std::string reason;
};

struct IngestReport {
    long long atus_total = 0, atus_accepted = 0;
    long long psts_total = 0, psts_accepted = 0;
    long long units_total = 0, units_accepted = 0;
    std::vector<RejectedRow> rejects;
};

struct CityData {
    Location location;
    std::vector<Respondent> atus;
    std::vector<Respondent> psts;
    std::vector<SamplingUnit> units;
};

struct Dataset {
    std::map<std::string, CityData> cities; // keyed by CBSA, sorted
    StratumSchema atus_schema;              // discovered from the c_* columns
    IngestReport report;
};

// Reads, joins (county FIPS -> CBSA), and validates all inputs. Rows that
// fail validation land in the reject report; accepted + rejected = total.
Dataset ingest(const PipelineConfig& config);

// One trend series: a per-city scatter of (p, value) with variance weights.
struct Series {
    std::string metric;      // f | phi | lambda | t | r
    std::string alpha_label; // empty for phi
    int k = 0;               // 0 when not applicable
    std::vector<std::string> cities;
    std::vector<double> u, v, w;
    std::vector<long long> n; // per-city sample size behind each value
    long long sum_a = 0;      // unweighted interacting-respondent count
};

struct EstimateSet {
    std::vector<std::string> cities; // common to both surveys, post filter
    BinnedFit availability_fit;
    std::vector<Series> series;
    std::vector<std::string> notes;  // exclusions (e.g. no interactors for t)

    const Series* find(const std::string& metric, const std::string& alpha_label, int k) const;
};

EstimateSet compute_estimates(const Dataset& data, const PipelineConfig& config);

// Orchestrated batch run: executes the requested stages in pipeline order
// (calibrate -> estimate -> trend -> diagnose -> rank) with in-memory
// chaining, writes each stage's artifacts plus a manifest under
// config.output_dir. Deterministic for a fixed seed/config.
struct RunOutcome {
    std::vector<std::string> outputs; // paths relative to output_dir
    std::string config_hash;
};

RunOutcome run(const PipelineConfig& config, const std::vector<Stage>& stages);
RunOutcome run(const PipelineConfig& config); // all stages

// Synthetic-survey scenario: a grid of cities with availability decaying
// linearly in log-population and activity propensities constant across
// cities. Emits the same CSV schema the pipeline ingests.
struct SimSpec {
    int n_cities = 50;
    double p_min = 5.0;
    double p_max = 7.3;
    int n_strata = 4;
    long long atus_sample_per_city = 400;
    long long psts_sample_per_city = 150;
    int small_city_count = 0;             // leading cities get reduced samples
    long long small_city_atus_sample = 20;
    long long small_city_psts_sample = 8;
    double phi_intercept = 0.9;           // phi(g,c) at p = p_min
    double phi_slope = -0.12;             // per unit of log-population
    double phi_stratum_spread = 0.04;     // spread of phi across strata
    std::map<std::string, double> kappa{{"11", 0.25}, {"12", 0.15}, {"03", 0.08}};
    double response_rate = 0.5;           // drives the emitted sampling units
    std::uint64_t seed = 1;

    static SimSpec from_json_file(const std::string& path);
    std::string canonical_json() const;

    ModelParams build_params(bool psts_sizes) const;
    double phi_at(double p, int stratum_index) const;
};

// Writes atus.csv, psts.csv, population.csv, crosswalk.csv, units.csv and a
// manifest into out_dir.
std::vector<std::string> simulate(const SimSpec& spec, const std::string& out_dir);

} // namespace availprop
