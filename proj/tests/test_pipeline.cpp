#include "availprop/pipeline.hpp"

#include "availprop/csv.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace availprop;
namespace fs = std::filesystem;

namespace {

// Scratch directory fixture; removed on destruction.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / ("availprop_test_" + name))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& rel) const { return (path / rel).string(); }
};

void write_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    out << content;
}

SimSpec small_spec()
{
    SimSpec spec;
    spec.n_cities = 12;
    spec.n_strata = 2;
    spec.atus_sample_per_city = 120;
    spec.psts_sample_per_city = 60;
    spec.seed = 5;
    return spec;
}

PipelineConfig config_for(const TempDir& dir, const std::string& out_name)
{
    PipelineConfig cfg;
    cfg.atus_csv = dir.file("sim/atus.csv");
    cfg.psts_csv = dir.file("sim/psts.csv");
    cfg.units_csv = dir.file("sim/units.csv");
    cfg.crosswalk_csv = dir.file("sim/crosswalk.csv");
    cfg.population_csv = dir.file("sim/population.csv");
    cfg.alpha_labels = {"any:any", "11:any"};
    cfg.k_values = {1, 2};
    cfg.n_u = 64;
    cfg.n_v = 64;
    cfg.output_dir = dir.file(out_name);
    return cfg;
}

} // namespace

TEST_CASE("well-formed fixture ingests with zero rejects")
{
    TempDir dir("ingest_ok");
    write_file(dir.file("pop.csv"), "cbsa,name,population\n10001,Alpha,250000\n");
    write_file(dir.file("xwalk.csv"), "fips,cbsa\n01001,10001\n");
    write_file(dir.file("atus.csv"),
               "id,fips,weight,diary_date,calls,a_nonfam,tags,c_grp,a11,t11\n"
               "r1,01001,10.5,2019-01-07,2,1,renter,g0,1,1.5\n"
               "r2,01001,12.0,2019-01-12,1,0,,g1,0,0\n"
               "r3,01001,9.0,2019-01-08,3,1,renter;old,g0,1,2.0\n"
               "r4,01001,11.0,2019-01-09,1,0,,g1,0,0\n"
               "r5,01001,8.5,2019-01-13,2,1,,g0,1,0.5\n");
    write_file(dir.file("psts.csv"),
               "id,cbsa,weight,avail_bin,c_grp\np1,10001,3.0,1-5,g0\np2,10001,2.0,0,g1\n");

    PipelineConfig cfg;
    cfg.atus_csv = dir.file("atus.csv");
    cfg.psts_csv = dir.file("psts.csv");
    cfg.crosswalk_csv = dir.file("xwalk.csv");
    cfg.population_csv = dir.file("pop.csv");

    const Dataset data = ingest(cfg);
    CHECK(data.report.atus_total == 5);
    CHECK(data.report.atus_accepted == 5);
    CHECK(data.report.psts_accepted == 2);
    CHECK(data.report.rejects.empty());
    REQUIRE(data.cities.count("10001") == 1);
    const CityData& city = data.cities.at("10001");
    CHECK(city.atus.size() == 5);
    CHECK(city.atus[0].diary_day == DayType::weekday);
    CHECK(city.atus[1].diary_day == DayType::weekend);
    CHECK(city.atus[2].has_tag("old"));
    CHECK(data.atus_schema.names == std::vector<std::string>{"grp"});
}

TEST_CASE("invalid rows are rejected with reasons and counts add up")
{
    TempDir dir("ingest_bad");
    write_file(dir.file("pop.csv"), "cbsa,name,population\n10001,Alpha,250000\n");
    write_file(dir.file("xwalk.csv"), "fips,cbsa\n01001,10001\n01003,\n");
    write_file(dir.file("atus.csv"),
               "id,fips,weight,diary_date,a11,t11\n"
               "r1,01001,10.5,2019-01-07,1,1.5\n"
               "r2,01001,-1,2019-01-07,0,0\n"      // negative weight
               "r3,01001,3.0,2019-01-07,0,2.0\n"   // duration without interaction
               "r4,99999,3.0,2019-01-07,1,1\n"     // unmapped fips
               "r5,01003,3.0,2019-01-07,1,1\n"     // suppressed cbsa
               "r6,01001,3.0,,1,1\n");             // missing diary date
    write_file(dir.file("psts.csv"),
               "id,cbsa,weight,avail_bin\np1,10001,3.0,1-5\np2,10001,2.0,7ish\n");

    PipelineConfig cfg;
    cfg.atus_csv = dir.file("atus.csv");
    cfg.psts_csv = dir.file("psts.csv");
    cfg.crosswalk_csv = dir.file("xwalk.csv");
    cfg.population_csv = dir.file("pop.csv");

    const Dataset data = ingest(cfg);
    CHECK(data.report.atus_total == 6);
    CHECK(data.report.atus_accepted == 1);
    CHECK(data.report.psts_accepted == 1);
    REQUIRE(data.report.rejects.size() == 6);
    CHECK((long long)data.report.rejects.size() ==
          (data.report.atus_total - data.report.atus_accepted) +
              (data.report.psts_total - data.report.psts_accepted));

    bool negative = false, unmapped = false, suppressed = false;
    for (const auto& rej : data.report.rejects) {
        if (rej.reason.find("negative weight") != std::string::npos) {
            negative = true;
            CHECK(rej.line == 3);
        }
        if (rej.reason.find("unmapped fips") != std::string::npos) unmapped = true;
        if (rej.reason.find("unidentified cbsa") != std::string::npos) suppressed = true;
    }
    CHECK(negative);
    CHECK(unmapped);
    CHECK(suppressed);
}

TEST_CASE("durations declared in minutes are converted to hours")
{
    TempDir dir("minutes");
    write_file(dir.file("pop.csv"), "cbsa,name,population\n10001,Alpha,250000\n");
    write_file(dir.file("atus.csv"),
               "id,cbsa,weight,diary_date,a11,t11\nr1,10001,1.0,2019-01-07,1,90\n");
    write_file(dir.file("psts.csv"), "id,cbsa,weight,avail_bin\np1,10001,1.0,1-5\n");
    PipelineConfig cfg;
    cfg.atus_csv = dir.file("atus.csv");
    cfg.psts_csv = dir.file("psts.csv");
    cfg.population_csv = dir.file("pop.csv");
    cfg.durations_in_minutes = true;
    const Dataset data = ingest(cfg);
    CHECK(data.cities.at("10001").atus[0].durations.at("11") == doctest::Approx(1.5));
}

TEST_CASE("missing required columns fail fast")
{
    TempDir dir("ingest_cols");
    write_file(dir.file("pop.csv"), "cbsa,name,population\n10001,Alpha,250000\n");
    write_file(dir.file("atus.csv"), "id,weight\nr1,1\n"); // no cbsa/fips
    write_file(dir.file("psts.csv"), "id,cbsa,weight\np1,10001,1\n");
    PipelineConfig cfg;
    cfg.atus_csv = dir.file("atus.csv");
    cfg.psts_csv = dir.file("psts.csv");
    cfg.population_csv = dir.file("pop.csv");
    CHECK_THROWS_AS(ingest(cfg), ValidationError);
}

TEST_CASE("simulated surveys round-trip through ingestion")
{
    TempDir dir("roundtrip");
    const SimSpec spec = small_spec();
    simulate(spec, dir.file("sim"));

    PipelineConfig cfg = config_for(dir, "out");
    const Dataset data = ingest(cfg);
    CHECK(data.report.rejects.empty());
    CHECK(data.report.atus_accepted == 12 * 120);
    CHECK(data.report.psts_accepted == 12 * 60);

    // estimator parity with the in-memory survey
    const auto respondents = generate_survey(spec.build_params(false), spec.seed);
    const AlphaRegistry reg;
    std::map<std::string, std::vector<Respondent>> by_city;
    for (const auto& r : respondents) by_city[r.location_id].push_back(r);
    for (const auto& [cbsa, city] : data.cities) {
        const double direct = interaction_rate(by_city.at(cbsa), {"11", DayType::any}, reg);
        const double ingested = interaction_rate(city.atus, {"11", DayType::any}, reg);
        CHECK(ingested == doctest::Approx(direct).epsilon(1e-9));
    }
}

TEST_CASE("estimates cover every metric and respect the filter")
{
    TempDir dir("estimates");
    SimSpec spec = small_spec();
    spec.small_city_count = 3;
    simulate(spec, dir.file("sim"));

    PipelineConfig cfg = config_for(dir, "out");
    const Dataset data = ingest(cfg);

    const EstimateSet unfiltered = compute_estimates(data, cfg);
    CHECK(unfiltered.cities.size() == 12);
    CHECK(unfiltered.find("f", "any:any", 0) != nullptr);
    CHECK(unfiltered.find("phi", "", 1) != nullptr);
    CHECK(unfiltered.find("lambda", "any:any", 2) != nullptr);
    CHECK(unfiltered.find("t", "11:any", 0) != nullptr);
    CHECK(unfiltered.find("r", "any:any", 0) != nullptr);

    PipelineConfig filtered_cfg = cfg;
    filtered_cfg.filter_small_cities = true;
    const EstimateSet filtered = compute_estimates(data, filtered_cfg);
    CHECK(filtered.cities.size() == 9);

    // phi estimates live in [0,1] and decrease with k
    const Series* phi1 = unfiltered.find("phi", "", 1);
    const Series* phi2 = unfiltered.find("phi", "", 2);
    for (size_t i = 0; i < phi1->v.size(); ++i) {
        CHECK(phi1->v[i] >= 0.0);
        CHECK(phi1->v[i] <= 1.0);
        CHECK(phi2->v[i] <= phi1->v[i] + 1e-12);
    }
}

TEST_CASE("pipeline runs are deterministic and tagged with the config hash")
{
    TempDir dir("determinism");
    simulate(small_spec(), dir.file("sim"));

    PipelineConfig cfg1 = config_for(dir, "out1");
    PipelineConfig cfg2 = config_for(dir, "out2");
    cfg2.output_dir = dir.file("out1"); // same canonical config must share the hash
    CHECK(cfg1.config_hash() != PipelineConfig{}.config_hash());

    cfg2.output_dir = dir.file("out2");
    const RunOutcome a = run(cfg1, {Stage::estimate, Stage::trend});
    const RunOutcome b = run(cfg2, {Stage::estimate, Stage::trend});
    const bool same_outputs = a.outputs == b.outputs;
    REQUIRE(same_outputs);
    for (const auto& rel : a.outputs) {
        if (rel == "manifest.json") continue;
        std::ifstream fa(fs::path(cfg1.output_dir) / rel, std::ios::binary);
        std::ifstream fb(fs::path(cfg2.output_dir) / rel, std::ios::binary);
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        CHECK(sa.str() == sb.str());
        const bool mentions_hash = sa.str().find("config_hash") != std::string::npos ||
                                   sa.str().find(a.config_hash) != std::string::npos;
        CHECK(mentions_hash);
        // every csv data row carries the hash
        if (rel.ends_with(".csv")) {
            const CsvTable t = read_csv((fs::path(cfg1.output_dir) / rel).string());
            const int col = t.column("config_hash");
            CHECK(col >= 0);
            for (const auto& row : t.rows) CHECK(row[size_t(col)] == a.config_hash);
        }
    }

    // a different config must not silently overwrite
    PipelineConfig clash = cfg1;
    clash.bandwidth = 0.6;
    CHECK_THROWS_AS(run(clash, {Stage::estimate}), ValidationError);
    clash.force = true;
    CHECK_NOTHROW(run(clash, {Stage::estimate}));
}

TEST_CASE("calibrate writes recalibrated weights and the marginal report")
{
    TempDir dir("calibrate");
    simulate(small_spec(), dir.file("sim"));

    // global raking to synthetic group totals
    write_file(dir.file("raking.json"), R"({
        "tolerance": 1e-6,
        "max_iterations": 1000,
        "scope": "global",
        "stages": [
            {"axes": [{"dims": ["grp"], "targets": {"g0": 600000, "g1": 400000}}]},
            {"axes": [{"dims": ["day"], "targets": {"weekday": 550000, "weekend": 450000}}]}
        ]
    })");

    PipelineConfig cfg = config_for(dir, "out");
    cfg.raking_spec = dir.file("raking.json");
    const RunOutcome outcome = run(cfg, {Stage::calibrate});
    CHECK(std::find(outcome.outputs.begin(), outcome.outputs.end(), "atus_calibrated.csv") !=
          outcome.outputs.end());

    const CsvTable calibrated = read_csv(cfg.output_dir + "/atus_calibrated.csv");
    const int wcol = calibrated.column("weight");
    const int gcol = calibrated.column("c_grp");
    REQUIRE(wcol >= 0);
    double g0 = 0.0, g1 = 0.0;
    for (const auto& row : calibrated.rows) {
        const double w = std::stod(row[size_t(wcol)]);
        CHECK(w > 0.0);
        (row[size_t(gcol)] == "g0" ? g0 : g1) += w;
    }
    // the day stage ran last; group totals stay near (not exactly at) target
    CHECK(g0 + g1 == doctest::Approx(1000000.0).epsilon(1e-6));

    const CsvTable report = read_csv(cfg.output_dir + "/raking_report.csv");
    CHECK(report.column("rel_error") >= 0);
    CHECK(!report.rows.empty());
}

TEST_CASE("stage failures abort without leaving partial outputs")
{
    TempDir dir("partial");
    simulate(small_spec(), dir.file("sim"));
    PipelineConfig cfg = config_for(dir, "out");
    cfg.raking_spec = dir.file("missing.json"); // calibrate will fail
    CHECK_THROWS(run(cfg, {Stage::calibrate, Stage::estimate}));
    CHECK(!fs::exists(fs::path(cfg.output_dir) / "estimates.csv"));
    CHECK(!fs::exists(fs::path(cfg.output_dir) / "ingest_summary.json"));
}
