#include "availprop/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

// CLI flags override the values loaded from --config.
struct CommonArgs {
    std::string config_path;
    std::string output_dir;
    bool force = false;
    long long seed = -1;
    double bandwidth = -1.0;
    int n_u = 0, n_v = 0;
    int filter = -1; // tri-state: unset/-1, off/0, on/1
    long long min_atus = -1, min_psts = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args)
{
    cmd->add_option("--config", args.config_path, "pipeline config JSON")->required();
    cmd->add_option("--out", args.output_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed, "RNG seed (overrides config)");
    cmd->add_option("--bandwidth", args.bandwidth, "KDE bandwidth factor (overrides config)");
    cmd->add_option("--n-u", args.n_u, "grid columns (overrides config)");
    cmd->add_option("--n-v", args.n_v, "grid rows (overrides config)");
    cmd->add_flag("--force", args.force, "reuse an output dir written with another config");
    cmd->add_option("--filter-small-cities", args.filter,
                    "1 = drop cities under the respondent thresholds, 0 = keep");
    cmd->add_option("--min-atus", args.min_atus, "diary-survey respondent threshold");
    cmd->add_option("--min-psts", args.min_psts, "availability-survey respondent threshold");
}

availprop::PipelineConfig resolve(const CommonArgs& args)
{
    availprop::PipelineConfig cfg = availprop::PipelineConfig::from_json_file(args.config_path);
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    if (args.seed >= 0) cfg.seed = (std::uint64_t)args.seed;
    if (args.bandwidth > 0.0) cfg.bandwidth = args.bandwidth;
    if (args.n_u > 0) cfg.n_u = args.n_u;
    if (args.n_v > 0) cfg.n_v = args.n_v;
    if (args.filter >= 0) cfg.filter_small_cities = args.filter != 0;
    if (args.min_atus >= 0) cfg.min_respondents_atus = args.min_atus;
    if (args.min_psts >= 0) cfg.min_respondents_psts = args.min_psts;
    cfg.force = cfg.force || args.force;
    return cfg;
}

int run_stages(const CommonArgs& args, const std::vector<availprop::Stage>& stages)
{
    const availprop::PipelineConfig cfg = resolve(args);
    const availprop::RunOutcome outcome = availprop::run(cfg, stages);
    std::cout << "wrote " << outcome.outputs.size() << " files to " << cfg.output_dir
              << " (config " << outcome.config_hash << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"availability/propensity decomposition of survey interaction rates"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string sim_spec_path, sim_out;

    CLI::App* simulate = app.add_subcommand("simulate", "emit a synthetic survey");
    simulate->add_option("--spec", sim_spec_path, "simulation spec JSON")->required();
    simulate->add_option("--out", sim_out, "output directory")->required();

    CLI::App* calibrate = app.add_subcommand("calibrate", "rake respondent weights");
    CLI::App* estimate = app.add_subcommand("estimate", "per-city estimate tables");
    CLI::App* trend = app.add_subcommand("trend", "WLS, spline, and modal trend analyses");
    CLI::App* diagnose = app.add_subcommand("diagnose", "coverage and non-response diagnostics");
    CLI::App* rank = app.add_subcommand("rank", "weighted z-score city rankings");
    for (CLI::App* cmd : {calibrate, estimate, trend, diagnose, rank}) add_common(cmd, args);

    CLI11_PARSE(app, argc, argv);

    using availprop::Stage;
    try {
        if (simulate->parsed()) {
            const availprop::SimSpec spec = availprop::SimSpec::from_json_file(sim_spec_path);
            const auto files = availprop::simulate(spec, sim_out);
            std::cout << "wrote " << files.size() << " files to " << sim_out << "\n";
            return 0;
        }
        if (calibrate->parsed()) return run_stages(args, {Stage::calibrate});
        if (estimate->parsed()) return run_stages(args, {Stage::estimate});
        if (trend->parsed()) return run_stages(args, {Stage::trend});
        if (diagnose->parsed()) return run_stages(args, {Stage::diagnose});
        if (rank->parsed()) return run_stages(args, {Stage::rank});
    } catch (const availprop::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
