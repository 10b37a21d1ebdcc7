// rowhammer: command-line experiment runner.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration or usage
// error, 3 simulation error (illegal command, timing violation, ...).

#include "rowhammer/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSimulation = 3;

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    unsigned jobs = 1;
    bool paper_scale = false;
    std::optional<std::string> mitigation;
    std::optional<double> p;
    std::optional<double> threshold;
    std::optional<double> trefw_ms;
};

rowhammer::ExperimentConfig resolve(const GlobalFlags& f)
{
    rowhammer::ExperimentConfig cfg = f.config.empty() ? rowhammer::ExperimentConfig{} : rowhammer::load_config(f.config);
    if (f.seed)
        cfg.seed = *f.seed;
    if (f.out)
        cfg.out = *f.out;
    if (f.paper_scale)
        cfg.scale = 1.0;
    if (f.mitigation)
        cfg.mitigation.kind = rowhammer::parse_mitigation_kind(*f.mitigation);
    if (f.p)
        cfg.mitigation.p = *f.p;
    if (f.threshold)
        cfg.mitigation.counter_threshold = *f.threshold;
    if (f.trefw_ms)
        cfg.mitigation.refresh_t_refw_ms = *f.trefw_ms;
    cfg.validate();
    return cfg;
}

void print_report(const char* what, const rowhammer::ErrorReport& r)
{
    std::cout << what << ": " << r.total() << " flips (" << r.flips_1to0 << " 1->0, " << r.flips_0to1 << " 0->1) in "
              << r.rows_affected() << " rows; " << r.demand_activations << " activations, " << r.mitigation_activations
              << " mitigation activations\n";
}

} // namespace

int main(int argc, char** argv)
{
    using namespace rowhammer;
    CLI::App app{"DRAM disturbance-error simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GlobalFlags flags;
    app.add_option("--config", flags.config, "JSON experiment configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", flags.seed, "Base seed (overrides the config)");
    app.add_option("--out", flags.out, "Output directory (overrides the config)");
    app.add_option("--jobs", flags.jobs, "Parallel sweep points")->check(CLI::PositiveNumber);
    app.add_flag("--paper-scale", flags.paper_scale, "Full-scale windows and thresholds instead of desk scale");
    app.add_option("--mitigation", flags.mitigation, "none, para, counter, refresh or ecc");
    app.add_option("--p", flags.p, "PARA probability");
    app.add_option("--threshold", flags.threshold, "Counter mitigation activation threshold (full-scale units)");
    app.add_option("--trefw-ms", flags.trefw_ms, "Refresh window under refresh scaling, ms (full-scale units)");

    auto* characterize = app.add_subcommand("characterize", "Row-by-row characterization of the whole module");
    auto* hammer = app.add_subcommand("hammer", "Hammer a row pair (or one row) through the controller");
    HammerOptions hopt;
    hammer->add_option("--requests", hopt.requests_in, "Run this request trace instead of the configured hammer")
        ->check(CLI::ExistingFile);
    hammer->add_option("--dump-requests", hopt.requests_dump, "Write the generated request trace");
    hammer->add_option("--dump-commands", hopt.commands_dump, "Write the issued command trace");
    auto* sweep = app.add_subcommand("sweep", "Characterize once per sweep point");
    auto* mitigate = app.add_subcommand("mitigate-eval", "Compare mitigations on one fault map");
    auto* para = app.add_subcommand("para-analysis", "PARA failure-rate grid: bounds, exact values, Monte Carlo");
    for (auto* sub : {characterize, hammer, sweep, mitigate, para})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        const ExperimentConfig cfg = resolve(flags);
        if (characterize->parsed()) {
            const auto reports = cmd_characterize(cfg);
            for (std::size_t i = 0; i < reports.size(); ++i)
                print_report(("iteration " + std::to_string(i)).c_str(), reports[i]);
        } else if (hammer->parsed()) {
            print_report("hammer", cmd_hammer(cfg, hopt));
        } else if (sweep->parsed()) {
            for (const auto& row : cmd_sweep(cfg, flags.jobs))
                std::cout << to_string(cfg.sweep.axis) << ' ' << row.axis_value << ": " << row.flips_total << " flips\n";
        } else if (mitigate->parsed()) {
            for (const auto& row : cmd_mitigate_eval(cfg))
                print_report(std::string(to_string(row.kind)).c_str(), row.report);
        } else if (para->parsed()) {
            for (const auto& r : cmd_para_analysis(cfg))
                std::cout << "p=" << format_double(r.p) << " n_th=" << r.n_th << ": bound " << format_double(r.union_bound)
                          << ", exact " << format_double(r.expected) << ", monte carlo " << format_double(r.mc.mean) << " ["
                          << format_double(r.mc.ci_low) << ", " << format_double(r.mc.ci_high) << "]\n";
        }
        std::cout << "output: " << cfg.out << '\n';
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "simulation error: " << e.what() << '\n';
        return kExitSimulation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitOther;
    }
}
