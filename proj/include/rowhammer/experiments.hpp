#pragma once

// Experiment drivers behind the command-line subcommands. Each writes its
// CSV into the output directory together with a `<name>.meta.json` sidecar
// holding the resolved configuration and seeds.

#include "rowhammer/analysis.hpp"
#include "rowhammer/config.hpp"
#include "rowhammer/workloads.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace rowhammer {

inline constexpr const char* kVersion = "0.1.0";

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// Output location plus the run description copied into every sidecar.
class OutputDir {
public:
    OutputDir(const ExperimentConfig& cfg, std::string command) : dir_(cfg.out), command_(std::move(command)), config_(to_json(cfg))
    {
        seeds_ = {{"base", cfg.seed},
                  {"fault_map", derive_seed(cfg.seed, static_cast<std::uint64_t>(Stream::FaultMap))},
                  {"repeat_noise", derive_seed(cfg.seed, static_cast<std::uint64_t>(Stream::RepeatNoise))},
                  {"mitigation", derive_seed(cfg.seed, static_cast<std::uint64_t>(Stream::Mitigation))},
                  {"monte_carlo", derive_seed(cfg.seed, static_cast<std::uint64_t>(Stream::MonteCarlo))}};
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec)
            throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    }

    [[nodiscard]] std::filesystem::path path(const std::string& name) const { return dir_ / name; }

    /// Writes `name` and its sidecar. `extra` is merged into the sidecar.
    void write(const std::string& name, const std::string& content, const nlohmann::json& extra = nlohmann::json::object()) const
    {
        write_file(path(name), content);
        nlohmann::json meta;
        meta["tool"] = "rowhammer-sim";
        meta["version"] = kVersion;
        meta["command"] = command_;
        meta["file"] = name;
        meta["config"] = config_;
        meta["seeds"] = seeds_;
        for (const auto& [k, v] : extra.items())
            meta[k] = v;
        write_file(path(name + ".meta.json"), meta.dump(2) + "\n");
    }

private:
    static void write_file(const std::filesystem::path& p, const std::string& content)
    {
        std::ofstream out(p, std::ios::binary);
        if (!out || !(out << content))
            throw Error("cannot write '" + p.string() + "'");
    }

    std::filesystem::path dir_;
    std::string command_;
    nlohmann::json config_;
    nlohmann::json seeds_;
};

/// The configured fault map: loaded from file, else sampled from the seed.
inline FaultMap load_or_sample_fault_map(const ExperimentConfig& cfg)
{
    if (cfg.fault_map_file) {
        std::ifstream in(*cfg.fault_map_file);
        if (!in)
            throw ConfigError("cannot open fault map '" + *cfg.fault_map_file + "'");
        return import_fault_map(in, cfg.geometry);
    }
    return sample_fault_map(cfg.geometry, cfg.scaled_fault(), cfg.seed);
}

inline std::string flips_csv(const ErrorReport& r, std::uint64_t iteration, bool header)
{
    std::ostringstream os;
    if (header)
        os << "iteration,bank,row,col,direction,time_ns,hammered_row\n";
    for (const auto& f : r.flips)
        os << iteration << ',' << f.cell.bank << ',' << f.cell.row << ',' << f.cell.col << ','
           << (f.direction == FlipDirection::OneToZero ? "1to0" : "0to1") << ',' << f.time.count() << ',' << f.hammered_row << '\n';
    return os.str();
}

inline std::string histogram_csv(const ErrorReport& r)
{
    std::ostringstream os;
    os << "bank,row,flips\n";
    for (const auto& [key, n] : r.row_histogram)
        os << key.first << ',' << key.second << ',' << n << '\n';
    return os.str();
}

inline SweepRow summary_row(std::string label, const ErrorReport& r)
{
    return {std::move(label), r.total(), r.flips_1to0, r.flips_0to1, r.rows_affected()};
}

inline std::string sweep_csv(std::span<const SweepRow> rows)
{
    std::ostringstream os;
    write_sweep_csv(os, rows);
    return os.str();
}

/// Row-by-row characterization, `iterations` times. Writes
/// characterize_flips.csv, characterize_rows.csv (histogram of the last
/// iteration), characterize.csv (one summary row per iteration) and the
/// fault map used.
inline std::vector<ErrorReport> cmd_characterize(const ExperimentConfig& cfg)
{
    cfg.validate();
    const FaultMap map = load_or_sample_fault_map(cfg);
    const OutputDir out(cfg, "characterize");
    std::vector<ErrorReport> reports;
    std::vector<SweepRow> rows;
    std::string flips;
    for (std::uint64_t i = 0; i < cfg.iterations; ++i) {
        RunParams p = cfg.run_params();
        p.iteration = i;
        reports.push_back(characterize_row_sweep(p, map));
        rows.push_back(summary_row(std::to_string(i), reports.back()));
        flips += flips_csv(reports.back(), i, i == 0);
    }
    std::ostringstream fm;
    export_fault_map(fm, map);
    out.write("fault_map.txt", fm.str(), {{"victims", map.size()}});
    out.write("characterize_flips.csv", flips);
    out.write("characterize_rows.csv", histogram_csv(reports.back()));
    out.write("characterize.csv", sweep_csv(rows), {{"axis", "iteration"}});
    return reports;
}

struct HammerOptions {
    std::optional<std::string> requests_in;   // run this request trace instead of the hammer spec
    std::optional<std::string> requests_dump; // write the generated requests here
    std::optional<std::string> commands_dump; // write the issued commands (REF included) here
};

/// A row-pair (or single-row) hammer run through the controller. Writes hammer_flips.csv
/// and hammer.csv (summary, axis_value = hammer mode).
inline ErrorReport cmd_hammer(const ExperimentConfig& cfg, const HammerOptions& opt = {})
{
    cfg.validate();
    const FaultMap map = load_or_sample_fault_map(cfg);
    const OutputDir out(cfg, "hammer");
    RunParams p = cfg.run_params();
    std::ofstream commands;
    if (opt.commands_dump) {
        commands.open(*opt.commands_dump);
        if (!commands)
            throw ConfigError("cannot write '" + *opt.commands_dump + "'");
        p.observer = [&commands](const Command& c) { write_command(commands, c); };
    }
    ErrorReport report;
    std::string label;
    if (opt.requests_in) {
        std::ifstream in(*opt.requests_in);
        if (!in)
            throw ConfigError("cannot open request trace '" + *opt.requests_in + "'");
        const auto requests = read_request_trace(in);
        report = run_requests(p, map, requests);
        label = "trace";
    } else {
        const auto specs = cfg.hammer_specs();
        if (opt.requests_dump) {
            std::ofstream rq(*opt.requests_dump);
            if (!rq)
                throw ConfigError("cannot write '" + *opt.requests_dump + "'");
            for (const auto& s : specs)
                for_each_hammer_request(s, [&](const Request& r) { write_request(rq, r); });
        }
        report = run_hammer(p, map, specs);
        label = cfg.hammer.mode == HammerSpec::Mode::PairAlternate ? "pair" : "single";
    }
    out.write("hammer_flips.csv", flips_csv(report, 0, true));
    const std::vector<SweepRow> rows{summary_row(label, report)};
    out.write("hammer.csv", sweep_csv(rows),
              {{"axis", "hammer_mode"},
               {"demand_activations", report.demand_activations},
               {"mitigation_activations", report.mitigation_activations}});
    return report;
}

inline std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, unsigned jobs = 1)
{
    cfg.validate();
    const FaultMap map = load_or_sample_fault_map(cfg);
    const OutputDir out(cfg, "sweep");
    const auto rows = sweep_experiment(cfg.sweep.axis, cfg.sweep.points, cfg.run_params(), map, cfg.scaler(), jobs);
    out.write("sweep.csv", sweep_csv(rows), {{"axis", std::string(to_string(cfg.sweep.axis))}});
    return rows;
}

struct MitigationEvalRow {
    MitigationSpec::Kind kind;
    ErrorReport report;
    double extra_act_fraction = 0.0; // mitigation ACTs / demand ACTs
    double refresh_factor = 1.0;     // REF rate relative to the baseline window
    std::size_t state_bytes = 0;     // controller-side state
    double storage_overhead = 0.0;   // extra stored bits per data bit
};

/// Characterization under each mitigation on one fault map and seed.
inline std::vector<MitigationEvalRow> cmd_mitigate_eval(const ExperimentConfig& cfg)
{
    cfg.validate();
    const FaultMap map = load_or_sample_fault_map(cfg);
    const OutputDir out(cfg, "mitigate-eval");
    std::vector<MitigationEvalRow> rows;
    for (auto kind : cfg.eval_kinds) {
        RunParams p = cfg.run_params();
        p.mitigation = cfg.mitigation_spec(kind);
        MitigationEvalRow row{kind, characterize_row_sweep(p, map)};
        const auto& r = row.report;
        row.extra_act_fraction =
            r.demand_activations == 0 ? 0.0 : static_cast<double>(r.mitigation_activations) / static_cast<double>(r.demand_activations);
        const TimingParams t = effective_timing(p.mitigation, p.timing);
        row.refresh_factor = static_cast<double>(p.timing.t_refw.count()) / static_cast<double>(t.t_refw.count());
        row.state_bytes = make_mitigation(p.mitigation, p.geometry, t)->state_bytes();
        row.storage_overhead = kind == MitigationSpec::Kind::Ecc ? 8.0 / 64.0 : 0.0;
        rows.push_back(std::move(row));
    }
    std::ostringstream os;
    os << "axis_value,flips_total,flips_1to0,flips_0to1,rows_affected,demand_activations,mitigation_activations,"
          "extra_act_fraction,refresh_factor,state_bytes,storage_overhead,ecc_corrected_words,ecc_uncorrectable_words\n";
    for (const auto& row : rows) {
        const auto& r = row.report;
        os << to_string(row.kind) << ',' << r.total() << ',' << r.flips_1to0 << ',' << r.flips_0to1 << ',' << r.rows_affected() << ','
           << r.demand_activations << ',' << r.mitigation_activations << ',' << format_double(row.extra_act_fraction) << ','
           << format_double(row.refresh_factor) << ',' << row.state_bytes << ',' << format_double(row.storage_overhead) << ','
           << r.ecc.corrected << ',' << r.ecc.uncorrectable << '\n';
    }
    out.write("mitigate_eval.csv", os.str(), {{"axis", "mitigation"}});
    return rows;
}

struct ParaAnalysisRow {
    double p;
    std::uint64_t n_th;
    double horizon_windows;
    double horizon_union_bound;
    double horizon_expected;
    std::uint64_t mc_windows;
    double union_bound;
    double expected;
    double run_probability;
    MonteCarloEstimate mc;
};

/// Grid over (p, n_th): closed forms over the configured horizon, and the
/// exact values next to a Monte Carlo estimate over mc_windows closes.
inline std::vector<ParaAnalysisRow> cmd_para_analysis(const ExperimentConfig& cfg)
{
    cfg.validate();
    const OutputDir out(cfg, "para-analysis");
    const auto& a = cfg.para_analysis;
    std::vector<ParaAnalysisRow> rows;
    for (double p : a.p)
        for (std::uint64_t n : a.n_th) {
            ParaAnalysisInput in{p, n, a.act_rate, a.horizon_s};
            in.validate();
            const double w = static_cast<double>(a.mc_windows);
            rows.push_back({p, n, in.windows(), para_failure_rate_analytic(in), para_expected_failures(p, n, in.windows()),
                            a.mc_windows, para_union_bound(p, n, w), para_expected_failures(p, n, w),
                            para_run_probability(p, n, a.mc_windows),
                            para_failure_rate_montecarlo(p, n, a.mc_windows, a.mc_trials, cfg.seed)});
        }
    std::ostringstream os;
    os << "p,n_th,horizon_windows,horizon_union_bound,horizon_expected,mc_windows,union_bound,expected,run_probability,"
          "mc_mean,mc_ci_low,mc_ci_high,mc_trials,expected_in_ci\n";
    for (const auto& r : rows)
        os << format_double(r.p) << ',' << r.n_th << ',' << format_double(r.horizon_windows) << ','
           << format_double(r.horizon_union_bound) << ',' << format_double(r.horizon_expected) << ',' << r.mc_windows << ','
           << format_double(r.union_bound) << ',' << format_double(r.expected) << ',' << format_double(r.run_probability) << ','
           << format_double(r.mc.mean) << ',' << format_double(r.mc.ci_low) << ',' << format_double(r.mc.ci_high) << ','
           << r.mc.trials << ',' << (r.mc.contains(r.expected) ? 1 : 0) << '\n';
    out.write("para_analysis.csv", os.str());
    return rows;
}

} // namespace rowhammer
