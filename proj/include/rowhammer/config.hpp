#pragma once

// Experiment configuration (JSON). All values are nominal: windows in ms,
// intervals in ns, thresholds in activations at full scale. `scale` shrinks
// refresh windows, hammer durations and activation thresholds by one common
// factor; activation intervals and probabilities are never scaled.
//
// Unknown keys are rejected with their full path.

#include "rowhammer/workloads.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

namespace rowhammer {

inline constexpr double kDeskScale = 0.01;

struct HammerConfig {
    HammerSpec::Mode mode = HammerSpec::Mode::PairAlternate;
    BankIndex bank = 0;
    RowIndex x = 0;
    RowIndex y = 2;
    double act_interval_ns = 55;
    std::optional<double> duration_ms; // default: one refresh window
    bool across_bank = false;          // repeat the pattern at every row offset of the bank
};

struct SweepConfig {
    SweepAxis axis = SweepAxis::RefreshInterval;
    std::vector<std::string> points;
};

struct ParaAnalysisConfig {
    std::vector<double> p{0.01, 0.02, 0.05};
    std::vector<std::uint64_t> n_th{50, 200, 1000};
    double act_rate = 1.0 / 55e-9;
    double horizon_s = 365.25 * 86'400.0;
    std::uint64_t mc_windows = 100'000;
    std::uint64_t mc_trials = 100;
};

struct MitigationConfig {
    MitigationSpec::Kind kind = MitigationSpec::Kind::None;
    double p = 0.001;
    double counter_threshold = 1000;
    double refresh_t_refw_ms = 32;
};

struct ExperimentConfig {
    ModuleGeometry geometry;
    std::uint32_t t_rc_ns = 55;
    double t_refw_ms = 64;
    OrientationLayout orientation;
    FaultParams fault;
    DataPattern pattern = DataPattern::RowStripe;
    double act_interval_ns = 55;
    std::optional<double> hammer_duration_ms;
    bool refresh = true;
    double scale = kDeskScale;
    MitigationConfig mitigation;
    std::vector<MitigationSpec::Kind> eval_kinds{MitigationSpec::Kind::None, MitigationSpec::Kind::Para,
                                                 MitigationSpec::Kind::Counter, MitigationSpec::Kind::Refresh,
                                                 MitigationSpec::Kind::Ecc};
    HammerConfig hammer;
    SweepConfig sweep;
    ParaAnalysisConfig para_analysis;
    std::uint64_t seed = 1;
    std::uint64_t iterations = 1;
    std::optional<std::string> fault_map_file;
    std::string out = "out";

    [[nodiscard]] Scale scaler() const { return Scale{scale}; }

    /// Fault parameters with thresholds at simulated scale.
    [[nodiscard]] FaultParams scaled_fault() const
    {
        FaultParams f = fault;
        f.threshold_min = scaler().count(static_cast<double>(fault.threshold_min));
        f.threshold_max = scaler().count(static_cast<double>(fault.threshold_max));
        return f;
    }

    [[nodiscard]] MitigationSpec mitigation_spec(MitigationSpec::Kind kind) const
    {
        MitigationSpec m;
        m.kind = kind;
        m.p = mitigation.p;
        m.counter_threshold = scaler().count(mitigation.counter_threshold);
        m.refresh_t_refw = scaler().window_ms(mitigation.refresh_t_refw_ms);
        m.seed = seed;
        return m;
    }

    [[nodiscard]] RunParams run_params() const
    {
        RunParams p;
        p.geometry = geometry;
        p.orientation = orientation;
        p.timing.t_rc = Nanoseconds{t_rc_ns};
        p.timing.t_refw = scaler().window_ms(t_refw_ms);
        p.fault = scaled_fault();
        p.pattern = pattern;
        p.act_interval = Nanoseconds{std::llround(act_interval_ns)};
        if (hammer_duration_ms)
            p.hammer_duration = scaler().window_ms(*hammer_duration_ms);
        p.mitigation = mitigation_spec(mitigation.kind);
        p.refresh_enabled = refresh;
        p.seed = seed;
        return p;
    }

    /// Hammer specs at simulated scale.
    [[nodiscard]] std::vector<HammerSpec> hammer_specs() const
    {
        HammerSpec base;
        base.mode = hammer.mode;
        base.bank = hammer.bank;
        base.x = hammer.x;
        base.y = hammer.y;
        base.act_interval = Nanoseconds{std::llround(hammer.act_interval_ns)};
        base.duration = scaler().window_ms(hammer.duration_ms.value_or(t_refw_ms));
        if (!hammer.across_bank)
            return {base};
        // Shift the pattern across the bank, keeping the X/Y spacing.
        std::vector<HammerSpec> out;
        const RowIndex lo = std::min(base.x, base.y);
        const RowIndex hi = std::max(base.x, base.y);
        for (RowIndex shift = 0; hi + shift - lo < geometry.rows_per_bank; ++shift) {
            HammerSpec s = base;
            s.x = base.x - lo + shift;
            s.y = base.y - lo + shift;
            out.push_back(s);
        }
        return out;
    }

    /// Throws ConfigError on any inconsistency. Called before any simulation.
    void validate() const
    {
        geometry.validate();
        if (t_rc_ns == 0)
            throw ConfigError("timing.t_rc_ns must be > 0");
        if (!(scale > 0.0 && scale <= 1.0))
            throw ConfigError("scale must be in (0, 1]");
        fault.validate();
        const auto p = run_params();
        p.timing.validate();
        p.fault.validate();
        if (p.act_interval < p.timing.t_rc)
            throw ConfigError("act_interval_ns must be >= timing.t_rc_ns");
        ParaConfig{mitigation.p, seed}.validate();
        CounterConfig{scaler().count(mitigation.counter_threshold)}.validate();
        if (!(mitigation.refresh_t_refw_ms > 0.0))
            throw ConfigError("mitigation.refresh_t_refw_ms must be > 0");
        if (hammer.bank >= geometry.banks || hammer.x >= geometry.rows_per_bank || hammer.y >= geometry.rows_per_bank)
            throw ConfigError("hammer: bank/row outside the geometry");
        for (const auto& s : hammer_specs())
            s.validate(p.timing);
        if (iterations < 1)
            throw ConfigError("iterations must be >= 1");
        for (double v : para_analysis.p)
            if (!(v > 0.0 && v <= 1.0))
                throw ConfigError("para_analysis.p values must be in (0, 1]");
        if (para_analysis.mc_trials < 2)
            throw ConfigError("para_analysis.mc_trials must be >= 2");
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& path, std::initializer_list<std::string_view> allowed)
{
    if (!obj.is_object())
        throw ConfigError("config key '" + path + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (auto a : allowed)
            ok = ok || key == a;
        if (!ok)
            throw ConfigError("unknown config key '" + (path.empty() ? key : path + "." + key) + "'");
    }
}

template <class T>
void read(const nlohmann::json& obj, const char* key, const std::string& path, T& out)
{
    const auto it = obj.find(key);
    if (it == obj.end())
        return;
    try {
        out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + (path.empty() ? std::string(key) : path + "." + key) + "' has the wrong type");
    }
}

inline std::string point_text(const nlohmann::json& v)
{
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned())
        return v.dump();
    if (v.is_number_float()) {
        // Shortest form that parses back to the same double.
        char buf[32];
        for (int prec = 1; prec <= 17; ++prec) {
            std::snprintf(buf, sizeof buf, "%.*g", prec, v.get<double>());
            if (std::stod(buf) == v.get<double>())
                break;
        }
        return buf;
    }
    throw ConfigError("sweep.points entries must be numbers or strings");
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j)
{
    using detail::read;
    ExperimentConfig c;
    detail::reject_unknown(j, "",
                           {"geometry", "timing", "orientation", "fault", "pattern", "act_interval_ns", "hammer_duration_ms",
                            "refresh", "scale", "mitigation", "mitigate_eval", "hammer", "sweep", "para_analysis", "seed",
                            "iterations", "fault_map_file", "out"});
    if (auto it = j.find("geometry"); it != j.end()) {
        detail::reject_unknown(*it, "geometry", {"banks", "rows_per_bank", "cols_per_row"});
        read(*it, "banks", "geometry", c.geometry.banks);
        read(*it, "rows_per_bank", "geometry", c.geometry.rows_per_bank);
        read(*it, "cols_per_row", "geometry", c.geometry.cols_per_row);
    }
    if (auto it = j.find("timing"); it != j.end()) {
        detail::reject_unknown(*it, "timing", {"t_rc_ns", "t_refw_ms"});
        read(*it, "t_rc_ns", "timing", c.t_rc_ns);
        read(*it, "t_refw_ms", "timing", c.t_refw_ms);
    }
    if (auto it = j.find("orientation"); it != j.end()) {
        detail::reject_unknown(*it, "orientation", {"block_rows", "first"});
        read(*it, "block_rows", "orientation", c.orientation.block_rows);
        std::string first = "true";
        read(*it, "first", "orientation", first);
        if (first == "true")
            c.orientation.first = CellOrientation::True;
        else if (first == "anti")
            c.orientation.first = CellOrientation::Anti;
        else
            throw ConfigError("orientation.first must be \"true\" or \"anti\"");
    }
    if (auto it = j.find("fault"); it != j.end()) {
        detail::reject_unknown(*it, "fault",
                               {"victim_density", "threshold_min", "threshold_max", "dual_aggressor_fraction", "pattern_coupling",
                                "repeat_noise"});
        read(*it, "victim_density", "fault", c.fault.victim_density);
        read(*it, "threshold_min", "fault", c.fault.threshold_min);
        read(*it, "threshold_max", "fault", c.fault.threshold_max);
        read(*it, "dual_aggressor_fraction", "fault", c.fault.dual_aggressor_fraction);
        read(*it, "pattern_coupling", "fault", c.fault.pattern_coupling);
        read(*it, "repeat_noise", "fault", c.fault.repeat_noise);
    }
    if (auto it = j.find("pattern"); it != j.end()) {
        std::string s;
        read(j, "pattern", "", s);
        c.pattern = parse_pattern(s);
    }
    read(j, "act_interval_ns", "", c.act_interval_ns);
    if (auto it = j.find("hammer_duration_ms"); it != j.end() && !it->is_null()) {
        double d = 0;
        read(j, "hammer_duration_ms", "", d);
        c.hammer_duration_ms = d;
    }
    read(j, "refresh", "", c.refresh);
    if (auto it = j.find("scale"); it != j.end()) {
        if (it->is_string()) {
            const auto s = it->get<std::string>();
            if (s == "desk")
                c.scale = kDeskScale;
            else if (s == "full" || s == "paper")
                c.scale = 1.0;
            else
                throw ConfigError("scale must be \"desk\", \"full\" or a number");
        } else {
            read(j, "scale", "", c.scale);
        }
    }
    if (auto it = j.find("mitigation"); it != j.end()) {
        detail::reject_unknown(*it, "mitigation", {"kind", "p", "counter_threshold", "refresh_t_refw_ms"});
        std::string kind = "none";
        read(*it, "kind", "mitigation", kind);
        c.mitigation.kind = parse_mitigation_kind(kind);
        read(*it, "p", "mitigation", c.mitigation.p);
        read(*it, "counter_threshold", "mitigation", c.mitigation.counter_threshold);
        read(*it, "refresh_t_refw_ms", "mitigation", c.mitigation.refresh_t_refw_ms);
    }
    if (auto it = j.find("mitigate_eval"); it != j.end()) {
        detail::reject_unknown(*it, "mitigate_eval", {"kinds"});
        std::vector<std::string> kinds;
        read(*it, "kinds", "mitigate_eval", kinds);
        c.eval_kinds.clear();
        for (const auto& k : kinds)
            c.eval_kinds.push_back(parse_mitigation_kind(k));
    }
    if (auto it = j.find("hammer"); it != j.end()) {
        const std::string path = "hammer";
        detail::reject_unknown(*it, path, {"mode", "bank", "x", "y", "act_interval_ns", "duration_ms", "across_bank"});
        std::string mode = "pair";
        read(*it, "mode", path, mode);
        if (mode == "pair")
            c.hammer.mode = HammerSpec::Mode::PairAlternate;
        else if (mode == "single")
            c.hammer.mode = HammerSpec::Mode::SingleRow;
        else
            throw ConfigError("hammer.mode must be \"pair\" or \"single\"");
        read(*it, "bank", path, c.hammer.bank);
        read(*it, "x", path, c.hammer.x);
        read(*it, "y", path, c.hammer.y);
        read(*it, "act_interval_ns", path, c.hammer.act_interval_ns);
        if (auto d = it->find("duration_ms"); d != it->end() && !d->is_null()) {
            double v = 0;
            read(*it, "duration_ms", path, v);
            c.hammer.duration_ms = v;
        }
        read(*it, "across_bank", path, c.hammer.across_bank);
    }
    if (auto it = j.find("sweep"); it != j.end()) {
        detail::reject_unknown(*it, "sweep", {"axis", "points"});
        std::string axis = "refresh";
        read(*it, "axis", "sweep", axis);
        c.sweep.axis = parse_sweep_axis(axis);
        if (auto pts = it->find("points"); pts != it->end()) {
            if (!pts->is_array())
                throw ConfigError("config key 'sweep.points' must be an array");
            for (const auto& v : *pts)
                c.sweep.points.push_back(detail::point_text(v));
        }
    }
    if (auto it = j.find("para_analysis"); it != j.end()) {
        const std::string path = "para_analysis";
        detail::reject_unknown(*it, path, {"p", "n_th", "act_rate", "horizon_s", "mc_windows", "mc_trials"});
        read(*it, "p", path, c.para_analysis.p);
        read(*it, "n_th", path, c.para_analysis.n_th);
        read(*it, "act_rate", path, c.para_analysis.act_rate);
        read(*it, "horizon_s", path, c.para_analysis.horizon_s);
        read(*it, "mc_windows", path, c.para_analysis.mc_windows);
        read(*it, "mc_trials", path, c.para_analysis.mc_trials);
    }
    read(j, "seed", "", c.seed);
    read(j, "iterations", "", c.iterations);
    if (auto it = j.find("fault_map_file"); it != j.end() && !it->is_null()) {
        std::string f;
        read(j, "fault_map_file", "", f);
        c.fault_map_file = f;
    }
    read(j, "out", "", c.out);
    return c;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
    return parse_config(j);
}

/// The resolved configuration, for metadata sidecars.
inline nlohmann::json to_json(const ExperimentConfig& c)
{
    nlohmann::json j;
    j["geometry"] = {{"banks", c.geometry.banks}, {"rows_per_bank", c.geometry.rows_per_bank}, {"cols_per_row", c.geometry.cols_per_row}};
    j["timing"] = {{"t_rc_ns", c.t_rc_ns}, {"t_refw_ms", c.t_refw_ms}};
    j["orientation"] = {{"block_rows", c.orientation.block_rows},
                        {"first", c.orientation.first == CellOrientation::True ? "true" : "anti"}};
    j["fault"] = {{"victim_density", c.fault.victim_density},
                  {"threshold_min", c.fault.threshold_min},
                  {"threshold_max", c.fault.threshold_max},
                  {"dual_aggressor_fraction", c.fault.dual_aggressor_fraction},
                  {"pattern_coupling", c.fault.pattern_coupling},
                  {"repeat_noise", c.fault.repeat_noise}};
    j["pattern"] = std::string(to_string(c.pattern));
    j["act_interval_ns"] = c.act_interval_ns;
    j["hammer_duration_ms"] = c.hammer_duration_ms ? nlohmann::json(*c.hammer_duration_ms) : nlohmann::json(nullptr);
    j["refresh"] = c.refresh;
    j["scale"] = c.scale;
    j["mitigation"] = {{"kind", std::string(to_string(c.mitigation.kind))},
                       {"p", c.mitigation.p},
                       {"counter_threshold", c.mitigation.counter_threshold},
                       {"refresh_t_refw_ms", c.mitigation.refresh_t_refw_ms}};
    auto kinds = nlohmann::json::array();
    for (auto k : c.eval_kinds)
        kinds.push_back(std::string(to_string(k)));
    j["mitigate_eval"] = {{"kinds", kinds}};
    j["hammer"] = {{"mode", c.hammer.mode == HammerSpec::Mode::PairAlternate ? "pair" : "single"},
                   {"bank", c.hammer.bank},
                   {"x", c.hammer.x},
                   {"y", c.hammer.y},
                   {"act_interval_ns", c.hammer.act_interval_ns},
                   {"duration_ms", c.hammer.duration_ms ? nlohmann::json(*c.hammer.duration_ms) : nlohmann::json(nullptr)},
                   {"across_bank", c.hammer.across_bank}};
    j["sweep"] = {{"axis", std::string(to_string(c.sweep.axis))}, {"points", c.sweep.points}};
    j["para_analysis"] = {{"p", c.para_analysis.p},
                          {"n_th", c.para_analysis.n_th},
                          {"act_rate", c.para_analysis.act_rate},
                          {"horizon_s", c.para_analysis.horizon_s},
                          {"mc_windows", c.para_analysis.mc_windows},
                          {"mc_trials", c.para_analysis.mc_trials}};
    j["seed"] = c.seed;
    j["iterations"] = c.iterations;
    j["fault_map_file"] = c.fault_map_file ? nlohmann::json(*c.fault_map_file) : nlohmann::json(nullptr);
    j["out"] = c.out;
    return j;
}

} // namespace rowhammer
