#pragma once

// Access-pattern generators and the row-by-row characterization procedure.

#include "rowhammer/controller.hpp"
#include "rowhammer/fault_model.hpp"
#include "rowhammer/mitigation.hpp"
#include "rowhammer/secded.hpp"
#include "rowhammer/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <memory>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace rowhammer {

struct HammerSpec {
    enum class Mode : std::uint8_t { PairAlternate, SingleRow };

    Mode mode = Mode::PairAlternate;
    BankIndex bank = 0;
    RowIndex x = 0;
    RowIndex y = 2;
    Nanoseconds act_interval{55};
    Nanoseconds duration{64'000'000};

    void validate(const TimingParams& timing) const
    {
        if (mode == Mode::PairAlternate && x == y)
            throw ConfigError("hammer: X and Y must be different rows");
        if (act_interval < timing.t_rc)
            throw ConfigError("hammer: act_interval must be >= t_rc");
        if (duration < Nanoseconds::zero())
            throw ConfigError("hammer: duration must be >= 0");
    }

    /// Requests that fit in the duration, one per act_interval.
    [[nodiscard]] std::uint64_t request_count() const
    {
        return act_interval.count() <= 0 ? 0 : static_cast<std::uint64_t>(duration.count() / act_interval.count());
    }
};

/// Streams the request sequence of `spec` to `fn` (PairAlternate: X, Y, X, ...;
/// SingleRow: X, X, ...), request k arriving at k * act_interval.
template <class Fn>
void for_each_hammer_request(const HammerSpec& spec, Fn&& fn)
{
    const std::uint64_t n = spec.request_count();
    for (std::uint64_t k = 0; k < n; ++k) {
        Request r;
        r.bank = spec.bank;
        r.row = (spec.mode == HammerSpec::Mode::PairAlternate && (k & 1U)) ? spec.y : spec.x;
        r.arrival = Nanoseconds{static_cast<std::int64_t>(k) * spec.act_interval.count()};
        r.index = k;
        fn(r);
    }
}

inline std::vector<Request> gen_hammer(const HammerSpec& spec)
{
    std::vector<Request> out;
    out.reserve(spec.request_count());
    for_each_hammer_request(spec, [&](const Request& r) { out.push_back(r); });
    return out;
}

struct MitigationSpec {
    enum class Kind : std::uint8_t { None, Para, Counter, Refresh, Ecc };

    Kind kind = Kind::None;
    double p = 0.001;
    std::uint64_t counter_threshold = 1000;
    Nanoseconds refresh_t_refw{32'000'000};
    std::uint64_t seed = 0;
};

inline std::string_view to_string(MitigationSpec::Kind k)
{
    switch (k) {
    case MitigationSpec::Kind::None: return "none";
    case MitigationSpec::Kind::Para: return "para";
    case MitigationSpec::Kind::Counter: return "counter";
    case MitigationSpec::Kind::Refresh: return "refresh";
    case MitigationSpec::Kind::Ecc: return "ecc";
    }
    return "?";
}

inline MitigationSpec::Kind parse_mitigation_kind(std::string_view s)
{
    if (s == "none") return MitigationSpec::Kind::None;
    if (s == "para") return MitigationSpec::Kind::Para;
    if (s == "counter") return MitigationSpec::Kind::Counter;
    if (s == "refresh") return MitigationSpec::Kind::Refresh;
    if (s == "ecc") return MitigationSpec::Kind::Ecc;
    throw ConfigError("unknown mitigation '" + std::string(s) + "'");
}

/// Command-level mechanism for a spec; refresh scaling and ECC have none.
inline std::unique_ptr<Mitigation> make_mitigation(const MitigationSpec& spec, const ModuleGeometry& g, const TimingParams& timing)
{
    switch (spec.kind) {
    case MitigationSpec::Kind::Para: return std::make_unique<Para>(ParaConfig{spec.p, spec.seed}, g.rows_per_bank);
    case MitigationSpec::Kind::Counter:
        return std::make_unique<CounterRefresh>(CounterConfig{spec.counter_threshold}, g, timing.t_refw);
    default: return std::make_unique<NullMitigation>();
    }
}

/// Module timing once the mitigation is applied.
inline TimingParams effective_timing(const MitigationSpec& spec, const TimingParams& timing)
{
    return spec.kind == MitigationSpec::Kind::Refresh ? refresh_scaling(timing, spec.refresh_t_refw) : timing;
}

struct FlipRecord {
    CellAddress cell;
    FlipDirection direction;
    Nanoseconds time;
    BankIndex hammered_bank;
    RowIndex hammered_row;

    friend bool operator==(const FlipRecord&, const FlipRecord&) = default;
};

struct ErrorReport {
    std::vector<FlipRecord> flips;
    std::uint64_t flips_1to0 = 0;
    std::uint64_t flips_0to1 = 0;
    std::map<std::pair<BankIndex, RowIndex>, std::uint64_t> row_histogram;
    std::uint64_t demand_activations = 0;
    std::uint64_t mitigation_activations = 0;
    secded::ReadPathStats ecc;
    std::vector<std::pair<std::string, std::string>> metadata;

    void add(const FlipRecord& f)
    {
        flips.push_back(f);
        (f.direction == FlipDirection::OneToZero ? flips_1to0 : flips_0to1) += 1;
        ++row_histogram[{f.cell.bank, f.cell.row}];
    }
    [[nodiscard]] std::uint64_t total() const { return flips.size(); }
    [[nodiscard]] std::uint64_t rows_affected() const { return row_histogram.size(); }
    [[nodiscard]] std::set<CellAddress> cells() const
    {
        std::set<CellAddress> s;
        for (const auto& f : flips)
            s.insert(f.cell);
        return s;
    }
};

/// Everything one characterization or hammer run needs besides the fault map.
struct RunParams {
    ModuleGeometry geometry;
    OrientationLayout orientation;
    TimingParams timing;
    FaultParams fault;
    DataPattern pattern = DataPattern::RowStripe;
    Nanoseconds act_interval{55};
    std::optional<Nanoseconds> hammer_duration; // default: one refresh window
    MitigationSpec mitigation;
    bool refresh_enabled = true;
    std::uint64_t seed = 0;      // repeat-noise stream
    std::uint64_t iteration = 0; // test iteration index
    std::function<void(const Command&)> observer;

    /// Hammer length: an explicit duration, else the (unmitigated) refresh window.
    [[nodiscard]] Nanoseconds duration() const { return hammer_duration.value_or(timing.t_refw); }
};

namespace detail {

/// Read out, optionally through ECC, and turn differences from the written
/// pattern into flip records.
inline void collect_flips(DramModule& module, const DataImage& expected, const secded::EccReadPath* ecc,
                          const std::vector<FlipEvent>& log, std::size_t log_begin, BankIndex hammered_bank,
                          std::optional<RowIndex> hammered_row, Nanoseconds read_time, ErrorReport& report)
{
    DataImage image = module.read_out();
    if (ecc) {
        const auto s = ecc->correct(image);
        report.ecc.clean += s.clean;
        report.ecc.corrected += s.corrected;
        report.ecc.uncorrectable += s.uncorrectable;
    }
    const auto diffs = diff_images(expected, image);
    if (diffs.empty())
        return;
    std::map<CellAddress, const FlipEvent*> fired;
    for (std::size_t i = log_begin; i < log.size(); ++i)
        fired[log[i].cell] = &log[i];
    for (const auto& d : diffs) {
        const auto it = fired.find(d.cell);
        FlipRecord rec{d.cell, d.direction, read_time, hammered_bank, hammered_row.value_or(d.cell.row)};
        if (it != fired.end()) {
            rec.time = it->second->time;
            if (!hammered_row)
                rec.hammered_row = it->second->aggressor_row;
        }
        report.add(rec);
    }
}

} // namespace detail

/// Row-by-row characterization: for every row of every bank, write the
/// pattern to the whole module, open and close that row once per
/// act_interval for one refresh window while refresh runs, then read the
/// module back and record every changed cell.
///
/// Each row's test starts when its upper neighbor (lower, for the last row)
/// has just been refreshed, so that neighbor sees the full window.
inline ErrorReport characterize_row_sweep(const RunParams& params, const FaultMap& map)
{
    const TimingParams timing = effective_timing(params.mitigation, params.timing);
    DramModule module(params.geometry, timing, params.orientation);
    FaultModel faults(map, params.fault);
    faults.begin_iteration(params.seed, params.iteration);
    auto mitigation = make_mitigation(params.mitigation, params.geometry, timing);
    std::optional<secded::EccReadPath> ecc;
    const DataImage expected = pattern_image(params.geometry, params.pattern);
    if (params.mitigation.kind == MitigationSpec::Kind::Ecc) {
        ecc.emplace(params.geometry);
        ecc->protect(expected);
    }

    Simulation sim(module, faults, params.refresh_enabled);
    if (params.observer)
        sim.set_observer(params.observer);
    Tester tester(params.geometry, timing, mitigation.get());
    const Nanoseconds duration = params.duration();

    ErrorReport report;
    const auto& g = params.geometry;
    for (BankIndex b = 0; b < g.banks; ++b)
        for (RowIndex r = 0; r < g.rows_per_bank; ++r) {
            const RowIndex anchor = r + 1 < g.rows_per_bank ? r + 1 : r - 1;
            const Nanoseconds now = std::max(module.now(), tester.issuer().clock());
            const Nanoseconds start = sim.schedule().next_refresh_of(anchor, now);
            const std::size_t log_begin = faults.flip_log().size();
            sim.init_pattern(params.pattern, start);
            tester.advance_to(start);
            tester.hammer(b, r, params.act_interval, start, start + duration, sim);
            const Nanoseconds end = std::max({start + duration, module.now()});
            sim.run_refresh_until(end);
            detail::collect_flips(module, expected, ecc ? &*ecc : nullptr, faults.flip_log(), log_begin, b, r, end, report);
        }
    report.demand_activations = tester.issuer().demand_activations();
    report.mitigation_activations = tester.issuer().mitigation_activations();
    return report;
}

/// Runs request-level hammer specs through the controller, one after the
/// other, rewriting the pattern before each and reading the module back
/// after each.
inline ErrorReport run_hammer(const RunParams& params, const FaultMap& map, std::span<const HammerSpec> specs)
{
    const TimingParams timing = effective_timing(params.mitigation, params.timing);
    DramModule module(params.geometry, timing, params.orientation);
    FaultModel faults(map, params.fault);
    faults.begin_iteration(params.seed, params.iteration);
    auto mitigation = make_mitigation(params.mitigation, params.geometry, timing);
    std::optional<secded::EccReadPath> ecc;
    const DataImage expected = pattern_image(params.geometry, params.pattern);
    if (params.mitigation.kind == MitigationSpec::Kind::Ecc) {
        ecc.emplace(params.geometry);
        ecc->protect(expected);
    }

    Simulation sim(module, faults, params.refresh_enabled);
    if (params.observer)
        sim.set_observer(params.observer);
    Controller ctl(params.geometry, timing, mitigation.get());

    ErrorReport report;
    for (const auto& spec : specs) {
        spec.validate(timing);
        const Nanoseconds now = std::max(module.now(), ctl.issuer().clock());
        // Start on a refresh window boundary.
        const std::int64_t w = timing.t_refw.count();
        const Nanoseconds start{(now.count() + w - 1) / w * w};
        const std::size_t log_begin = faults.flip_log().size();
        sim.init_pattern(params.pattern, start);
        ctl.set_origin(start);
        for_each_hammer_request(spec, [&](const Request& r) { ctl.submit(r, sim); });
        ctl.finish(sim);
        const Nanoseconds end = std::max(start + spec.duration, module.now());
        sim.run_refresh_until(end);
        detail::collect_flips(module, expected, ecc ? &*ecc : nullptr, faults.flip_log(), log_begin, spec.bank, std::nullopt,
                              end, report);
    }
    report.demand_activations = ctl.issuer().demand_activations();
    report.mitigation_activations = ctl.issuer().mitigation_activations();
    return report;
}

/// Runs an arbitrary request trace through the controller once.
inline ErrorReport run_requests(const RunParams& params, const FaultMap& map, std::span<const Request> requests)
{
    const TimingParams timing = effective_timing(params.mitigation, params.timing);
    DramModule module(params.geometry, timing, params.orientation);
    FaultModel faults(map, params.fault);
    faults.begin_iteration(params.seed, params.iteration);
    auto mitigation = make_mitigation(params.mitigation, params.geometry, timing);
    Simulation sim(module, faults, params.refresh_enabled);
    if (params.observer)
        sim.set_observer(params.observer);
    Controller ctl(params.geometry, timing, mitigation.get());
    const DataImage expected = pattern_image(params.geometry, params.pattern);
    sim.init_pattern(params.pattern, Nanoseconds::zero());
    for (const auto& r : requests)
        ctl.submit(r, sim);
    ctl.finish(sim);
    sim.run_refresh_until(module.now());

    ErrorReport report;
    DataImage image = module.read_out();
    // Written cells legitimately differ from the pattern; apply the writes to
    // the expectation.
    DataImage want = expected;
    for (const auto& r : requests)
        if (r.kind == Request::Kind::Write)
            want.set({r.bank, r.row, r.col}, r.data);
    std::map<CellAddress, const FlipEvent*> fired;
    for (const auto& e : faults.flip_log())
        fired[e.cell] = &e;
    for (const auto& d : diff_images(want, image)) {
        FlipRecord rec{d.cell, d.direction, module.now(), d.cell.bank, d.cell.row};
        if (auto it = fired.find(d.cell); it != fired.end()) {
            rec.time = it->second->time;
            rec.hammered_row = it->second->aggressor_row;
        }
        report.add(rec);
    }
    report.demand_activations = ctl.issuer().demand_activations();
    report.mitigation_activations = ctl.issuer().mitigation_activations();
    return report;
}

enum class SweepAxis : std::uint8_t { RefreshInterval, ActivationInterval, DataPattern, MitigationParam };

inline std::string_view to_string(SweepAxis a)
{
    switch (a) {
    case SweepAxis::RefreshInterval: return "refresh";
    case SweepAxis::ActivationInterval: return "activation";
    case SweepAxis::DataPattern: return "pattern";
    case SweepAxis::MitigationParam: return "mitigation";
    }
    return "?";
}

inline SweepAxis parse_sweep_axis(std::string_view s)
{
    if (s == "refresh") return SweepAxis::RefreshInterval;
    if (s == "activation") return SweepAxis::ActivationInterval;
    if (s == "pattern") return SweepAxis::DataPattern;
    if (s == "mitigation") return SweepAxis::MitigationParam;
    throw ConfigError("unknown sweep axis '" + std::string(s) + "'");
}

struct SweepRow {
    std::string axis_value;
    std::uint64_t flips_total = 0;
    std::uint64_t flips_1to0 = 0;
    std::uint64_t flips_0to1 = 0;
    std::uint64_t rows_affected = 0;

    friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

/// Converts nominal (full-scale) time and count values into simulated ones.
/// Desk scale shrinks windows and thresholds by the same factor.
struct Scale {
    double factor = 1.0;

    [[nodiscard]] Nanoseconds window_ms(double ms) const
    {
        return Nanoseconds{static_cast<std::int64_t>(std::llround(ms * 1e6 * factor))};
    }
    [[nodiscard]] std::uint64_t count(double n) const
    {
        return static_cast<std::uint64_t>(std::max<long long>(1, std::llround(n * factor)));
    }
};

/// RunParams for one sweep point. Points are nominal values: refresh window
/// in ms, activation interval in ns, pattern name, or the active
/// mitigation's parameter (PARA p, counter threshold, refresh window in ms).
inline RunParams apply_sweep_point(SweepAxis axis, const std::string& point, RunParams params, const Scale& scale)
{
    try {
        switch (axis) {
        case SweepAxis::RefreshInterval:
            params.timing.t_refw = scale.window_ms(std::stod(point));
            params.hammer_duration.reset();
            params.timing.validate();
            break;
        case SweepAxis::ActivationInterval:
            params.act_interval = Nanoseconds{std::stoll(point)};
            if (params.act_interval < params.timing.t_rc)
                throw ConfigError("sweep: activation interval " + point + "ns is below t_rc");
            break;
        case SweepAxis::DataPattern: params.pattern = parse_pattern(point); break;
        case SweepAxis::MitigationParam:
            switch (params.mitigation.kind) {
            case MitigationSpec::Kind::Para: params.mitigation.p = std::stod(point); break;
            case MitigationSpec::Kind::Counter: params.mitigation.counter_threshold = scale.count(std::stod(point)); break;
            case MitigationSpec::Kind::Refresh: params.mitigation.refresh_t_refw = scale.window_ms(std::stod(point)); break;
            default: throw ConfigError("sweep: mitigation axis needs para, counter or refresh");
            }
            break;
        }
    } catch (const std::invalid_argument&) {
        throw ConfigError("sweep: cannot parse point '" + point + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("sweep: point '" + point + "' is out of range");
    }
    return params;
}

/// One characterization per point with the fault map and seeds held fixed.
/// Points run on up to `jobs` threads; rows come back in point order.
inline std::vector<SweepRow> sweep_experiment(SweepAxis axis, std::span<const std::string> points, const RunParams& base,
                                              const FaultMap& map, const Scale& scale, unsigned jobs = 1)
{
    std::vector<RunParams> runs;
    runs.reserve(points.size());
    for (const auto& p : points)
        runs.push_back(apply_sweep_point(axis, p, base, scale));

    std::vector<SweepRow> rows(points.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            try {
                const auto report = characterize_row_sweep(runs[i], map);
                rows[i] = {points[i], report.total(), report.flips_1to0, report.flips_0to1, report.rows_affected()};
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(runs.size())));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n; ++t)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    if (failure)
        std::rethrow_exception(failure);
    return rows;
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows)
{
    os << "axis_value,flips_total,flips_1to0,flips_0to1,rows_affected\n";
    for (const auto& r : rows)
        os << r.axis_value << ',' << r.flips_total << ',' << r.flips_1to0 << ',' << r.flips_0to1 << ',' << r.rows_affected << '\n';
}

} // namespace rowhammer
