#pragma once

// Disturbance fault model.
//
// A FaultMap is a sparse population of vulnerable cells. Each victim counts
// activations of its aggressor row(s) since its own row was last restored
// (activated or refreshed) and loses its charge once the count reaches its
// threshold. Flip direction therefore follows cell orientation: a true-cell
// goes 1 -> 0, an anti-cell 0 -> 1.
//
// Victims are stored by physical row; the module's row remap translates the
// logical rows that commands carry.

#include "rowhammer/dram.hpp"
#include "rowhammer/rng.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace rowhammer {

struct FaultParams {
    double victim_density = 5.9e-4;
    std::uint64_t threshold_min = 139'000;
    std::uint64_t threshold_max = 3 * 139'000;
    double dual_aggressor_fraction = 1e-3;
    bool pattern_coupling = true;
    double repeat_noise = 0.0;

    void validate() const
    {
        if (!(victim_density >= 0.0 && victim_density <= 1.0))
            throw ConfigError("fault: victim_density must be in [0, 1]");
        if (threshold_min > threshold_max)
            throw ConfigError("fault: threshold_min must be <= threshold_max");
        if (!(dual_aggressor_fraction >= 0.0 && dual_aggressor_fraction <= 1.0))
            throw ConfigError("fault: dual_aggressor_fraction must be in [0, 1]");
        if (!(repeat_noise >= 0.0 && repeat_noise <= 1.0))
            throw ConfigError("fault: repeat_noise must be in [0, 1]");
    }
};

/// Which neighbors disturb a victim.
enum AggressorMask : std::uint8_t {
    kBelow = 1, // row - 1
    kAbove = 2, // row + 1
    kBoth = kBelow | kAbove,
};

struct VictimRecord {
    CellAddress location;            // physical row
    std::uint8_t aggressors = kBelow;
    std::uint64_t threshold = 0;
    std::uint64_t disturb_count = 0;
    bool armed = true;               // false after firing, until the next restore
    bool inert = false;              // excluded for the current test iteration

    [[nodiscard]] bool has_aggressor(RowIndex physical_row) const
    {
        return ((aggressors & kBelow) && physical_row + 1 == location.row) ||
               ((aggressors & kAbove) && physical_row == location.row + 1);
    }
};

struct FlipEvent {
    CellAddress cell;                // logical address, as read_out reports it
    FlipDirection direction;
    Nanoseconds time;
    RowIndex aggressor_row;          // logical row whose activation fired the flip

    friend bool operator==(const FlipEvent&, const FlipEvent&) = default;
};

class FaultMap {
public:
    FaultMap() = default;
    explicit FaultMap(const ModuleGeometry& g) : geometry_(g), by_aggressor_(g.row_count()), by_row_(g.row_count()) {}

    [[nodiscard]] const ModuleGeometry& geometry() const { return geometry_; }
    [[nodiscard]] const std::vector<VictimRecord>& victims() const { return victims_; }
    [[nodiscard]] std::vector<VictimRecord>& victims() { return victims_; }
    [[nodiscard]] std::size_t size() const { return victims_.size(); }
    [[nodiscard]] bool empty() const { return victims_.empty(); }

    void add(VictimRecord v)
    {
        const auto& g = geometry_;
        if (v.location.bank >= g.banks || v.location.row >= g.rows_per_bank || v.location.col >= g.cols_per_row)
            throw AddressOutOfRange("victim outside module geometry");
        if ((v.aggressors & kBelow) && v.location.row == 0)
            throw ConfigError("victim in row 0 cannot have an aggressor below it");
        if ((v.aggressors & kAbove) && v.location.row + 1 >= g.rows_per_bank)
            throw ConfigError("victim in the last row cannot have an aggressor above it");
        if ((v.aggressors & kBoth) == 0)
            throw ConfigError("victim needs at least one aggressor");
        const auto idx = static_cast<std::uint32_t>(victims_.size());
        victims_.push_back(v);
        by_row_[slot(v.location.bank, v.location.row)].push_back(idx);
        if (v.aggressors & kBelow)
            by_aggressor_[slot(v.location.bank, v.location.row - 1)].push_back(idx);
        if (v.aggressors & kAbove)
            by_aggressor_[slot(v.location.bank, v.location.row + 1)].push_back(idx);
    }

    /// Victims disturbed by activating physical row `row` of `bank`.
    [[nodiscard]] const std::vector<std::uint32_t>& victims_of(BankIndex bank, RowIndex row) const
    {
        return by_aggressor_[slot(bank, row)];
    }
    /// Victims located in physical row `row` of `bank`.
    [[nodiscard]] const std::vector<std::uint32_t>& victims_in(BankIndex bank, RowIndex row) const
    {
        return by_row_[slot(bank, row)];
    }

    std::vector<FlipEvent> flip_log;

private:
    [[nodiscard]] std::size_t slot(BankIndex b, RowIndex r) const { return std::size_t{b} * geometry_.rows_per_bank + r; }

    ModuleGeometry geometry_{};
    std::vector<VictimRecord> victims_;
    std::vector<std::vector<std::uint32_t>> by_aggressor_;
    std::vector<std::vector<std::uint32_t>> by_row_;
};

/// Samples a synthetic victim population. Each cell is vulnerable with
/// probability `victim_density`; cells are visited by geometric skipping, so
/// the victim count is exactly Binomial(cell_count, density).
inline FaultMap sample_fault_map(const ModuleGeometry& g, const FaultParams& params, std::uint64_t seed)
{
    g.validate();
    params.validate();
    FaultMap map(g);
    if (params.victim_density <= 0.0)
        return map;
    Rng rng(seed, Stream::FaultMap);
    const std::uint64_t cells = g.cell_count();
    const std::uint64_t per_bank = std::uint64_t{g.rows_per_bank} * g.cols_per_row;
    std::uint64_t cell = 0;
    while (true) {
        const std::uint64_t skip = rng.geometric(params.victim_density);
        if (skip >= cells - cell)
            break;
        cell += skip;
        VictimRecord v;
        v.location.bank = static_cast<BankIndex>(cell / per_bank);
        v.location.row = static_cast<RowIndex>((cell % per_bank) / g.cols_per_row);
        v.location.col = static_cast<ColIndex>(cell % g.cols_per_row);

        const bool dual = rng.bernoulli(params.dual_aggressor_fraction);
        const bool pick_above = rng.bernoulli(0.5);
        v.threshold = rng.uniform_int(params.threshold_min, params.threshold_max);

        const bool has_below = v.location.row > 0;
        const bool has_above = v.location.row + 1 < g.rows_per_bank;
        if (dual && has_below && has_above)
            v.aggressors = kBoth;
        else if (!has_below)
            v.aggressors = kAbove;
        else if (!has_above)
            v.aggressors = kBelow;
        else
            v.aggressors = pick_above ? kAbove : kBelow;
        map.add(v);
        ++cell;
        if (cell >= cells)
            break;
    }
    return map;
}

/// Event sink that drives a FaultMap from module activations and restores.
class FaultModel {
public:
    FaultModel(FaultMap map, FaultParams params) : map_(std::move(map)), params_(params) {}

    [[nodiscard]] const FaultMap& map() const { return map_; }
    [[nodiscard]] FaultMap& map() { return map_; }
    [[nodiscard]] const FaultParams& params() const { return params_; }
    [[nodiscard]] const std::vector<FlipEvent>& flip_log() const { return map_.flip_log; }
    void clear_flip_log() { map_.flip_log.clear(); }

    /// Draws which victims sit out this test iteration (repeat_noise). With
    /// repeat_noise == 0 every victim participates in every iteration.
    void begin_iteration(std::uint64_t seed, std::uint64_t iteration)
    {
        if (params_.repeat_noise <= 0.0) {
            for (auto& v : map_.victims())
                v.inert = false;
            return;
        }
        Rng rng(derive_seed(seed, iteration), Stream::RepeatNoise);
        for (auto& v : map_.victims())
            v.inert = rng.bernoulli(params_.repeat_noise);
    }

    void on_activate(DramModule& module, BankIndex bank, RowIndex row, Nanoseconds time)
    {
        const RowIndex aggressor = module.physical_row(row);
        for (const std::uint32_t idx : map_.victims_of(bank, aggressor)) {
            auto& v = map_.victims()[idx];
            if (v.inert)
                continue;
            ++v.disturb_count;
            if (!v.armed || v.disturb_count < v.threshold)
                continue;
            const CellAddress cell{bank, module.logical_row(v.location.row), v.location.col};
            if (!module.charged(cell))
                continue;
            // Coupling: the aggressor cell in the same column must hold the
            // opposite (discharged) state.
            if (params_.pattern_coupling && module.charged({bank, row, v.location.col}))
                continue;
            module.discharge(cell);
            v.armed = false;
            const auto dir = module.orientation(v.location.row) == CellOrientation::True ? FlipDirection::OneToZero
                                                                                          : FlipDirection::ZeroToOne;
            map_.flip_log.push_back({cell, dir, time, row});
        }
    }

    void on_charge_restore(DramModule& module, BankIndex bank, RowIndex row, Nanoseconds)
    {
        for (const std::uint32_t idx : map_.victims_in(bank, module.physical_row(row))) {
            auto& v = map_.victims()[idx];
            v.disturb_count = 0;
            v.armed = true;
        }
    }

private:
    FaultMap map_;
    FaultParams params_;
};

// Fault map text format:
//   # rowhammer-faultmap v1 banks=<B> rows=<R> cols=<C>
//   <bank> <row> <col> <aggressor rows, comma separated> <threshold>

inline void export_fault_map(std::ostream& os, const FaultMap& map)
{
    const auto& g = map.geometry();
    os << "# rowhammer-faultmap v1 banks=" << g.banks << " rows=" << g.rows_per_bank << " cols=" << g.cols_per_row << '\n';
    for (const auto& v : map.victims()) {
        os << v.location.bank << ' ' << v.location.row << ' ' << v.location.col << ' ';
        if (v.aggressors & kBelow) {
            os << v.location.row - 1;
            if (v.aggressors & kAbove)
                os << ',';
        }
        if (v.aggressors & kAbove)
            os << v.location.row + 1;
        os << ' ' << v.threshold << '\n';
    }
}

inline FaultMap import_fault_map(std::istream& is, const ModuleGeometry& g)
{
    FaultMap map(g);
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        if (line[0] == '#') {
            if (line.rfind("# rowhammer-faultmap v1", 0) == 0) {
                std::istringstream hs(line.substr(23));
                ModuleGeometry fg;
                std::string tok;
                while (hs >> tok) {
                    const auto eq = tok.find('=');
                    if (eq == std::string::npos)
                        continue;
                    const auto key = tok.substr(0, eq);
                    const auto val = static_cast<std::uint32_t>(std::stoul(tok.substr(eq + 1)));
                    if (key == "banks") fg.banks = val;
                    else if (key == "rows") fg.rows_per_bank = val;
                    else if (key == "cols") fg.cols_per_row = val;
                }
                if (!(fg == g))
                    throw ConfigError("fault map geometry does not match the module");
                header_seen = true;
            }
            continue;
        }
        std::istringstream ls(line);
        VictimRecord v;
        std::string aggr;
        if (!(ls >> v.location.bank >> v.location.row >> v.location.col >> aggr >> v.threshold))
            throw ConfigError("fault map line " + std::to_string(lineno) + ": expected <bank> <row> <col> <aggressors> <threshold>");
        v.aggressors = 0;
        std::istringstream as(aggr);
        std::string item;
        while (std::getline(as, item, ',')) {
            const long a = std::stol(item);
            if (a + 1 == static_cast<long>(v.location.row))
                v.aggressors |= kBelow;
            else if (a == static_cast<long>(v.location.row) + 1)
                v.aggressors |= kAbove;
            else
                throw ConfigError("fault map line " + std::to_string(lineno) + ": aggressor " + item + " is not adjacent to row " +
                                  std::to_string(v.location.row));
        }
        map.add(v);
    }
    if (!header_seen)
        throw ConfigError("fault map is missing its '# rowhammer-faultmap v1' header");
    return map;
}

} // namespace rowhammer
