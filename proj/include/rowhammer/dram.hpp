#pragma once

// DRAM module state: cell charge, per-bank row buffer state, and per-row
// charge-restore bookkeeping. Commands are checked against the bank state
// machine and tRC before they take effect.

#include "rowhammer/types.hpp"

#include <algorithm>
#include <bit>
#include <concepts>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace rowhammer {

class DramModule;

/// Receives activation and charge-restore events from DramModule.
template <class H>
concept EventSink = requires(H& h, DramModule& m, BankIndex b, RowIndex r, Nanoseconds t) {
    h.on_activate(m, b, r, t);
    h.on_charge_restore(m, b, r, t);
};

struct NullSink {
    void on_activate(DramModule&, BankIndex, RowIndex, Nanoseconds) {}
    void on_charge_restore(DramModule&, BankIndex, RowIndex, Nanoseconds) {}
};

/// Per-row orientation layout: alternating blocks of `block_rows` rows,
/// starting with `first` (rows 0-7 True, 8-15 Anti, ... by default).
struct OrientationLayout {
    std::uint32_t block_rows = 8;
    CellOrientation first = CellOrientation::True;

    [[nodiscard]] CellOrientation at(RowIndex row) const
    {
        if (block_rows == 0)
            return first;
        const bool flipped = ((row / block_rows) & 1U) != 0;
        if (!flipped)
            return first;
        return first == CellOrientation::True ? CellOrientation::Anti : CellOrientation::True;
    }
};

/// Dense logical data image of a whole module, one bit per cell.
class DataImage {
public:
    DataImage() = default;
    explicit DataImage(const ModuleGeometry& g)
        : geometry_(g), words_per_row_((g.cols_per_row + 63) / 64), words_(g.row_count() * words_per_row_, 0)
    {
    }

    [[nodiscard]] const ModuleGeometry& geometry() const { return geometry_; }
    [[nodiscard]] std::size_t words_per_row() const { return words_per_row_; }

    [[nodiscard]] bool get(const CellAddress& a) const
    {
        return ((words_[word_index(a)] >> (a.col & 63U)) & 1U) != 0;
    }
    void set(const CellAddress& a, bool v)
    {
        const std::uint64_t mask = std::uint64_t{1} << (a.col & 63U);
        auto& w = words_[word_index(a)];
        w = v ? (w | mask) : (w & ~mask);
    }

    [[nodiscard]] std::uint64_t* row_words(BankIndex bank, RowIndex row)
    {
        return words_.data() + row_offset(bank, row);
    }
    [[nodiscard]] const std::uint64_t* row_words(BankIndex bank, RowIndex row) const
    {
        return words_.data() + row_offset(bank, row);
    }

    /// Mask of valid column bits in word `w` of a row.
    [[nodiscard]] std::uint64_t word_mask(std::size_t w) const
    {
        const std::size_t tail = geometry_.cols_per_row - w * 64;
        return tail >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << tail) - 1);
    }

    friend bool operator==(const DataImage&, const DataImage&) = default;

private:
    [[nodiscard]] std::size_t row_offset(BankIndex bank, RowIndex row) const
    {
        return (std::size_t{bank} * geometry_.rows_per_bank + row) * words_per_row_;
    }
    [[nodiscard]] std::size_t word_index(const CellAddress& a) const
    {
        return row_offset(a.bank, a.row) + a.col / 64;
    }

    ModuleGeometry geometry_{};
    std::size_t words_per_row_ = 0;
    std::vector<std::uint64_t> words_;
};

/// The image a pattern produces on an undisturbed module.
inline DataImage pattern_image(const ModuleGeometry& g, DataPattern p)
{
    DataImage img(g);
    for (BankIndex b = 0; b < g.banks; ++b)
        for (RowIndex r = 0; r < g.rows_per_bank; ++r) {
            const std::uint64_t fill = pattern_bit(p, r) ? ~std::uint64_t{0} : 0;
            auto* w = img.row_words(b, r);
            for (std::size_t i = 0; i < img.words_per_row(); ++i)
                w[i] = fill & img.word_mask(i);
        }
    return img;
}

struct CellDiff {
    CellAddress cell;
    FlipDirection direction;

    friend bool operator==(const CellDiff&, const CellDiff&) = default;
};

/// Cells whose value differs between `expected` and `actual`, in address order.
inline std::vector<CellDiff> diff_images(const DataImage& expected, const DataImage& actual)
{
    std::vector<CellDiff> out;
    const auto& g = expected.geometry();
    for (BankIndex b = 0; b < g.banks; ++b)
        for (RowIndex r = 0; r < g.rows_per_bank; ++r) {
            const auto* e = expected.row_words(b, r);
            const auto* a = actual.row_words(b, r);
            for (std::size_t w = 0; w < expected.words_per_row(); ++w) {
                std::uint64_t x = e[w] ^ a[w];
                while (x != 0) {
                    const int bit = std::countr_zero(x);
                    x &= x - 1;
                    const bool was = ((e[w] >> bit) & 1U) != 0;
                    out.push_back({{b, r, static_cast<ColIndex>(w * 64 + bit)},
                                   was ? FlipDirection::OneToZero : FlipDirection::ZeroToOne});
                }
            }
        }
    return out;
}

struct BankState {
    std::optional<RowIndex> open_row;
    std::optional<Nanoseconds> last_act_time;
};

class DramModule {
public:
    DramModule(ModuleGeometry geometry, TimingParams timing, OrientationLayout layout = {})
        : geometry_(geometry), timing_(timing), charge_(geometry), banks_(geometry.banks),
          row_refresh_time_(geometry.row_count(), Nanoseconds::zero())
    {
        geometry_.validate();
        timing_.validate();
        orientation_.reserve(geometry_.rows_per_bank);
        for (RowIndex r = 0; r < geometry_.rows_per_bank; ++r)
            orientation_.push_back(layout.at(r));
    }

    [[nodiscard]] const ModuleGeometry& geometry() const { return geometry_; }
    [[nodiscard]] const TimingParams& timing() const { return timing_; }
    [[nodiscard]] Nanoseconds now() const { return now_; }
    [[nodiscard]] const BankState& bank_state(BankIndex b) const { return banks_.at(b); }

    /// Orientation of the cells of a physical row (same in every bank).
    [[nodiscard]] CellOrientation orientation(RowIndex physical_row) const { return orientation_[physical_row]; }
    void set_row_orientation(RowIndex physical_row, CellOrientation o) { orientation_.at(physical_row) = o; }

    /// Optional logical-to-physical row mapping. Identity when never set.
    void set_row_remap(std::vector<RowIndex> logical_to_physical)
    {
        if (logical_to_physical.size() != geometry_.rows_per_bank)
            throw ConfigError("row remap must list every row");
        std::vector<RowIndex> inverse(geometry_.rows_per_bank, geometry_.rows_per_bank);
        for (RowIndex l = 0; l < logical_to_physical.size(); ++l) {
            const RowIndex p = logical_to_physical[l];
            if (p >= geometry_.rows_per_bank || inverse[p] != geometry_.rows_per_bank)
                throw ConfigError("row remap must be a permutation");
            inverse[p] = l;
        }
        to_physical_ = std::move(logical_to_physical);
        to_logical_ = std::move(inverse);
    }
    [[nodiscard]] RowIndex physical_row(RowIndex logical) const
    {
        return to_physical_.empty() ? logical : to_physical_[logical];
    }
    [[nodiscard]] RowIndex logical_row(RowIndex physical) const
    {
        return to_logical_.empty() ? physical : to_logical_[physical];
    }

    [[nodiscard]] Nanoseconds row_refresh_time(BankIndex b, RowIndex r) const
    {
        return row_refresh_time_[row_slot(b, r)];
    }

    /// Physical charge state of a cell (true = charged), addressed logically.
    [[nodiscard]] bool charged(const CellAddress& a) const { return charge_.get(a); }

    /// Logical value of a cell, decoded through its orientation.
    [[nodiscard]] bool value(const CellAddress& a) const
    {
        return charge_.get(a) != is_anti(a.row);
    }

    /// Charge loss: a charged cell becomes discharged. Returns false (and does
    /// nothing) if the cell held no charge.
    bool discharge(const CellAddress& a)
    {
        if (!charge_.get(a))
            return false;
        charge_.set(a, false);
        return true;
    }

    /// Writes `pattern` into every cell. Writing a row restores its charge, so
    /// every row's refresh time becomes `time` and the sink sees a restore.
    template <EventSink Hooks>
    void init_pattern(DataPattern pattern, Nanoseconds time, Hooks& hooks)
    {
        for (BankIndex b = 0; b < geometry_.banks; ++b)
            if (banks_[b].open_row)
                throw IllegalCommand("init_pattern: bank " + std::to_string(b) + " has an open row");
        advance_clock(time);
        for (BankIndex b = 0; b < geometry_.banks; ++b)
            for (RowIndex r = 0; r < geometry_.rows_per_bank; ++r) {
                const bool charged = pattern_bit(pattern, r) != is_anti(r);
                const std::uint64_t fill = charged ? ~std::uint64_t{0} : 0;
                auto* w = charge_.row_words(b, r);
                for (std::size_t i = 0; i < charge_.words_per_row(); ++i)
                    w[i] = fill & charge_.word_mask(i);
                row_refresh_time_[row_slot(b, r)] = time;
                hooks.on_charge_restore(*this, b, r, time);
            }
    }

    void init_pattern(DataPattern pattern, Nanoseconds time = Nanoseconds::zero())
    {
        NullSink sink;
        init_pattern(pattern, time, sink);
    }

    /// Applies one command. Returns the stored bit for RD, nothing otherwise.
    template <EventSink Hooks>
    std::optional<bool> apply_command(const Command& cmd, Hooks& hooks)
    {
        check_address(cmd);
        if (cmd.time < now_)
            throw IllegalCommand("command at t=" + std::to_string(cmd.time.count()) +
                                 "ns precedes t=" + std::to_string(now_.count()) + "ns");
        auto& bank = banks_[cmd.bank];
        switch (cmd.kind) {
        case CommandKind::ACT: {
            if (bank.open_row)
                throw IllegalCommand(describe(cmd) + ": bank already has row " + std::to_string(*bank.open_row) + " open");
            if (bank.last_act_time && cmd.time - *bank.last_act_time < timing_.t_rc)
                throw TimingViolation(describe(cmd) + ": only " + std::to_string((cmd.time - *bank.last_act_time).count()) +
                                      "ns after previous ACT (tRC " + std::to_string(timing_.t_rc.count()) + "ns)");
            now_ = cmd.time;
            bank.open_row = cmd.row;
            bank.last_act_time = cmd.time;
            row_refresh_time_[row_slot(cmd.bank, cmd.row)] = cmd.time;
            hooks.on_charge_restore(*this, cmd.bank, cmd.row, cmd.time);
            hooks.on_activate(*this, cmd.bank, cmd.row, cmd.time);
            return std::nullopt;
        }
        case CommandKind::PRE:
            require_open(bank, cmd);
            now_ = cmd.time;
            bank.open_row.reset();
            return std::nullopt;
        case CommandKind::RD:
            require_open(bank, cmd);
            now_ = cmd.time;
            return value({cmd.bank, cmd.row, cmd.col});
        case CommandKind::WR:
            require_open(bank, cmd);
            now_ = cmd.time;
            charge_.set({cmd.bank, cmd.row, cmd.col}, cmd.data != is_anti(cmd.row));
            return std::nullopt;
        case CommandKind::REF:
            if (bank.open_row)
                throw IllegalCommand(describe(cmd) + ": bank has row " + std::to_string(*bank.open_row) + " open");
            now_ = cmd.time;
            row_refresh_time_[row_slot(cmd.bank, cmd.row)] = cmd.time;
            hooks.on_charge_restore(*this, cmd.bank, cmd.row, cmd.time);
            return std::nullopt;
        }
        return std::nullopt;
    }

    std::optional<bool> apply_command(const Command& cmd)
    {
        NullSink sink;
        return apply_command(cmd, sink);
    }

    /// Logical value of every cell.
    [[nodiscard]] DataImage read_out() const
    {
        DataImage img(geometry_);
        for (BankIndex b = 0; b < geometry_.banks; ++b)
            for (RowIndex r = 0; r < geometry_.rows_per_bank; ++r) {
                const std::uint64_t invert = is_anti(r) ? ~std::uint64_t{0} : 0;
                const auto* src = charge_.row_words(b, r);
                auto* dst = img.row_words(b, r);
                for (std::size_t i = 0; i < img.words_per_row(); ++i)
                    dst[i] = (src[i] ^ invert) & img.word_mask(i);
            }
        return img;
    }

    /// Moves the clock forward without issuing a command.
    void advance_clock(Nanoseconds t)
    {
        if (t < now_)
            throw IllegalCommand("clock cannot move backwards to t=" + std::to_string(t.count()) + "ns");
        now_ = t;
    }

private:
    [[nodiscard]] bool is_anti(RowIndex logical_row) const
    {
        return orientation_[physical_row(logical_row)] == CellOrientation::Anti;
    }
    [[nodiscard]] std::size_t row_slot(BankIndex b, RowIndex r) const
    {
        return std::size_t{b} * geometry_.rows_per_bank + r;
    }

    static std::string describe(const Command& c)
    {
        return std::string(to_string(c.kind)) + " bank " + std::to_string(c.bank) + " row " + std::to_string(c.row) +
               " at t=" + std::to_string(c.time.count()) + "ns";
    }

    void check_address(const Command& c) const
    {
        if (c.bank >= geometry_.banks || c.row >= geometry_.rows_per_bank ||
            ((c.kind == CommandKind::RD || c.kind == CommandKind::WR) && c.col >= geometry_.cols_per_row))
            throw AddressOutOfRange(describe(c) + " col " + std::to_string(c.col) + " is outside the module");
    }

    static void require_open(const BankState& bank, const Command& c)
    {
        if (!bank.open_row)
            throw IllegalCommand(describe(c) + ": bank is closed");
        if (*bank.open_row != c.row)
            throw IllegalCommand(describe(c) + ": open row is " + std::to_string(*bank.open_row));
    }

    ModuleGeometry geometry_;
    TimingParams timing_;
    DataImage charge_;
    std::vector<CellOrientation> orientation_;
    std::vector<BankState> banks_;
    std::vector<Nanoseconds> row_refresh_time_;
    std::vector<RowIndex> to_physical_;
    std::vector<RowIndex> to_logical_;
    Nanoseconds now_{0};
};

namespace detail {
__extension__ typedef unsigned __int128 u128;
} // namespace detail

/// Distributed per-row refresh: row r of every bank is refreshed at
/// r * tREFW / rows + k * tREFW. Events come out in time order.
class RefreshSchedule {
public:
    RefreshSchedule(const ModuleGeometry& g, Nanoseconds t_refw) : rows_(g.rows_per_bank), banks_(g.banks), t_refw_(t_refw) {}

    /// Time of the `index`-th per-row refresh event.
    [[nodiscard]] Nanoseconds event_time(std::uint64_t index) const
    {
        const auto scaled = static_cast<detail::u128>(index) * static_cast<std::uint64_t>(t_refw_.count()) / rows_;
        return Nanoseconds{static_cast<std::int64_t>(scaled)};
    }
    [[nodiscard]] RowIndex event_row(std::uint64_t index) const { return static_cast<RowIndex>(index % rows_); }

    [[nodiscard]] Nanoseconds next_time() const { return event_time(next_); }
    [[nodiscard]] RowIndex next_row() const { return event_row(next_); }
    void pop() { ++next_; }

    /// Skips every event strictly before `t`.
    void skip_to(Nanoseconds t)
    {
        // Smallest index whose time is >= t: ceil(t * rows / t_refw), then settle rounding.
        auto idx = static_cast<std::uint64_t>((static_cast<detail::u128>(std::max<std::int64_t>(t.count(), 0)) * rows_) /
                                              static_cast<std::uint64_t>(t_refw_.count()));
        while (idx > 0 && event_time(idx - 1) >= t)
            --idx;
        while (event_time(idx) < t)
            ++idx;
        next_ = std::max(next_, idx);
    }

    /// Earliest time >= t at which `row` is refreshed.
    [[nodiscard]] Nanoseconds next_refresh_of(RowIndex row, Nanoseconds t) const
    {
        const std::int64_t offset = event_time(row).count();
        const std::int64_t w = t_refw_.count();
        std::int64_t k = t.count() <= offset ? 0 : (t.count() - offset + w - 1) / w;
        return Nanoseconds{offset + k * w};
    }

    [[nodiscard]] std::uint32_t banks() const { return banks_; }
    [[nodiscard]] Nanoseconds window() const { return t_refw_; }

private:
    std::uint32_t rows_;
    std::uint32_t banks_;
    Nanoseconds t_refw_;
    std::uint64_t next_ = 0;
};

/// REF commands for every bank with refresh time in [start, end).
inline std::vector<Command> run_refresh_schedule(const ModuleGeometry& g, const TimingParams& timing, Nanoseconds start,
                                                 Nanoseconds end)
{
    if (end < start)
        throw ConfigError("run_refresh_schedule: start must be <= end");
    std::vector<Command> out;
    RefreshSchedule schedule(g, timing.t_refw);
    schedule.skip_to(start);
    while (schedule.next_time() < end) {
        for (BankIndex b = 0; b < g.banks; ++b)
            out.push_back({CommandKind::REF, b, schedule.next_row(), 0, false, schedule.next_time()});
        schedule.pop();
    }
    return out;
}

// Command trace text dump: `<time_ns> <KIND> <bank> <row> [<col>] [<data>]`,
// col present for RD/WR, data (0/1) present for WR.

inline void write_command(std::ostream& os, const Command& c)
{
    os << c.time.count() << ' ' << to_string(c.kind) << ' ' << c.bank << ' ' << c.row;
    if (c.kind == CommandKind::RD || c.kind == CommandKind::WR)
        os << ' ' << c.col;
    if (c.kind == CommandKind::WR)
        os << ' ' << (c.data ? 1 : 0);
    os << '\n';
}

inline std::vector<Command> read_command_trace(std::istream& is)
{
    std::vector<Command> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ls(line);
        std::int64_t t = 0;
        std::string kind;
        Command c;
        if (!(ls >> t >> kind >> c.bank >> c.row))
            throw ConfigError("command trace line " + std::to_string(lineno) + ": expected <time> <KIND> <bank> <row>");
        c.time = Nanoseconds{t};
        if (kind == "ACT") c.kind = CommandKind::ACT;
        else if (kind == "PRE") c.kind = CommandKind::PRE;
        else if (kind == "RD") c.kind = CommandKind::RD;
        else if (kind == "WR") c.kind = CommandKind::WR;
        else if (kind == "REF") c.kind = CommandKind::REF;
        else throw ConfigError("command trace line " + std::to_string(lineno) + ": unknown command '" + kind + "'");
        if (c.kind == CommandKind::RD || c.kind == CommandKind::WR) {
            if (!(ls >> c.col))
                throw ConfigError("command trace line " + std::to_string(lineno) + ": missing column");
        }
        if (c.kind == CommandKind::WR) {
            int d = 0;
            if (!(ls >> d) || (d != 0 && d != 1))
                throw ConfigError("command trace line " + std::to_string(lineno) + ": WR needs data 0 or 1");
            c.data = d == 1;
        }
        out.push_back(c);
    }
    return out;
}

} // namespace rowhammer
