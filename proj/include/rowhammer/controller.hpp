#pragma once

// Open-row FCFS memory controller.
//
// Requests are served strictly in arrival order. A request to the open row
// of its bank issues only the column command; any other request closes the
// open row (PRE), activates the target row (ACT, spaced >= tRC from the
// bank's previous ACT) and then issues the column command. Mitigation hooks
// run on every ACT and PRE; neighbor refreshes they ask for are issued as
// ACT+PRE pairs right after the row they belong to closes.

#include "rowhammer/dram.hpp"
#include "rowhammer/mitigation.hpp"

#include <algorithm>
#include <cstdint>
#include <deque>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace rowhammer {

template <class S>
concept CommandSink = requires(S& s, const Command& c) { s(c); };

struct Request {
    enum class Kind : std::uint8_t { Read, Write };

    Kind kind = Kind::Read;
    BankIndex bank = 0;
    RowIndex row = 0;
    ColIndex col = 0;
    bool data = false;
    Nanoseconds arrival{0};  // earliest issue time
    std::uint64_t index = 0; // arrival order

    friend bool operator==(const Request&, const Request&) = default;
};

/// Issues legal command sequences for one module and runs mitigation hooks.
/// Shared by the controller and by direct-command test drivers.
class CommandIssuer {
public:
    CommandIssuer(const ModuleGeometry& g, const TimingParams& timing, Mitigation* mitigation)
        : geometry_(g), timing_(timing), mitigation_(mitigation), banks_(g.banks)
    {
    }

    [[nodiscard]] Nanoseconds clock() const { return clock_; }
    [[nodiscard]] std::optional<RowIndex> open_row(BankIndex b) const { return banks_[b].open_row; }
    [[nodiscard]] std::uint64_t demand_activations() const { return demand_acts_; }
    [[nodiscard]] std::uint64_t mitigation_activations() const { return mitigation_acts_; }

    /// Earliest time the bank may take another ACT.
    [[nodiscard]] Nanoseconds act_ready(BankIndex b) const
    {
        const auto& bank = banks_[b];
        return bank.last_act ? *bank.last_act + timing_.t_rc : Nanoseconds::zero();
    }

    void advance_to(Nanoseconds t) { clock_ = std::max(clock_, t); }

    /// ACT at the earliest legal time >= `earliest`. Returns the issue time.
    template <CommandSink Sink>
    Nanoseconds activate(BankIndex b, RowIndex row, Nanoseconds earliest, Sink& sink)
    {
        auto& bank = banks_[b];
        const Nanoseconds t = std::max({earliest, clock_, act_ready(b)});
        clock_ = t;
        sink(Command{CommandKind::ACT, b, row, 0, false, t});
        bank.open_row = row;
        bank.last_act = t;
        ++demand_acts_;
        if (mitigation_)
            for (RowIndex n : mitigation_->on_row_activate(b, row, t, ActOrigin::Demand))
                bank.pending.push_back(n);
        return t;
    }

    template <CommandSink Sink>
    void column(Request::Kind kind, BankIndex b, ColIndex col, bool data, Sink& sink)
    {
        const auto& bank = banks_[b];
        sink(Command{kind == Request::Kind::Read ? CommandKind::RD : CommandKind::WR, b, *bank.open_row, col, data, clock_});
    }

    /// PRE of the open row at `earliest` (or later), then any neighbor
    /// refreshes the mitigation asked for.
    template <CommandSink Sink>
    void precharge(BankIndex b, Nanoseconds earliest, Sink& sink)
    {
        auto& bank = banks_[b];
        const RowIndex row = *bank.open_row;
        clock_ = std::max(clock_, earliest);
        sink(Command{CommandKind::PRE, b, row, 0, false, clock_});
        bank.open_row.reset();
        if (!mitigation_)
            return;
        for (RowIndex n : mitigation_->on_row_close(b, row, clock_, ActOrigin::Demand))
            bank.pending.push_back(n);
        while (!bank.pending.empty()) {
            const RowIndex n = bank.pending.front();
            bank.pending.pop_front();
            const Nanoseconds t = std::max(clock_, act_ready(b));
            clock_ = t;
            sink(Command{CommandKind::ACT, b, n, 0, false, t});
            bank.last_act = t;
            ++mitigation_acts_;
            for (RowIndex m : mitigation_->on_row_activate(b, n, t, ActOrigin::Mitigation))
                bank.pending.push_back(m);
            sink(Command{CommandKind::PRE, b, n, 0, false, t});
            for (RowIndex m : mitigation_->on_row_close(b, n, t, ActOrigin::Mitigation))
                bank.pending.push_back(m);
        }
    }

    template <CommandSink Sink>
    void close_all(Sink& sink)
    {
        for (BankIndex b = 0; b < geometry_.banks; ++b)
            if (banks_[b].open_row)
                precharge(b, clock_, sink);
    }

private:
    struct Bank {
        std::optional<RowIndex> open_row;
        std::optional<Nanoseconds> last_act;
        std::deque<RowIndex> pending;
    };

    ModuleGeometry geometry_;
    TimingParams timing_;
    Mitigation* mitigation_;
    std::vector<Bank> banks_;
    Nanoseconds clock_{0};
    std::uint64_t demand_acts_ = 0;
    std::uint64_t mitigation_acts_ = 0;
};

class Controller {
public:
    Controller(const ModuleGeometry& g, const TimingParams& timing, Mitigation* mitigation = nullptr)
        : geometry_(g), issuer_(g, timing, mitigation)
    {
    }

    [[nodiscard]] const CommandIssuer& issuer() const { return issuer_; }

    /// Requests issue no earlier than `t` from now on.
    void advance_to(Nanoseconds t) { issuer_.advance_to(t); }

    template <CommandSink Sink>
    void submit(const Request& req, Sink& sink)
    {
        if (req.bank >= geometry_.banks || req.row >= geometry_.rows_per_bank || req.col >= geometry_.cols_per_row)
            throw AddressOutOfRange("request " + std::to_string(req.index) + " (bank " + std::to_string(req.bank) + " row " +
                                    std::to_string(req.row) + " col " + std::to_string(req.col) + ") is outside the module");
        const Nanoseconds t = std::max(issuer_.clock(), origin_ + req.arrival);
        const auto open = issuer_.open_row(req.bank);
        if (!open || *open != req.row) {
            if (open)
                issuer_.precharge(req.bank, t, sink);
            issuer_.activate(req.bank, req.row, t, sink);
        } else {
            issuer_.advance_to(t);
        }
        issuer_.column(req.kind, req.bank, req.col, req.data, sink);
    }

    /// Closes every open row.
    template <CommandSink Sink>
    void finish(Sink& sink)
    {
        issuer_.close_all(sink);
    }

    /// Arrival times of subsequent requests are offsets from `t`.
    void set_origin(Nanoseconds t)
    {
        origin_ = t;
        issuer_.advance_to(t);
    }

private:
    ModuleGeometry geometry_;
    CommandIssuer issuer_;
    Nanoseconds origin_{0};
};

/// Translates a request sequence into a command trace (rows left open at the
/// end are closed).
inline std::vector<Command> translate(std::span<const Request> requests, const ModuleGeometry& g, const TimingParams& timing,
                                      Mitigation* mitigation = nullptr)
{
    std::vector<Command> out;
    auto sink = [&out](const Command& c) { out.push_back(c); };
    Controller ctl(g, timing, mitigation);
    for (const auto& r : requests)
        ctl.submit(r, sink);
    ctl.finish(sink);
    return out;
}

struct HammerRate {
    /// Peak ACT count of each row within any single refresh window.
    std::map<std::pair<BankIndex, RowIndex>, std::uint64_t> per_row;
    std::uint64_t max = 0;
};

/// Activations per row per tREFW window (windows aligned to t = 0).
inline HammerRate hammer_rate(std::span<const Command> trace, Nanoseconds t_refw)
{
    HammerRate out;
    std::map<std::tuple<BankIndex, RowIndex, std::int64_t>, std::uint64_t> counts;
    for (const auto& c : trace)
        if (c.kind == CommandKind::ACT)
            ++counts[{c.bank, c.row, c.time.count() / t_refw.count()}];
    for (const auto& [key, n] : counts) {
        auto& peak = out.per_row[{std::get<0>(key), std::get<1>(key)}];
        peak = std::max(peak, n);
        out.max = std::max(out.max, n);
    }
    return out;
}

// Request trace text format, one request per line:
//   <R|W> <bank> <row> <col> [data=<0|1>] [t=<arrival_ns>]

inline void write_request(std::ostream& os, const Request& r)
{
    os << (r.kind == Request::Kind::Read ? 'R' : 'W') << ' ' << r.bank << ' ' << r.row << ' ' << r.col;
    if (r.kind == Request::Kind::Write)
        os << " data=" << (r.data ? 1 : 0);
    if (r.arrival != Nanoseconds::zero())
        os << " t=" << r.arrival.count();
    os << '\n';
}

inline std::vector<Request> read_request_trace(std::istream& is)
{
    std::vector<Request> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ls(line);
        std::string kind;
        Request r;
        if (!(ls >> kind >> r.bank >> r.row >> r.col) || (kind != "R" && kind != "W"))
            throw ConfigError("request trace line " + std::to_string(lineno) + ": expected <R|W> <bank> <row> <col>");
        r.kind = kind == "R" ? Request::Kind::Read : Request::Kind::Write;
        std::string opt;
        while (ls >> opt) {
            if (opt.rfind("data=", 0) == 0 && (opt == "data=0" || opt == "data=1"))
                r.data = opt == "data=1";
            else if (opt.rfind("t=", 0) == 0)
                r.arrival = Nanoseconds{std::stoll(opt.substr(2))};
            else
                throw ConfigError("request trace line " + std::to_string(lineno) + ": unknown field '" + opt + "'");
        }
        r.index = out.size();
        out.push_back(r);
    }
    return out;
}

} // namespace rowhammer
