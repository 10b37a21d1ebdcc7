#pragma once

// Runs command streams against a module with the distributed refresh
// schedule interleaved.
//
// A REF that falls due while its bank has a row open waits until that bank
// is precharged, then issues at the PRE's timestamp.

#include "rowhammer/controller.hpp"
#include "rowhammer/dram.hpp"
#include "rowhammer/fault_model.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace rowhammer {

template <EventSink Hooks>
class Simulation {
public:
    Simulation(DramModule& module, Hooks& hooks, bool refresh_enabled = true)
        : module_(module), hooks_(hooks), schedule_(module.geometry(), module.timing().t_refw), refresh_(refresh_enabled),
          deferred_(module.geometry().banks)
    {
    }

    [[nodiscard]] DramModule& module() { return module_; }
    [[nodiscard]] const RefreshSchedule& schedule() const { return schedule_; }

    /// Called with every command applied to the module, REFs included.
    void set_observer(std::function<void(const Command&)> observer) { observer_ = std::move(observer); }

    /// Command sink entry point.
    void operator()(const Command& cmd)
    {
        issue_refresh_until(cmd.time, true);
        apply(cmd);
        if (cmd.kind == CommandKind::PRE)
            flush_deferred(cmd.bank, cmd.time);
    }

    /// Issues every refresh event strictly before `t`.
    void run_refresh_until(Nanoseconds t) { issue_refresh_until(t, false); }

    /// Drops refresh events before `t` (used when the whole module is rewritten).
    void skip_refresh_to(Nanoseconds t)
    {
        schedule_.skip_to(t);
        for (auto& d : deferred_)
            d.clear();
    }

    /// Rewrites the module with `pattern` at time `t`.
    void init_pattern(DataPattern pattern, Nanoseconds t)
    {
        skip_refresh_to(t);
        module_.init_pattern(pattern, t, hooks_);
    }

private:
    void issue_refresh_until(Nanoseconds t, bool inclusive)
    {
        if (!refresh_)
            return;
        while (inclusive ? schedule_.next_time() <= t : schedule_.next_time() < t) {
            const Nanoseconds when = schedule_.next_time();
            const RowIndex row = schedule_.next_row();
            for (BankIndex b = 0; b < module_.geometry().banks; ++b) {
                if (module_.bank_state(b).open_row)
                    deferred_[b].push_back(row);
                else
                    apply(Command{CommandKind::REF, b, row, 0, false, std::max(when, module_.now())});
            }
            schedule_.pop();
        }
    }

    void flush_deferred(BankIndex b, Nanoseconds t)
    {
        for (RowIndex row : deferred_[b])
            apply(Command{CommandKind::REF, b, row, 0, false, t});
        deferred_[b].clear();
    }

    void apply(const Command& cmd)
    {
        module_.apply_command(cmd, hooks_);
        if (observer_)
            observer_(cmd);
    }

    DramModule& module_;
    Hooks& hooks_;
    RefreshSchedule schedule_;
    bool refresh_;
    std::vector<std::vector<RowIndex>> deferred_;
    std::function<void(const Command&)> observer_;
};

/// Direct command driver, in the style of an FPGA test platform: opens and
/// closes one row back to back at a fixed activation interval, bypassing the
/// controller's row-hit merging.
class Tester {
public:
    Tester(const ModuleGeometry& g, const TimingParams& timing, Mitigation* mitigation) : issuer_(g, timing, mitigation) {}

    [[nodiscard]] const CommandIssuer& issuer() const { return issuer_; }

    /// ACT/PRE cycles of `row` starting at `start`, one per `interval`. A cycle
    /// is issued only if it completes by `end`, so an undisturbed run issues
    /// floor((end - start) / interval) activations. Returns the count issued.
    template <CommandSink Sink>
    std::uint64_t hammer(BankIndex bank, RowIndex row, Nanoseconds interval, Nanoseconds start, Nanoseconds end, Sink& sink)
    {
        std::uint64_t n = 0;
        Nanoseconds planned = start;
        while (true) {
            const Nanoseconds t = std::max({planned, issuer_.clock(), issuer_.act_ready(bank)});
            if (t + interval > end)
                break;
            issuer_.activate(bank, row, t, sink);
            issuer_.precharge(bank, t, sink);
            ++n;
            planned = t + interval;
        }
        issuer_.advance_to(end);
        return n;
    }

    void advance_to(Nanoseconds t) { issuer_.advance_to(t); }

private:
    CommandIssuer issuer_;
};

} // namespace rowhammer
