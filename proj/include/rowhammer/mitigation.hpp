#pragma once

#include "rowhammer/rng.hpp"
#include "rowhammer/types.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace rowhammer {

/// Rows a mitigation wants refreshed. At most the two neighbors of a row.
struct NeighborRows {
    std::array<RowIndex, 2> rows{};
    std::uint8_t count = 0;

    void push(RowIndex r) { rows[count++] = r; }
    [[nodiscard]] bool empty() const { return count == 0; }
    [[nodiscard]] const RowIndex* begin() const { return rows.data(); }
    [[nodiscard]] const RowIndex* end() const { return rows.data() + count; }
};

/// Who issued an activation: the request stream, or a mitigation refreshing
/// a neighbor.
enum class ActOrigin : std::uint8_t { Demand, Mitigation };

class Mitigation {
public:
    virtual ~Mitigation() = default;

    [[nodiscard]] virtual std::string_view name() const = 0;

    virtual NeighborRows on_row_activate(BankIndex, RowIndex, Nanoseconds, ActOrigin) { return {}; }
    virtual NeighborRows on_row_close(BankIndex, RowIndex, Nanoseconds, ActOrigin) { return {}; }

    /// Bytes of per-row bookkeeping the mechanism keeps.
    [[nodiscard]] virtual std::size_t state_bytes() const { return 0; }
};

class NullMitigation final : public Mitigation {
public:
    [[nodiscard]] std::string_view name() const override { return "none"; }
};

struct ParaConfig {
    double p = 0.001;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (!(p >= 0.0 && p <= 1.0))
            throw ConfigError("para: p must be in [0, 1]");
    }
};

/// Probabilistic adjacent row activation. On every demand row close, one
/// draw decides: below neighbor with probability p/2, above neighbor with
/// probability p/2, nothing otherwise. An edge row whose neighbor on the
/// chosen side does not exist gets nothing, so edges are refreshed at p/2.
///
/// Refreshes issued by PARA itself do not flip the coin again.
class Para final : public Mitigation {
public:
    Para(ParaConfig cfg, std::uint32_t rows_per_bank)
        : p_(cfg.p), rows_(rows_per_bank), rng_(cfg.seed, Stream::Mitigation)
    {
        cfg.validate();
    }

    [[nodiscard]] std::string_view name() const override { return "para"; }

    NeighborRows on_row_close(BankIndex, RowIndex row, Nanoseconds, ActOrigin origin) override
    {
        NeighborRows out;
        if (origin != ActOrigin::Demand)
            return out;
        if (auto n = choose(row))
            out.push(*n);
        return out;
    }

    /// The bare coin: a neighbor of `row`, or nothing.
    std::optional<RowIndex> choose(RowIndex row)
    {
        const double u = rng_.uniform01();
        if (u < p_ / 2) {
            ++below_;
            if (row > 0)
                return row - 1;
        } else if (u < p_) {
            ++above_;
            if (row + 1 < rows_)
                return row + 1;
        }
        return std::nullopt;
    }

    /// Heads per side, counted before edge clipping.
    [[nodiscard]] std::uint64_t below_draws() const { return below_; }
    [[nodiscard]] std::uint64_t above_draws() const { return above_; }

private:
    double p_;
    std::uint32_t rows_;
    Rng rng_;
    std::uint64_t below_ = 0;
    std::uint64_t above_ = 0;
};

struct CounterConfig {
    std::uint64_t act_threshold = 1000;

    void validate() const
    {
        // A refresh adds one count to each neighbor, so a trigger must consume
        // more counts than it produces or refresh cascades need not terminate.
        if (act_threshold < 3)
            throw ConfigError("counter: act_threshold must be >= 3");
    }
};

/// Counts activations of every row within the current refresh window and
/// refreshes both neighbors of a row when its count reaches the threshold.
/// All activations count, including the ones this mechanism issues. The
/// table is cleared at every refresh window boundary.
class CounterRefresh final : public Mitigation {
public:
    CounterRefresh(CounterConfig cfg, const ModuleGeometry& g, Nanoseconds t_refw)
        : threshold_(cfg.act_threshold), rows_(g.rows_per_bank), t_refw_(t_refw), table_(g.row_count(), 0)
    {
        cfg.validate();
    }

    [[nodiscard]] std::string_view name() const override { return "counter"; }

    NeighborRows on_row_activate(BankIndex bank, RowIndex row, Nanoseconds time, ActOrigin) override
    {
        const std::int64_t window = time.count() / t_refw_.count();
        if (window != window_) {
            std::fill(table_.begin(), table_.end(), 0);
            window_ = window;
        }
        NeighborRows out;
        auto& count = table_[std::size_t{bank} * rows_ + row];
        if (++count < threshold_)
            return out;
        count = 0;
        if (row > 0)
            out.push(row - 1);
        if (row + 1 < rows_)
            out.push(row + 1);
        return out;
    }

    [[nodiscard]] std::size_t state_bytes() const override { return table_.size() * sizeof(std::uint32_t); }
    [[nodiscard]] std::uint64_t count(BankIndex bank, RowIndex row) const { return table_[std::size_t{bank} * rows_ + row]; }

private:
    std::uint64_t threshold_;
    std::uint32_t rows_;
    Nanoseconds t_refw_;
    std::vector<std::uint32_t> table_;
    std::int64_t window_ = 0;
};

/// Refresh-rate scaling has no command hooks; it only shortens the window.
inline TimingParams refresh_scaling(TimingParams timing, Nanoseconds t_refw_new)
{
    if (t_refw_new <= Nanoseconds::zero())
        throw ConfigError("refresh scaling: t_refw must be > 0");
    timing.t_refw = t_refw_new;
    timing.validate();
    return timing;
}

} // namespace rowhammer
