#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rowhammer {

using Nanoseconds = std::chrono::nanoseconds;
using BankIndex = std::uint32_t;
using RowIndex = std::uint32_t;
using ColIndex = std::uint32_t;

// Errors. Every failure the simulator can report derives from Error so the
// CLI can map it to an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A command was issued in a bank state that does not allow it.
class IllegalCommand : public Error {
public:
    using Error::Error;
};

/// Two activations to one bank closer than tRC.
class TimingViolation : public Error {
public:
    using Error::Error;
};

class AddressOutOfRange : public Error {
public:
    using Error::Error;
};

/// Configuration rejected during validation (bad value or unknown key).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Monte Carlo confidence interval is wider than the caller asked for.
class InsufficientTrials : public Error {
public:
    using Error::Error;
};

struct ModuleGeometry {
    std::uint32_t banks = 2;
    std::uint32_t rows_per_bank = 512;
    std::uint32_t cols_per_row = 4096;

    [[nodiscard]] std::uint64_t cell_count() const
    {
        return std::uint64_t{banks} * rows_per_bank * cols_per_row;
    }
    [[nodiscard]] std::uint64_t row_count() const { return std::uint64_t{banks} * rows_per_bank; }

    void validate() const
    {
        if (banks < 1 || cols_per_row < 1)
            throw ConfigError("geometry: banks and cols_per_row must be >= 1");
        if (rows_per_bank < 3)
            throw ConfigError("geometry: rows_per_bank must be >= 3");
    }

    friend bool operator==(const ModuleGeometry&, const ModuleGeometry&) = default;
};

struct TimingParams {
    Nanoseconds t_rc{55};
    Nanoseconds t_refw{64'000'000};

    void validate() const
    {
        if (t_rc <= Nanoseconds::zero())
            throw ConfigError("timing: t_rc must be > 0");
        if (t_refw < t_rc)
            throw ConfigError("timing: t_refw must be >= t_rc");
    }

    friend bool operator==(const TimingParams&, const TimingParams&) = default;
};

enum class CellOrientation : std::uint8_t { True, Anti };

enum class DataPattern : std::uint8_t { Solid0, Solid1, RowStripe, RowStripeInv };

inline std::string_view to_string(DataPattern p)
{
    switch (p) {
    case DataPattern::Solid0: return "Solid0";
    case DataPattern::Solid1: return "Solid1";
    case DataPattern::RowStripe: return "RowStripe";
    case DataPattern::RowStripeInv: return "RowStripeInv";
    }
    return "?";
}

inline DataPattern parse_pattern(std::string_view s)
{
    if (s == "Solid0") return DataPattern::Solid0;
    if (s == "Solid1") return DataPattern::Solid1;
    if (s == "RowStripe") return DataPattern::RowStripe;
    if (s == "RowStripeInv") return DataPattern::RowStripeInv;
    throw ConfigError("unknown data pattern '" + std::string(s) + "'");
}

/// Logical value a pattern assigns to every cell of `row`.
inline bool pattern_bit(DataPattern p, RowIndex row)
{
    switch (p) {
    case DataPattern::Solid0: return false;
    case DataPattern::Solid1: return true;
    case DataPattern::RowStripe: return (row & 1U) != 0;
    case DataPattern::RowStripeInv: return (row & 1U) == 0;
    }
    return false;
}

enum class FlipDirection : std::uint8_t { OneToZero, ZeroToOne };

struct CellAddress {
    BankIndex bank = 0;
    RowIndex row = 0;
    ColIndex col = 0;

    friend auto operator<=>(const CellAddress&, const CellAddress&) = default;
};

enum class CommandKind : std::uint8_t { ACT, PRE, RD, WR, REF };

inline std::string_view to_string(CommandKind k)
{
    switch (k) {
    case CommandKind::ACT: return "ACT";
    case CommandKind::PRE: return "PRE";
    case CommandKind::RD: return "RD";
    case CommandKind::WR: return "WR";
    case CommandKind::REF: return "REF";
    }
    return "?";
}

struct Command {
    CommandKind kind = CommandKind::ACT;
    BankIndex bank = 0;
    RowIndex row = 0;
    ColIndex col = 0;
    bool data = false;
    Nanoseconds time{0};

    friend bool operator==(const Command&, const Command&) = default;
};

} // namespace rowhammer
