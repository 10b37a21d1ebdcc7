#pragma once

// (72,64) SECDED: extended Hamming code over 64-bit words.
//
// Codeword layout (bit index = Hamming position):
//   bit 0                      overall parity over bits 1..71
//   bits 1,2,4,8,16,32,64      check bits c0..c6; c_k covers every position
//                              whose binary index has bit k set
//   the remaining 64 positions data bits d0..d63, in increasing position
//                              order (d0 at 3, d1 at 5, d2 at 6, d3 at 7,
//                              d4 at 9, ..., d63 at 71)
//
// Decoding: syndrome s = XOR of the positions of all set bits in 1..71,
// P = parity of all 72 bits.
//   s == 0, P == 0  -> Clean
//   P == 1          -> single error at position s (s == 0: the parity bit);
//                      positions beyond 71 are reported uncorrectable
//   s != 0, P == 0  -> DetectedUncorrectable

#include "rowhammer/dram.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <vector>

namespace rowhammer::secded {

inline constexpr int kCodewordBits = 72;

struct Codeword {
    std::uint64_t lo = 0; // bits 0..63
    std::uint8_t hi = 0;  // bits 64..71

    [[nodiscard]] bool bit(int i) const
    {
        return i < 64 ? ((lo >> i) & 1U) != 0 : ((hi >> (i - 64)) & 1U) != 0;
    }
    void flip(int i)
    {
        if (i < 64)
            lo ^= std::uint64_t{1} << i;
        else
            hi = static_cast<std::uint8_t>(hi ^ (1U << (i - 64)));
    }

    friend bool operator==(const Codeword&, const Codeword&) = default;
};

namespace detail {

struct Tables {
    std::array<std::uint8_t, 64> data_position{};
    // check_mask[k]: data bits covered by check bit c_k.
    std::array<std::uint64_t, 7> check_mask{};
};

constexpr Tables make_tables()
{
    Tables t{};
    int d = 0;
    for (int pos = 1; pos < kCodewordBits && d < 64; ++pos) {
        if (std::has_single_bit(static_cast<unsigned>(pos)))
            continue;
        t.data_position[d] = static_cast<std::uint8_t>(pos);
        for (int k = 0; k < 7; ++k)
            if ((pos >> k) & 1)
                t.check_mask[k] |= std::uint64_t{1} << d;
        ++d;
    }
    return t;
}

inline constexpr Tables kTables = make_tables();

inline std::uint8_t check_bits(std::uint64_t word)
{
    std::uint8_t c = 0;
    for (int k = 0; k < 7; ++k)
        c = static_cast<std::uint8_t>(c | ((std::popcount(word & kTables.check_mask[k]) & 1) << k));
    return c;
}

} // namespace detail

/// The 8 redundancy bits of a word: bit 0 = overall parity, bits 1..7 = c0..c6.
struct CheckByte {
    std::uint8_t value = 0;
};

inline CheckByte check_byte(std::uint64_t word)
{
    const std::uint8_t c = detail::check_bits(word);
    const int parity = (std::popcount(word) + std::popcount(static_cast<unsigned>(c))) & 1;
    return {static_cast<std::uint8_t>((c << 1) | parity)};
}

inline std::uint64_t extract_data(const Codeword& cw)
{
    std::uint64_t w = 0;
    for (int d = 0; d < 64; ++d)
        if (cw.bit(detail::kTables.data_position[d]))
            w |= std::uint64_t{1} << d;
    return w;
}

inline Codeword assemble(std::uint64_t word, CheckByte cb)
{
    Codeword cw;
    for (int d = 0; d < 64; ++d)
        if ((word >> d) & 1U)
            cw.flip(detail::kTables.data_position[d]);
    if (cb.value & 1U)
        cw.flip(0);
    for (int k = 0; k < 7; ++k)
        if ((cb.value >> (k + 1)) & 1U)
            cw.flip(1 << k);
    return cw;
}

inline Codeword encode(std::uint64_t word) { return assemble(word, check_byte(word)); }

enum class Status : std::uint8_t { Clean, Corrected, DetectedUncorrectable };

struct DecodeResult {
    Status status = Status::Clean;
    std::uint64_t word = 0;  // meaningful for Clean and Corrected
    int corrected_bit = -1;  // codeword bit index, for Corrected

    friend bool operator==(const DecodeResult&, const DecodeResult&) = default;
};

/// Decode from the data word and the stored check byte (the read path's view).
inline DecodeResult decode(std::uint64_t word, CheckByte stored)
{
    const std::uint8_t stored_c = static_cast<std::uint8_t>(stored.value >> 1);
    const unsigned syndrome = detail::check_bits(word) ^ stored_c;
    const int parity = (std::popcount(word) + std::popcount(static_cast<unsigned>(stored.value))) & 1;
    if (syndrome == 0 && parity == 0)
        return {Status::Clean, word, -1};
    if (parity == 0 || syndrome >= kCodewordBits)
        return {Status::DetectedUncorrectable, word, -1};
    if (syndrome == 0 || std::has_single_bit(syndrome))
        return {Status::Corrected, word, static_cast<int>(syndrome)};
    // Locate the data bit at Hamming position `syndrome`.
    for (int d = 0; d < 64; ++d)
        if (detail::kTables.data_position[d] == syndrome)
            return {Status::Corrected, word ^ (std::uint64_t{1} << d), static_cast<int>(syndrome)};
    return {Status::DetectedUncorrectable, word, -1};
}

inline DecodeResult decode(const Codeword& cw)
{
    std::uint8_t cb = cw.bit(0) ? 1 : 0;
    for (int k = 0; k < 7; ++k)
        if (cw.bit(1 << k))
            cb = static_cast<std::uint8_t>(cb | (1U << (k + 1)));
    return decode(extract_data(cw), CheckByte{cb});
}

/// A 64-byte cache line protected word by word.
struct CacheLine {
    std::array<Codeword, 8> words{};

    static CacheLine encode(const std::array<std::uint64_t, 8>& data)
    {
        CacheLine line;
        for (std::size_t i = 0; i < 8; ++i)
            line.words[i] = secded::encode(data[i]);
        return line;
    }

    /// Flip data bit `bit` (0..511) of the line.
    void flip_data_bit(int bit) { words[bit / 64].flip(detail::kTables.data_position[bit % 64]); }

    [[nodiscard]] std::array<DecodeResult, 8> decode() const
    {
        std::array<DecodeResult, 8> out{};
        for (std::size_t i = 0; i < 8; ++i)
            out[i] = secded::decode(words[i]);
        return out;
    }

    /// True when every word decodes (Clean or Corrected) to `expected`.
    [[nodiscard]] bool recovers(const std::array<std::uint64_t, 8>& expected) const
    {
        const auto r = decode();
        for (std::size_t i = 0; i < 8; ++i)
            if (r[i].status == Status::DetectedUncorrectable || r[i].word != expected[i])
                return false;
        return true;
    }
};

struct ReadPathStats {
    std::uint64_t clean = 0;
    std::uint64_t corrected = 0;
    std::uint64_t uncorrectable = 0;
};

/// ECC on the module read path. Each 64-column group of a row is a data word
/// whose check byte is captured at write time and held outside the cell
/// array (check bits are not subject to disturbance).
class EccReadPath {
public:
    explicit EccReadPath(const ModuleGeometry& g)
    {
        if (g.cols_per_row % 64 != 0)
            throw ConfigError("ecc: cols_per_row must be a multiple of 64");
    }

    void protect(const DataImage& written)
    {
        const auto& g = written.geometry();
        checks_.clear();
        checks_.reserve(g.row_count() * written.words_per_row());
        for (BankIndex b = 0; b < g.banks; ++b)
            for (RowIndex r = 0; r < g.rows_per_bank; ++r) {
                const auto* w = written.row_words(b, r);
                for (std::size_t i = 0; i < written.words_per_row(); ++i)
                    checks_.push_back(check_byte(w[i]));
            }
    }

    /// Decodes every word of `image` in place. Uncorrectable words are left as read.
    ReadPathStats correct(DataImage& image) const
    {
        ReadPathStats stats;
        const auto& g = image.geometry();
        std::size_t k = 0;
        for (BankIndex b = 0; b < g.banks; ++b)
            for (RowIndex r = 0; r < g.rows_per_bank; ++r) {
                auto* w = image.row_words(b, r);
                for (std::size_t i = 0; i < image.words_per_row(); ++i, ++k) {
                    const auto res = decode(w[i], checks_[k]);
                    switch (res.status) {
                    case Status::Clean: ++stats.clean; break;
                    case Status::Corrected: ++stats.corrected; w[i] = res.word; break;
                    case Status::DetectedUncorrectable: ++stats.uncorrectable; break;
                    }
                }
            }
        return stats;
    }

private:
    std::vector<CheckByte> checks_;
};

} // namespace rowhammer::secded
