#include "rowhammer/rng.hpp"
#include "rowhammer/secded.hpp"

#include <gtest/gtest.h>

#include <bit>

using namespace rowhammer;
using namespace rowhammer::secded;

namespace {

/// XOR of the positions of all set bits: zero for a valid codeword.
unsigned position_xor(const Codeword& cw)
{
    unsigned s = 0;
    for (int i = 1; i < kCodewordBits; ++i)
        if (cw.bit(i))
            s ^= static_cast<unsigned>(i);
    return s;
}

int weight(const Codeword& cw) { return std::popcount(cw.lo) + std::popcount(static_cast<unsigned>(cw.hi)); }

std::vector<std::uint64_t> sample_words()
{
    std::vector<std::uint64_t> words{0, ~std::uint64_t{0}, 0x5555555555555555ULL, 0x8000000000000001ULL};
    Rng rng(72);
    for (int i = 0; i < 12; ++i)
        words.push_back(rng.next_u64());
    return words;
}

} // namespace

TEST(Secded, LayoutPutsDataOutsidePowersOfTwo)
{
    EXPECT_EQ(secded::detail::kTables.data_position[0], 3);
    EXPECT_EQ(secded::detail::kTables.data_position[1], 5);
    EXPECT_EQ(secded::detail::kTables.data_position[4], 9);
    EXPECT_EQ(secded::detail::kTables.data_position[63], 71);
    for (auto pos : secded::detail::kTables.data_position)
        EXPECT_FALSE(std::has_single_bit(static_cast<unsigned>(pos)));
}

TEST(Secded, CodewordsHaveZeroSyndromeAndEvenWeight)
{
    for (auto w : sample_words()) {
        const auto cw = encode(w);
        EXPECT_EQ(position_xor(cw), 0U);
        EXPECT_EQ(weight(cw) % 2, 0);
        EXPECT_EQ(extract_data(cw), w);
        const auto r = decode(cw);
        EXPECT_EQ(r.status, Status::Clean);
        EXPECT_EQ(r.word, w);
    }
}

TEST(Secded, EverySingleFlipCorrected)
{
    for (auto w : sample_words()) {
        for (int i = 0; i < kCodewordBits; ++i) {
            auto cw = encode(w);
            cw.flip(i);
            const auto r = decode(cw);
            ASSERT_EQ(r.status, Status::Corrected) << "bit " << i;
            ASSERT_EQ(r.word, w) << "bit " << i;
            ASSERT_EQ(r.corrected_bit, i);
        }
    }
}

TEST(Secded, EveryDoubleFlipDetected)
{
    for (auto w : sample_words()) {
        int pairs = 0;
        for (int i = 0; i < kCodewordBits; ++i)
            for (int j = i + 1; j < kCodewordBits; ++j) {
                auto cw = encode(w);
                cw.flip(i);
                cw.flip(j);
                ASSERT_EQ(decode(cw).status, Status::DetectedUncorrectable) << i << "," << j;
                ++pairs;
            }
        EXPECT_EQ(pairs, 72 * 71 / 2);
    }
}

TEST(Secded, FourFlipsWithCancellingPositionsPassSilently)
{
    // 3 ^ 5 ^ 9 ^ 15 == 0, so the syndrome vanishes and parity is even.
    const std::uint64_t w = 0x0123456789ABCDEFULL;
    auto cw = encode(w);
    for (int i : {3, 5, 9, 15})
        cw.flip(i);
    const auto r = decode(cw);
    EXPECT_EQ(r.status, Status::Clean);
    EXPECT_NE(r.word, w);
}

TEST(Secded, ThreeFlipsMiscorrect)
{
    const std::uint64_t w = 42;
    auto cw = encode(w);
    for (int i : {3, 5, 9})
        cw.flip(i);
    const auto r = decode(cw);
    EXPECT_EQ(r.status, Status::Corrected);
    EXPECT_EQ(r.corrected_bit, 15);
    EXPECT_NE(r.word, w);
}

TEST(Secded, DataWordAndCheckBytePathMatchesCodewordPath)
{
    Rng rng(9);
    for (int k = 0; k < 200; ++k) {
        const auto w = rng.next_u64();
        const auto cb = check_byte(w);
        EXPECT_EQ(assemble(w, cb), encode(w));
        const int bit = static_cast<int>(rng.uniform_int(0, 63));
        const auto r = decode(w ^ (std::uint64_t{1} << bit), cb);
        EXPECT_EQ(r.status, Status::Corrected);
        EXPECT_EQ(r.word, w);
    }
}

TEST(CacheLine, OneFlipPerWordRecovers)
{
    std::array<std::uint64_t, 8> data{};
    Rng rng(64);
    for (auto& w : data)
        w = rng.next_u64();
    auto line = CacheLine::encode(data);
    for (int word = 0; word < 8; ++word)
        line.flip_data_bit(word * 64 + (word * 7) % 64);
    EXPECT_TRUE(line.recovers(data));
}

TEST(CacheLine, TwoFlipsInOneWordDoNot)
{
    std::array<std::uint64_t, 8> data{};
    auto line = CacheLine::encode(data);
    line.flip_data_bit(130);
    line.flip_data_bit(131);
    EXPECT_FALSE(line.recovers(data));
    const auto r = line.decode();
    EXPECT_EQ(r[2].status, Status::DetectedUncorrectable);
    for (int i : {0, 1, 3, 4, 5, 6, 7})
        EXPECT_EQ(r[static_cast<std::size_t>(i)].status, Status::Clean);
}
