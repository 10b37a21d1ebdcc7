#include "rowhammer/workloads.hpp"

#include "oracle.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace rowhammer;
using namespace std::chrono_literals;

namespace {

RunParams small_params()
{
    RunParams p;
    p.geometry = {1, 32, 64};
    p.timing = {55ns, 64us};
    p.fault.victim_density = 0.05;
    p.fault.threshold_min = 200;
    p.fault.threshold_max = 1500;
    p.fault.dual_aggressor_fraction = 0.1;
    p.pattern = DataPattern::RowStripe;
    return p;
}

std::vector<oracle::Victim> oracle_victims(const FaultMap& map)
{
    std::vector<oracle::Victim> out;
    for (const auto& v : map.victims())
        out.push_back({v.location.bank, v.location.row, v.location.col, (v.aggressors & kBelow) != 0,
                       (v.aggressors & kAbove) != 0, v.threshold});
    return out;
}

std::vector<bool> anti_rows(const RunParams& p)
{
    std::vector<bool> anti;
    for (RowIndex r = 0; r < p.geometry.rows_per_bank; ++r)
        anti.push_back(p.orientation.at(r) == CellOrientation::Anti);
    return anti;
}

} // namespace

TEST(GenHammer, CountsAndAlternation)
{
    HammerSpec s;
    s.x = 3;
    s.y = 7;
    s.act_interval = 100ns;
    s.duration = 1050ns;
    const auto reqs = gen_hammer(s);
    ASSERT_EQ(reqs.size(), 10U);
    for (std::size_t k = 0; k < reqs.size(); ++k) {
        EXPECT_EQ(reqs[k].row, k % 2 ? 7U : 3U);
        EXPECT_EQ(reqs[k].arrival, Nanoseconds{static_cast<std::int64_t>(k) * 100});
    }
    s.duration = 0ns;
    EXPECT_TRUE(gen_hammer(s).empty());
    s.x = s.y;
    EXPECT_THROW(s.validate({}), ConfigError);
    s.mode = HammerSpec::Mode::SingleRow;
    s.act_interval = 54ns;
    EXPECT_THROW(s.validate({}), ConfigError);
}

TEST(GenHammer, SingleRowOpensOnce)
{
    HammerSpec s;
    s.mode = HammerSpec::Mode::SingleRow;
    s.x = 4;
    s.duration = 64us;
    const auto trace = translate(gen_hammer(s), {1, 16, 64}, {55ns, 64ms});
    EXPECT_EQ(std::count_if(trace.begin(), trace.end(), [](const Command& c) { return c.kind == CommandKind::ACT; }), 1);
}

TEST(Characterize, FaultFreeMapNoFlips)
{
    const auto p = small_params();
    const auto r = characterize_row_sweep(p, FaultMap(p.geometry));
    EXPECT_EQ(r.total(), 0U);
    EXPECT_EQ(r.demand_activations, 32U * (64'000 / 55));
}

TEST(Characterize, AgreesWithReferenceRecount)
{
    auto p = small_params();
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        for (auto pattern : {DataPattern::RowStripe, DataPattern::Solid1}) {
            p.pattern = pattern;
            const auto map = sample_fault_map(p.geometry, p.fault, seed);
            ASSERT_GE(map.size(), 50U);
            std::vector<Command> trace;
            p.observer = [&](const Command& c) { trace.push_back(c); };
            const auto report = characterize_row_sweep(p, map);

            // The module is rewritten before each row's test; the first ACT
            // of a new row marks the rewrite.
            oracle::Recount ref(1, p.geometry.rows_per_bank, p.geometry.cols_per_row, anti_rows(p), oracle_victims(map),
                                p.fault.pattern_coupling);
            std::optional<RowIndex> current;
            for (const auto& c : trace) {
                if (c.kind == CommandKind::ACT && c.row != current) {
                    ref.init(pattern);
                    current = c.row;
                }
                ref.apply(c);
            }
            ASSERT_EQ(report.flips.size(), ref.log().size()) << "seed " << seed;
            std::size_t i = 0;
            for (const auto& f : ref.log()) {
                const auto it = std::find_if(report.flips.begin(), report.flips.end(), [&](const FlipRecord& r) {
                    return r.cell == f.cell && r.direction == f.direction && r.time == f.time;
                });
                EXPECT_NE(it, report.flips.end()) << "flip " << i;
                ++i;
            }
            EXPECT_GT(report.total(), 0U);
        }
    }
}

TEST(Characterize, SlowHammerBelowThresholdsNoFlips)
{
    auto p = small_params();
    p.act_interval = 500ns; // 128 ACTs per window < threshold_min 200
    const auto map = sample_fault_map(p.geometry, p.fault, 4);
    EXPECT_EQ(characterize_row_sweep(p, map).total(), 0U);
}

TEST(Characterize, RepeatableAcrossIterationsWithoutNoise)
{
    auto p = small_params();
    const auto map = sample_fault_map(p.geometry, p.fault, 5);
    const auto first = characterize_row_sweep(p, map);
    for (std::uint64_t it = 1; it < 10; ++it) {
        p.iteration = it;
        EXPECT_EQ(characterize_row_sweep(p, map).cells(), first.cells());
    }
}

TEST(Characterize, NoiseDropsSomeVictimsPerIteration)
{
    auto p = small_params();
    p.fault.repeat_noise = 0.5;
    const auto map = sample_fault_map(p.geometry, p.fault, 5);
    std::set<std::set<CellAddress>> distinct;
    for (std::uint64_t it = 0; it < 5; ++it) {
        p.iteration = it;
        distinct.insert(characterize_row_sweep(p, map).cells());
    }
    EXPECT_GT(distinct.size(), 1U);
}

TEST(RunHammer, PairOnChargedVictimFlips)
{
    auto p = small_params();
    p.pattern = DataPattern::Solid1;
    p.fault.pattern_coupling = false;
    FaultMap map(p.geometry);
    VictimRecord v;
    v.location = {0, 5, 9};
    v.aggressors = kBelow;
    v.threshold = 300;
    map.add(v);
    HammerSpec s;
    s.x = 4;
    s.y = 6;
    s.duration = 64us;
    const auto r = run_hammer(p, map, std::span<const HammerSpec>(&s, 1));
    ASSERT_EQ(r.total(), 1U);
    EXPECT_EQ(r.flips[0].cell, (CellAddress{0, 5, 9}));
    EXPECT_EQ(r.flips[0].hammered_row, 4U);
    EXPECT_EQ(r.flips_1to0, 1U);
    EXPECT_EQ(r.demand_activations, 64'000U / 55);
}

TEST(RunRequests, WritesAreNotFlips)
{
    const auto p = small_params();
    std::vector<Request> reqs{{Request::Kind::Write, 0, 3, 1, true}, {Request::Kind::Write, 0, 4, 2, false}};
    reqs[1].arrival = 100ns;
    EXPECT_EQ(run_requests(p, FaultMap(p.geometry), reqs).total(), 0U);
}

TEST(Sweep, PatternOrderingAndDeterminism)
{
    auto p = small_params();
    const auto map = sample_fault_map(p.geometry, p.fault, 6);
    const std::vector<std::string> points{"Solid0", "Solid1", "RowStripe", "RowStripeInv"};
    const auto one = sweep_experiment(SweepAxis::DataPattern, points, p, map, Scale{1.0}, 1);
    const auto many = sweep_experiment(SweepAxis::DataPattern, points, p, map, Scale{1.0}, 4);
    EXPECT_EQ(one, many);
    ASSERT_EQ(one.size(), 4U);
    for (std::size_t i = 0; i < points.size(); ++i)
        EXPECT_EQ(one[i].axis_value, points[i]);
    for (const auto& r : one)
        EXPECT_EQ(r.flips_total, r.flips_1to0 + r.flips_0to1);
}

TEST(Sweep, ActivationIntervalMonotone)
{
    auto p = small_params();
    const auto map = sample_fault_map(p.geometry, p.fault, 7);
    const std::vector<std::string> points{"55", "100", "200", "330"};
    const auto rows = sweep_experiment(SweepAxis::ActivationInterval, points, p, map, Scale{1.0}, 2);
    for (std::size_t i = 1; i < rows.size(); ++i)
        EXPECT_LE(rows[i].flips_total, rows[i - 1].flips_total);
    EXPECT_GT(rows[0].flips_total, 0U);
    EXPECT_EQ(rows[3].flips_total, 0U); // 193 ACTs per window < threshold_min
}

TEST(Sweep, BadPointsRejected)
{
    const auto p = small_params();
    const FaultMap map(p.geometry);
    const std::vector<std::string> bad{"abc"};
    EXPECT_THROW(sweep_experiment(SweepAxis::RefreshInterval, bad, p, map, Scale{1.0}), ConfigError);
    const std::vector<std::string> fast{"40"};
    EXPECT_THROW(sweep_experiment(SweepAxis::ActivationInterval, fast, p, map, Scale{1.0}), ConfigError);
    EXPECT_THROW(sweep_experiment(SweepAxis::MitigationParam, std::vector<std::string>{"0.1"}, p, map, Scale{1.0}), ConfigError);
}

TEST(Sweep, EmptyPointListGivesHeaderOnly)
{
    const auto p = small_params();
    const auto rows = sweep_experiment(SweepAxis::RefreshInterval, {}, p, FaultMap(p.geometry), Scale{1.0});
    std::ostringstream os;
    write_sweep_csv(os, rows);
    EXPECT_EQ(os.str(), "axis_value,flips_total,flips_1to0,flips_0to1,rows_affected\n");
}

TEST(Scale, NominalToSimulated)
{
    const Scale desk{0.01};
    EXPECT_EQ(desk.window_ms(64), 640us);
    EXPECT_EQ(desk.count(139'000), 1390U);
    EXPECT_EQ(desk.count(10), 1U);
    EXPECT_EQ(Scale{1.0}.window_ms(8), 8ms);
}

TEST(MitigatedRuns, ParaAndCounterSuppressFlips)
{
    auto p = small_params();
    const auto map = sample_fault_map(p.geometry, p.fault, 8);
    const auto base = characterize_row_sweep(p, map).total();
    ASSERT_GT(base, 0U);
    p.mitigation.kind = MitigationSpec::Kind::Para;
    p.mitigation.p = 0.2;
    const auto para = characterize_row_sweep(p, map);
    EXPECT_EQ(para.total(), 0U);
    EXPECT_GT(para.mitigation_activations, 0U);
    p.mitigation.kind = MitigationSpec::Kind::Counter;
    p.mitigation.counter_threshold = 40; // 2 (2 * 40 - 1) < 200
    EXPECT_EQ(characterize_row_sweep(p, map).total(), 0U);
    p.mitigation.kind = MitigationSpec::Kind::Refresh;
    p.mitigation.refresh_t_refw = 8us; // 145 ACTs per window
    EXPECT_EQ(characterize_row_sweep(p, map).total(), 0U);
}
