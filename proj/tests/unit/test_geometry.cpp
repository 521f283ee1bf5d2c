#include <vjump/geometry.hpp>

#include "oracles.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

using namespace vjump;

namespace
{

Dataset generic_points(std::size_t count, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> gap(0.5, 1.5);
    Dataset ds;
    double t = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        ds.times.push_back(t);
        ds.locations.emplace_back(normal(rng), normal(rng));
        t += gap(rng);
    }
    return ds;
}

/// Corner at t = 2.5: east along y = 0, then north along x = 2.5; observed at t = 0..5.
Dataset two_runs_fixture()
{
    Dataset ds;
    for (int k = 0; k <= 5; ++k) {
        const double t = k;
        ds.times.push_back(t);
        ds.locations.push_back(t <= 2.5 ? Vec2(t, 0.0) : Vec2(2.5, t - 2.5));
    }
    return ds;
}

double chi_square_p_value(const std::map<Tally, int>& counts, std::size_t categories, int draws)
{
    const double expected = static_cast<double>(draws) / static_cast<double>(categories);
    double stat = 0.0;
    for (const auto& [t, c] : counts)
        stat += (c - expected) * (c - expected) / expected;
    stat += expected * static_cast<double>(categories - counts.size());
    const boost::math::chi_squared_distribution<double> chi(static_cast<double>(categories - 1));
    return boost::math::cdf(boost::math::complement(chi, stat));
}

int total(const Tally& t)
{
    return std::accumulate(t.begin(), t.end(), 0);
}

} // namespace

TEST(CollinearityThreshold, UnitSpeedAndInterval)
{
    Dataset ds;
    ds.times = {0.0, 1.0, 2.0, 3.0};
    ds.locations = {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
    EXPECT_NEAR(collinearity_threshold(ds), 0.1, 1e-15);
}

TEST(CollinearityThreshold, HomogeneousInLocationScale)
{
    std::mt19937_64 rng(1);
    Dataset ds = generic_points(10, rng);
    const double base = collinearity_threshold(ds);
    for (auto& x : ds.locations)
        x *= 37.5;
    EXPECT_NEAR(collinearity_threshold(ds), 37.5 * base, 1e-12 * 37.5 * base);
}

TEST(CollinearRuns, ClassificationIsScaleInvariant)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(0.0, 0.01);
    Dataset ds;
    for (int k = 0; k < 30; ++k) {
        ds.times.push_back(k);
        const double bend = k < 15 ? 0.0 : (k - 15) * 0.7;
        ds.locations.emplace_back(k + normal(rng), bend + normal(rng));
    }
    const auto runs = detect_collinear_runs(ds, collinearity_threshold(ds));
    Dataset big = ds;
    for (auto& x : big.locations)
        x *= 4000.0;
    for (auto& t : big.times)
        t *= 120.0;
    EXPECT_EQ(detect_collinear_runs(big, collinearity_threshold(big)), runs);
}

TEST(CollinearRuns, ExactLineIsOneRun)
{
    Dataset ds;
    for (int k = 0; k < 8; ++k) {
        ds.times.push_back(0.5 * k + (k % 3) * 0.1);
        ds.locations.push_back(Vec2(1.0, 2.0) + ds.times.back() * Vec2(0.3, -0.7));
    }
    const auto runs = detect_collinear_runs(ds, collinearity_threshold(ds));
    ASSERT_EQ(runs.size(), 1u);
    EXPECT_EQ(runs[0], (CollinearRun{0, 7}));
}

TEST(CollinearRuns, NoisyPointsHaveNoRuns)
{
    std::mt19937_64 rng(3);
    int found = 0;
    for (int r = 0; r < 100; ++r) {
        const Dataset ds = generic_points(10, rng);
        found += static_cast<int>(detect_collinear_runs(ds, 1e-3 * collinearity_threshold(ds)).size());
    }
    EXPECT_EQ(found, 0);
}

TEST(CollinearRuns, SevenPointFixture)
{
    Dataset ds;
    ds.times = {0, 1, 2, 3, 4, 5, 6};
    ds.locations = {Vec2(0, 0), Vec2(3, 1), Vec2(1, 1), Vec2(2, 1.5), Vec2(3, 2), Vec2(4, 2.5), Vec2(0, 5)};
    const double threshold = collinearity_threshold(ds);
    // direct deviation of every interior point of 2..5 from the endpoint line
    for (int k = 3; k < 5; ++k) {
        const Vec2 predicted = ds.locations[2] + (ds.times[k] - 2.0) / 3.0 * (ds.locations[5] - ds.locations[2]);
        ASSERT_LT((ds.locations[k] - predicted).cwiseAbs().maxCoeff(), threshold);
    }
    const auto runs = detect_collinear_runs(ds, threshold);
    ASSERT_EQ(runs.size(), 1u);
    EXPECT_EQ(runs[0], (CollinearRun{2, 5}));
}

TEST(CollinearRuns, EarlierRunKeepsSharedPoint)
{
    const Dataset ds = two_runs_fixture();
    const auto runs = detect_collinear_runs(ds, 0.01);
    ASSERT_EQ(runs.size(), 2u);
    EXPECT_EQ(runs[0], (CollinearRun{0, 2}));
    EXPECT_EQ(runs[1], (CollinearRun{3, 5}));
}

TEST(MinimalTally, SingleInterval)
{
    std::mt19937_64 rng(4);
    EXPECT_EQ(sample_minimal_tally(1, rng), Tally{0});
}

TEST(MinimalTally, TwoIntervalsUniform)
{
    std::mt19937_64 rng(5);
    std::map<Tally, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i)
        ++counts[sample_minimal_tally(2, rng)];
    ASSERT_EQ(counts.size(), 2u);
    EXPECT_TRUE(counts.count({0, 1}) && counts.count({1, 0}));
    EXPECT_GT(chi_square_p_value(counts, 2, draws), 1e-3);
}

TEST(MinimalTally, ThreeIntervalsEnumeration)
{
    std::mt19937_64 rng(6);
    std::map<Tally, int> counts;
    for (int i = 0; i < 10000; ++i)
        ++counts[sample_minimal_tally(3, rng)];
    const std::set<Tally> expected{{0, 1, 1}, {1, 0, 1}, {1, 1, 0}, {0, 2, 0}};
    std::set<Tally> seen;
    for (const auto& [t, c] : counts) {
        seen.insert(t);
        EXPECT_EQ(total(t), 2);
    }
    EXPECT_EQ(seen, expected);
}

TEST(MinimalTally, PatternMatchesGeometricFeasibility)
{
    std::mt19937_64 rng(7);
    for (std::size_t n = 1; n <= 5; ++n) {
        const Dataset ds = generic_points(n + 1, rng);
        for (const auto& tally : oracle::all_tallies(n, static_cast<int>(n))) {
            const int turns = total(tally);
            if (turns > static_cast<int>(n) - 1)
                continue;
            const bool feasible = oracle::tally_feasible(ds.times, tally, rng);
            if (turns < static_cast<int>(n) - 1)
                EXPECT_FALSE(feasible);
            else
                EXPECT_EQ(feasible, is_minimal_pattern(tally)) << "n=" << n;
        }
    }
}

TEST(MinimalTally, UniformOverAllMinimalTallies)
{
    std::mt19937_64 rng(8);
    for (std::size_t n = 2; n <= 6; ++n) {
        std::size_t categories = 0;
        for (const auto& t : oracle::all_tallies(n, 2))
            if (total(t) == static_cast<int>(n) - 1 && is_minimal_pattern(t))
                ++categories;
        std::map<Tally, int> counts;
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) {
            const Tally t = sample_minimal_tally(n, rng);
            EXPECT_TRUE(is_minimal_pattern(t));
            EXPECT_EQ(total(t), static_cast<int>(n) - 1);
            ++counts[t];
        }
        EXPECT_EQ(counts.size(), categories) << "n=" << n;
        EXPECT_EQ(categories, std::size_t{1} << (n - 1));
        EXPECT_GT(chi_square_p_value(counts, categories, draws), 1e-3) << "n=" << n;
    }
}

TEST(MinimalTally, CountsWithoutCollinearity)
{
    EXPECT_EQ(count_minimal_turns(1), 0);
    EXPECT_EQ(count_minimal_turns(4), 3);
}

TEST(MinimalTally, BridgedRunsNeedOneTurn)
{
    const Dataset ds = two_runs_fixture();
    const TallyLayout layout = tally_layout(ds, 0.01, 1e-6);
    ASSERT_EQ(layout.roles[2], IntervalRole::Bridge);
    EXPECT_NEAR(layout.bridge_times[2], 2.5, 1e-12);
    EXPECT_EQ(count_minimal_turns(layout), 1);
    std::mt19937_64 rng(9);
    EXPECT_EQ(sample_minimal_tally(layout, rng), (Tally{0, 0, 1, 0, 0}));
}

TEST(MinimalTally, CollinearRunCountsAsOneInterval)
{
    std::mt19937_64 rng(10);
    Dataset ds = generic_points(8, rng);
    // observations 2..5 placed on one constant-velocity line
    for (std::size_t k = 3; k <= 5; ++k)
        ds.locations[k] = ds.locations[2] + (ds.times[k] - ds.times[2]) / (ds.times[5] - ds.times[2]) *
                                                (Vec2(4.0, 4.0) - ds.locations[2]);
    const TallyLayout layout = tally_layout(ds, 1e-6, 1e-6);
    // 7 intervals, 3 of them merged into one element: 5 elements, 4 turns
    EXPECT_EQ(count_minimal_turns(layout), 4);
    for (int i = 0; i < 1000; ++i) {
        const Tally t = sample_minimal_tally(layout, rng);
        EXPECT_EQ(total(t), 4);
        EXPECT_TRUE(t[2] == 0 && t[3] == 0 && t[4] == 0);
        const Trajectory tr = initial_trajectory(ds, layout, t, rng);
        for (std::size_t k = 0; k < ds.times.size(); ++k)
            EXPECT_LT((interpolate(tr, ds.times[k]) - ds.locations[k]).norm(), 1e-9);
    }
}

TEST(MinimalTally, NeverInfeasible)
{
    std::mt19937_64 rng(11);
    for (int r = 0; r < 200; ++r) {
        const std::size_t n = 1 + r % 5;
        const Dataset ds = generic_points(n + 1, rng);
        const Tally t = sample_minimal_tally(n, rng);
        EXPECT_TRUE(oracle::tally_feasible(ds.times, t, rng));
    }
}

TEST(InitialTrajectory, HitsEveryObservation)
{
    std::mt19937_64 rng(12);
    for (int r = 0; r < 200; ++r) {
        const Dataset ds = generic_points(2 + r % 12, rng);
        const TallyLayout layout = TallyLayout::generic(ds.num_intervals());
        const Tally t = sample_minimal_tally(layout, rng);
        const Trajectory tr = initial_trajectory(ds, layout, t, rng);
        EXPECT_NO_THROW(tr.validate());
        EXPECT_EQ(tr.num_turns(), static_cast<std::size_t>(total(t)));
        for (std::size_t k = 0; k < ds.times.size(); ++k)
            EXPECT_LT((interpolate(tr, ds.times[k]) - ds.locations[k]).norm(), 1e-9);
    }
}

TEST(InitialTrajectory, CollinearDataHasNoTurns)
{
    Dataset ds;
    for (int k = 0; k < 6; ++k) {
        ds.times.push_back(k);
        ds.locations.push_back(Vec2(0.5 * k, -0.2 * k));
    }
    std::mt19937_64 rng(13);
    const TallyLayout layout = tally_layout(ds, collinearity_threshold(ds), 1e-6);
    const Tally t = sample_minimal_tally(layout, rng);
    const Trajectory tr = initial_trajectory(ds, layout, t, rng);
    EXPECT_EQ(tr.num_turns(), 0u);
    EXPECT_LT((tr.velocities[0] - Vec2(0.5, -0.2)).norm(), 1e-12);
}

TEST(InitialTrajectory, BridgeUsesJoinTime)
{
    const Dataset ds = two_runs_fixture();
    const TallyLayout layout = tally_layout(ds, 0.01, 1e-6);
    std::mt19937_64 rng(14);
    const Trajectory tr = initial_trajectory(ds, layout, sample_minimal_tally(layout, rng), rng);
    ASSERT_EQ(tr.num_turns(), 1u);
    EXPECT_NEAR(tr.turn_times[0], 2.5, 1e-12);
    for (std::size_t k = 0; k < ds.times.size(); ++k)
        EXPECT_LT((interpolate(tr, ds.times[k]) - ds.locations[k]).norm(), 1e-9);
}

TEST(InitialTrajectory, TurnsAreStratifiedWithinInterval)
{
    std::mt19937_64 rng(15);
    for (int r = 0; r < 100; ++r) {
        const Dataset ds = generic_points(3, rng);
        const TallyLayout layout = TallyLayout::generic(2);
        const Trajectory tr = initial_trajectory(ds, layout, Tally{0, 3}, rng);
        ASSERT_EQ(tr.num_turns(), 3u);
        const double a = ds.times[1];
        const double w = (ds.times[2] - a) / 3.0;
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_GT(tr.turn_times[i], a + w * static_cast<double>(i));
            EXPECT_LT(tr.turn_times[i], a + w * static_cast<double>(i + 1));
        }
    }
}

TEST(InitialTrajectory, PeakSpeedNoWorseThanSingleDraw)
{
    auto peak = [](const Trajectory& tr) {
        double m = 0.0;
        for (const Vec2& v : tr.velocities)
            m = std::max(m, v.norm());
        return m;
    };
    std::mt19937_64 data_rng(16);
    int strictly_better = 0;
    for (int r = 0; r < 50; ++r) {
        const Dataset ds = generic_points(30, data_rng);
        const TallyLayout layout = TallyLayout::generic(ds.num_intervals());
        std::mt19937_64 tally_rng(100 + r);
        const Tally t = sample_minimal_tally(layout, tally_rng);
        std::mt19937_64 one(200 + r);
        std::mt19937_64 many(200 + r);
        const double single = peak(initial_trajectory(ds, layout, t, one, 100, 1));
        const double best = peak(initial_trajectory(ds, layout, t, many, 100, 16));
        EXPECT_LE(best, single);
        strictly_better += best < single;
    }
    EXPECT_GT(strictly_better, 25);
}

TEST(JoinTime, SameLineReturnsMidpoint)
{
    const Vec2 v(0.4, 0.3);
    const auto t = join_time({0.0, Vec2::Zero()}, v, {3.0, 3.0 * v}, v, {1.0, 2.0}, 1e-9);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ(*t, 1.5);
}

TEST(JoinTime, LShapedCorner)
{
    const Vec2 v_pre(1.0, 0.0);
    const Vec2 v_post(0.0, 2.0);
    const Vec2 corner(0.4, 0.0);
    const Anchor pre{0.0, Vec2::Zero()};
    const Anchor post{1.0, corner + 0.6 * v_post};
    const auto t = join_time(pre, v_pre, post, v_post, {0.0, 1.0}, 1e-9);
    ASSERT_TRUE(t);
    EXPECT_NEAR(*t, 0.4, 1e-12);
}

TEST(JoinTime, SkewLinesDoNotJoin)
{
    const Anchor pre{0.0, Vec2::Zero()};
    const Anchor post{1.0, Vec2(0.4, 1.0)};
    // x meets at t = 0.4 but y at t = 0.8
    EXPECT_FALSE(join_time(pre, Vec2(1.0, 0.0), post, Vec2(0.0, -1.0), {0.0, 1.0}, 1e-6));
    EXPECT_FALSE(join_time(pre, Vec2(1.0, 0.0), {1.0, Vec2(1.0, 0.5)}, Vec2(1.0, 0.0), {0.0, 1.0}, 1e-6));
}

TEST(JoinTime, JoinOutsideIntervalRejected)
{
    const Anchor pre{0.0, Vec2::Zero()};
    const Anchor post{1.0, Vec2(0.4, 1.2)};
    EXPECT_FALSE(join_time(pre, Vec2(1.0, 0.0), post, Vec2(0.0, 2.0), {0.5, 1.0}, 1e-9));
}

TEST(JoinTime, Equivariance)
{
    std::mt19937_64 rng(15);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < 100; ++r) {
        const Vec2 v_pre(normal(rng), normal(rng));
        const Vec2 v_post(normal(rng), normal(rng));
        const double corner_t = 0.2 + 0.6 * std::abs(std::tanh(normal(rng)));
        const Vec2 corner(normal(rng), normal(rng));
        const Anchor pre{0.0, corner - corner_t * v_pre};
        const Anchor post{1.0, corner + (1.0 - corner_t) * v_post};
        const auto base = join_time(pre, v_pre, post, v_post, {0.0, 1.0}, 1e-8);
        ASSERT_TRUE(base);
        EXPECT_NEAR(*base, corner_t, 1e-9);
        const Vec2 dx(normal(rng), normal(rng));
        const double dt = 10.0 * normal(rng);
        const auto moved =
            join_time({pre.t + dt, pre.x + dx}, v_pre, {post.t + dt, post.x + dx}, v_post, {dt, 1.0 + dt}, 1e-8);
        ASSERT_TRUE(moved);
        EXPECT_NEAR(*moved, *base + dt, 1e-9 * (1.0 + std::abs(dt)));
    }
}
