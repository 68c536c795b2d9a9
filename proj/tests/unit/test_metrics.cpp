#include "sglmb/metrics.hpp"
#include "sglmb/runner.hpp"
#include "sglmb/testing/oracle.hpp"

#include <gtest/gtest.h>

using namespace sglmb;

namespace {

Vector p2(double x, double y) {
    Vector v(2);
    v << x, y;
    return v;
}

std::vector<Vector> random_set(Rng& rng, int max_n) {
    std::vector<Vector> s(rng() % static_cast<unsigned>(max_n + 1));
    for (auto& v : s) v = p2(300.0 * uniform01(rng), 300.0 * uniform01(rng));
    return s;
}

/// Perfect estimates: every alive truth object, under its own label.
EstimateHistory perfect_history(const Truth& truth) {
    EstimateHistory h;
    for (int k = 1; k <= truth.horizon; ++k) {
        std::vector<TrackEstimate> est;
        for (const auto* t : truth.alive(k)) est.push_back({t->label, t->state(k), Matrix::Identity(4, 4), 1.0});
        h.push_back(std::move(est));
    }
    return h;
}

}  // namespace

TEST(Ospa, BasicValues) {
    const OspaParams p{100.0, 1.0};
    EXPECT_EQ(ospa(std::vector<Vector>{}, std::vector<Vector>{}, p).total, 0.0);
    const std::vector<Vector> one{p2(0, 0)};
    EXPECT_DOUBLE_EQ(ospa(one, std::vector<Vector>{}, p).total, 100.0);
    const std::vector<Vector> two{p2(3, 4), p2(500, 500)};
    const auto r = ospa(one, two, p);
    EXPECT_NEAR(r.total, (5.0 + 100.0) / 2.0, 1e-12);
    EXPECT_NEAR(r.localization, 2.5, 1e-12);
    EXPECT_NEAR(r.cardinality, 50.0, 1e-12);
    EXPECT_THROW(ospa(one, two, {0.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(ospa(one, two, {1.0, 0.5}), std::invalid_argument);
}

TEST(OspaProperty, MetricAxioms) {
    Rng rng(31);
    const OspaParams p{100.0, 1.0};
    for (int i = 0; i < 1000; ++i) {
        const auto X = random_set(rng, 4), Y = random_set(rng, 4), W = random_set(rng, 4);
        const double xy = ospa(X, Y, p).total, yx = ospa(Y, X, p).total;
        ASSERT_NEAR(xy, yx, 1e-9);
        ASSERT_NEAR(ospa(X, X, p).total, 0.0, 1e-9);
        ASSERT_GE(xy, 0.0);
        ASSERT_LE(xy, 100.0 + 1e-9);
        ASSERT_LE(xy, ospa(X, W, p).total + ospa(W, Y, p).total + 1e-9);
        ASSERT_NEAR(xy, oracle::ospa_bruteforce(X, Y, 100.0, 1.0), 1e-9);
    }
}

TEST(OspaProperty, NonDecreasingInCutoffAndEmptySetBound) {
    Rng rng(32);
    for (int i = 0; i < 300; ++i) {
        const auto X = random_set(rng, 4), Y = random_set(rng, 4);
        double prev = 0.0;
        for (double c : {5.0, 20.0, 50.0, 100.0, 400.0}) {
            const double d = ospa(X, Y, {c, 1.0}).total;
            ASSERT_GE(d, prev - 1e-12);
            prev = d;
        }
        if (!X.empty()) ASSERT_DOUBLE_EQ(ospa(X, std::vector<Vector>{}, {100.0, 2.0}).total, 100.0);
    }
}

TEST(OspaProperty, OrderTwoMatchesBruteForce) {
    Rng rng(33);
    for (int i = 0; i < 200; ++i) {
        const auto X = random_set(rng, 4), Y = random_set(rng, 4);
        ASSERT_NEAR(ospa(X, Y, {80.0, 2.0}).total, oracle::ospa_bruteforce(X, Y, 80.0, 2.0), 1e-9);
    }
}

TEST(CardinalityStats, SampleMoments) {
    const auto s = cardinality_stats({{1, 2}, {3, 2}, {5, 2}});
    EXPECT_DOUBLE_EQ(s.mean[0], 3.0);
    EXPECT_DOUBLE_EQ(s.stddev[0], 2.0);
    EXPECT_DOUBLE_EQ(s.stddev[1], 0.0);
    EXPECT_EQ(cardinality_stats({{4.0}}).stddev[0], 0.0);
    EXPECT_THROW(cardinality_stats({{1, 2}, {1}}), std::invalid_argument);
}

TEST(Ancestry, PerfectRunRecoversEventTimes) {
    Scenario s;
    const auto truth = generate_truth(s.truth, 100);
    const auto rec = ancestry_analysis(0, perfect_history(truth), truth, ancestry_config(s));
    ASSERT_EQ(rec.size(), 3u);
    for (int r = 0; r < 3; ++r) {
        EXPECT_EQ(rec[static_cast<std::size_t>(r)].region, r + 1);
        EXPECT_EQ(*rec[static_cast<std::size_t>(r)].gen1_spawn_time, 10 + r);
        EXPECT_EQ(*rec[static_cast<std::size_t>(r)].gen2_spawn_time, 56 + 2 * r);
        EXPECT_EQ(*rec[static_cast<std::size_t>(r)].birth_time, 1 + r);
        EXPECT_EQ(*rec[static_cast<std::size_t>(r)].death_time, 15 + r);
        EXPECT_TRUE(rec[static_cast<std::size_t>(r)].reproduced);
        EXPECT_FALSE(rec[static_cast<std::size_t>(r)].no_spawn);
        EXPECT_FALSE(rec[static_cast<std::size_t>(r)].origin_error);
        EXPECT_FALSE(rec[static_cast<std::size_t>(r)].label_switch);
    }
}

TEST(Ancestry, MissingGenerationTwoFlagsNoSpawn) {
    Scenario s;
    const auto truth = generate_truth(s.truth, 100);
    auto h = perfect_history(truth);
    const Label gone = Label::parse("2,2,11,1,58,1");
    for (auto& est : h) std::erase_if(est, [&](const TrackEstimate& e) { return e.label == gone; });
    const auto rec = ancestry_analysis(0, h, truth, ancestry_config(s));
    EXPECT_TRUE(rec[1].no_spawn);
    EXPECT_FALSE(rec[1].reproduced);
    EXPECT_TRUE(rec[0].reproduced);
}

TEST(Ancestry, RootTracedToWrongRegionFlagsOriginError) {
    Scenario s;
    const auto truth = generate_truth(s.truth, 100);
    auto h = perfect_history(truth);
    // Region 1's lineage appears to start at region 2's birth mean.
    for (auto& est : h) {
        for (auto& e : est) {
            if (e.label == Label::parse("1,1")) {
                e.mean << 433.0, -250.0, 0.0, 0.0;
            }
        }
    }
    const auto rec = ancestry_analysis(0, h, truth, ancestry_config(s));
    EXPECT_TRUE(rec[0].origin_error);
    EXPECT_FALSE(rec[0].reproduced);
}

TEST(Ancestry, EmptyHistoryGivesEmptyReport) {
    Scenario s;
    const auto truth = generate_truth(s.truth, 100);
    EXPECT_TRUE(ancestry_analysis(0, {}, truth, ancestry_config(s)).empty());
}
