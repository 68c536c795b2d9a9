#include "sglmb/runner.hpp"
#include "sglmb/testing/selftest.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace sglmb;

namespace {

GlmbDensity healthy_density() {
    Rng rng(51);
    const auto in = sglmb::testing::random_instance(rng);
    return joint_predict_update(in.prior, in.Z, in.models, sglmb::testing::exhaustive_params(), 0);
}

Scenario short_scenario() {
    auto s = load_scenario(std::string(R"({"filter": {"h_max": 100, "cap": 50}, "montecarlo": {"horizon": 12}})"));
    return s;
}

std::string csv_bundle(const std::vector<TrialResult>& r, const Truth& truth) {
    std::ostringstream os;
    write_cardinality_csv(os, r, truth);
    write_ospa_csv(os, r);
    write_ancestry_csv(os, r);
    for (const auto& t : r) write_trial_csv(os, t);
    return os.str();
}

}  // namespace

TEST(Invariants, HealthyDensityPasses) {
    const auto d = healthy_density();
    EXPECT_TRUE(check_invariants(d).empty());
}

TEST(Invariants, DetectCorruptions) {
    const auto base = healthy_density();
    ASSERT_FALSE(base.components.empty());

    auto w = base;
    w.components[0].log_weight += 0.1;
    EXPECT_FALSE(check_invariants(w).empty());

    auto cov = base;
    for (auto& c : cov.components) {
        if (c.labels.empty()) continue;
        auto g = *c.densities[0];
        g.components[0].cov(0, 0) = -1.0;
        c.densities[0] = std::make_shared<const GaussianMixture>(g);
        break;
    }
    EXPECT_FALSE(check_invariants(cov).empty());

    auto dup = base;
    for (auto& c : dup.components) {
        if (c.labels.empty()) continue;
        c.labels.push_back(c.labels.back());
        c.densities.push_back(c.densities.back());
        break;
    }
    EXPECT_FALSE(check_invariants(dup).empty());
}

TEST(Runner, FilterSeedsDifferPerScan) {
    EXPECT_NE(filter_seed(1, 0, 1), filter_seed(1, 0, 2));
    EXPECT_NE(filter_seed(1, 0, 1), filter_seed(1, 1, 1));
    EXPECT_EQ(filter_seed(1, 3, 4), filter_seed(1, 3, 4));
}

TEST(Runner, OutputsIndependentOfThreadCount) {
    const auto s = short_scenario();
    const auto truth = generate_truth(s.truth, s.montecarlo.horizon);
    const auto a = run_monte_carlo(s, truth, 3, 9, 1);
    const auto b = run_monte_carlo(s, truth, 3, 9, 3);
    EXPECT_EQ(csv_bundle(a, truth), csv_bundle(b, truth));
    for (const auto& r : a) {
        EXPECT_TRUE(r.violations.empty());
        EXPECT_EQ(r.cardinality.size(), 12u);
    }
}

TEST(Runner, CsvHeaders) {
    const auto s = short_scenario();
    const auto truth = generate_truth(s.truth, s.montecarlo.horizon);
    const auto r = run_monte_carlo(s, truth, 1, 2, 1);
    std::ostringstream c, o, a;
    write_cardinality_csv(c, r, truth);
    write_ospa_csv(o, r);
    write_ancestry_csv(a, r);
    EXPECT_EQ(c.str().substr(0, c.str().find('\n')), "scan,truth,mean,std");
    EXPECT_EQ(o.str().substr(0, o.str().find('\n')), "scan,total,loc,card");
    EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
              "run,region,birth_time,death_time,gen1_spawn_time,gen2_spawn_time,origin_error,label_switch,no_spawn");
}
