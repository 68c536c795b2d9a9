// Checks on the reference implementations themselves.
#include "sglmb/testing/oracle.hpp"
#include "sglmb/testing/selftest.hpp"

#include <gtest/gtest.h>

using namespace sglmb;

namespace {

GlmbDensity one_track_prior() {
    GlmbDensity prior;
    prior.scan_time = 4;
    GlmbComponent c;
    Vector m(4);
    m << 0, 0, 5, 0;
    c.labels = {Label::parse("1,1")};
    c.densities = {std::make_shared<const GaussianMixture>(Gaussian{m, 10.0 * Matrix::Identity(4, 4)})};
    c.log_weight = 0.0;
    prior.components.push_back(std::move(c));
    return prior;
}

}  // namespace

TEST(Oracle, MissedDetectionsOnlyHasClosedForm) {
    auto models = ModelBundle::reference();
    models.birth.regions.clear();
    const double ps = 0.99, pt = 0.01, q = 1.0 - 0.88;
    const auto ref = oracle::enumerate_posterior(one_track_prior(), {}, models);
    ASSERT_EQ(ref.hypotheses.size(), 4u);
    const double z = (1 - ps) * (1 - pt) + ps * (1 - pt) * q + (1 - ps) * pt * q + ps * pt * q * q;
    const auto rho = ref.cardinality();
    EXPECT_NEAR(rho[0], (1 - ps) * (1 - pt) / z, 1e-14);
    EXPECT_NEAR(rho[2], ps * pt * q * q / z, 1e-14);
    EXPECT_NEAR(ref.phd_mass().at(Label::parse("1,1")), ps * (1 - pt) * q / z + ps * pt * q * q / z, 1e-14);
}

TEST(Oracle, HypothesisCountForOneMeasurement) {
    auto models = ModelBundle::reference();
    models.birth.regions.clear();
    Vector z(2);
    z << 5, 0;
    // survivor and spawn each in {absent, missed, z}, not both on z
    EXPECT_EQ(oracle::enumerate_posterior(one_track_prior(), {z}, models).hypotheses.size(), 8u);
    models.spawn.p_t = 0.0;
    EXPECT_EQ(oracle::enumerate_posterior(one_track_prior(), {z}, models).hypotheses.size(), 3u);
}

TEST(Oracle, GuardRejectsLargeInstances) {
    const auto models = ModelBundle::reference();
    const std::vector<Vector> Z(4, Vector::Zero(2));
    EXPECT_THROW(oracle::enumerate_posterior(one_track_prior(), Z, models), std::invalid_argument);
}

TEST(OracleProperty, NormalizedAndAgreesWithFastStepWithoutSpawning) {
    Rng rng(41);
    sglmb::testing::InstanceShape shape;
    shape.spawning = false;
    for (int i = 0; i < 30; ++i) {
        const auto in = sglmb::testing::random_instance(rng, shape);
        const auto a = oracle::enumerate_posterior(in.prior, in.Z, in.models);
        const auto b = oracle::fast_glmb_step(in.prior, in.Z, in.models);
        double total = 0.0;
        for (const auto& h : a.hypotheses) total += std::exp(h.log_weight);
        ASSERT_NEAR(total, 1.0, 1e-12);
        ASSERT_EQ(a.hypotheses.size(), b.hypotheses.size());
        const auto ra = a.cardinality(), rb = b.cardinality();
        ASSERT_EQ(ra.size(), rb.size());
        for (std::size_t n = 0; n < ra.size(); ++n) ASSERT_NEAR(ra[n], rb[n], 1e-12);
        for (const auto& [l, r] : a.phd_mass()) ASSERT_NEAR(r, b.phd_mass().at(l), 1e-12);
    }
}

TEST(Oracle, GibbsTargetSumsToOne) {
    Rng rng(42);
    for (int i = 0; i < 20; ++i) {
        const auto t = sglmb::testing::random_table(rng, 1 + i % 4, i % 3);
        double s = 0.0;
        for (const auto& [g, p] : oracle::gibbs_target(t)) s += p;
        ASSERT_NEAR(s, 1.0, 1e-12);
    }
}
