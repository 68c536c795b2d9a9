#pragma once

// Randomized small instances, main-vs-oracle comparisons and the suite run
// by `sglmb --selftest`.

#include "sglmb/assignment.hpp"
#include "sglmb/estimation.hpp"
#include "sglmb/glmb.hpp"
#include "sglmb/metrics.hpp"
#include "sglmb/models.hpp"
#include "sglmb/random.hpp"
#include "sglmb/testing/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace sglmb::testing {

/// Filter settings under which the main path is exact: every vector
/// enumerated, nothing capped or pruned.
inline FilterParams exhaustive_params() {
    FilterParams p;
    p.search = HypothesisSearch::exhaustive;
    p.cap = 100'000'000;
    p.mixture_cap = 1000;
    p.mixture_prune = 0.0;
    p.exhaustive_limit = 100'000'000;
    return p;
}

struct Instance {
    ModelBundle models;
    GlmbDensity prior;
    std::vector<Vector> Z;
};

struct InstanceShape {
    int max_parents = 2;       ///< labels per prior component
    int max_components = 2;
    int max_births = 3;
    int max_measurements = 3;
    bool spawning = true;
};

namespace detail {

inline double uniform(Rng& rng, double a, double b) { return a + (b - a) * uniform01(rng); }

inline int uniform_int(Rng& rng, int a, int b) {
    return a + static_cast<int>(uniform01(rng) * static_cast<double>(b - a + 1));
}

inline Vector clip_to(const Rect& r, Vector z) {
    z(0) = std::clamp(z(0), r.xmin, r.xmax);
    z(1) = std::clamp(z(1), r.ymin, r.ymax);
    return z;
}

inline GaussianMixture random_track_density(Rng& rng) {
    GaussianMixture g;
    const int n = uniform_int(rng, 1, 2);
    for (int i = 0; i < n; ++i) {
        Vector m(4);
        m << uniform(rng, -600, 600), uniform(rng, -600, 600), uniform(rng, -8, 8), uniform(rng, -8, 8);
        if (std::hypot(m(2), m(3)) < 0.5) m(2) += 1.0;
        Matrix A(4, 4);
        for (Eigen::Index r = 0; r < 4; ++r) {
            for (Eigen::Index q = 0; q < 4; ++q) A(r, q) = uniform(rng, -1, 1);
        }
        Vector diag(4);
        diag << uniform(rng, 40, 200), uniform(rng, 40, 200), uniform(rng, 4, 30), uniform(rng, 4, 30);
        Matrix P = Matrix(diag.asDiagonal()) + 2.0 * A * A.transpose();
        g.components.push_back({uniform(rng, 0.2, 1.0), m, P});
    }
    g.normalize();
    return g;
}

/// A measurement near something the models could explain, or clutter.
inline Vector random_measurement(Rng& rng, const ModelBundle& models, const GlmbDensity& prior) {
    std::normal_distribution<double> noise(0.0, 10.0);
    Vector z(2);
    const double u = uniform01(rng);
    std::vector<Vector> anchors;
    for (const auto& r : models.birth.regions) anchors.push_back(r.density.components.front().mean.head(2));
    for (const auto& c : prior.components) {
        for (const auto& d : c.densities) {
            const Vector fm = models.motion.F * d->components.front().mean;
            anchors.push_back(fm.head(2));
            if (!models.spawn.enabled()) continue;
            for (const auto& o : models.spawn.offsets_for(d->components.front().mean)) {
                anchors.push_back((fm + o.offset).head(2));
            }
        }
    }
    if (u < 0.8 && !anchors.empty()) {
        const auto& a = anchors[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(anchors.size()) - 1))];
        z << a(0) + noise(rng), a(1) + noise(rng);
    } else {
        z << uniform(rng, -1000, 1000), uniform(rng, -1000, 1000);
    }
    return clip_to(models.sensor.region, z);
}

inline std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", x);
    return buf;
}

}  // namespace detail

/// Random models, a random prior with distinct component histories and a
/// random measurement set, within the enumeration guard.
inline Instance random_instance(Rng& rng, const InstanceShape& shape = {}) {
    Instance in;
    auto& m = in.models;
    m = ModelBundle::reference();
    const int B = detail::uniform_int(rng, 0, shape.max_births);
    m.birth.regions.resize(static_cast<std::size_t>(B));
    for (auto& r : m.birth.regions) {
        r.r_b = detail::uniform(rng, 0.01, 0.5);
        r.density.components.front().mean(0) += detail::uniform(rng, -20, 20);
        r.density.components.front().mean(1) += detail::uniform(rng, -20, 20);
    }
    m.survival.p_s = detail::uniform(rng, 0.5, 0.99);
    m.spawn.p_t = shape.spawning ? detail::uniform(rng, 0.05, 0.5) : 0.0;
    m.sensor.p_d = detail::uniform(rng, 0.5, 0.95);

    const std::vector<Label> pool{Label::birth(1, 1), Label::birth(2, 2), Label::birth(3, 3),
                                  Label::birth(1, 1).spawn(3, 1)};
    in.prior.scan_time = 5;
    const int H = detail::uniform_int(rng, 1, shape.max_components);
    std::vector<double> lw;
    for (int h = 0; h < H; ++h) {
        GlmbComponent c;
        const int S = detail::uniform_int(rng, 0, shape.max_parents);
        std::set<Label> chosen;
        while (static_cast<int>(chosen.size()) < S) {
            chosen.insert(pool[static_cast<std::size_t>(detail::uniform_int(rng, 0, 3))]);
        }
        for (const auto& l : chosen) {
            c.labels.push_back(l);
            c.densities.push_back(std::make_shared<const GaussianMixture>(detail::random_track_density(rng)));
        }
        // The last step names the component's labels; an older step keeps
        // components with equal label sets distinct.
        AssociationMap theta;
        for (const auto& l : c.labels) theta.emplace_back(l, 0);
        c.history = extend_history(extend_history(nullptr, in.prior.scan_time - 1, {{Label::birth(4, 9), h}}),
                                   in.prior.scan_time, std::move(theta));
        c.log_weight = std::log(detail::uniform(rng, 0.05, 1.0));
        in.prior.components.push_back(std::move(c));
    }
    normalize(in.prior.components);
    const int n = detail::uniform_int(rng, 0, shape.max_measurements);
    for (int j = 0; j < n; ++j) in.Z.push_back(detail::random_measurement(rng, m, in.prior));
    return in;
}

struct Comparison {
    std::size_t main_components = 0;
    std::size_t oracle_hypotheses = 0;
    std::size_t unmatched = 0;  ///< main components with no oracle counterpart
    std::size_t missing = 0;    ///< representable oracle hypotheses absent from the main output
    double max_weight_rel = 0.0;
    double max_cardinality_abs = 0.0;
    double max_phd_abs = 0.0;

    [[nodiscard]] bool ok(double weight_tol, double moment_tol) const {
        return unmatched == 0 && missing == 0 && max_weight_rel <= weight_tol &&
               max_cardinality_abs <= moment_tol && max_phd_abs <= moment_tol;
    }
};

/// Matches main-path output components to oracle hypotheses through
/// (generating prior component, newest association map). Hypotheses whose
/// exact weight is below the smallest normal double may be absent: the main
/// path drops vectors whose weight product underflows to zero.
inline Comparison compare(const GlmbDensity& prior, const GlmbDensity& out, const oracle::EnumeratedPosterior& ref) {
    Comparison c;
    c.main_components = out.components.size();
    c.oracle_hypotheses = ref.hypotheses.size();
    std::map<std::pair<std::size_t, AssociationMap>, double> expected;
    for (const auto& h : ref.hypotheses) expected[{h.prior_index, h.theta}] = h.log_weight;
    std::set<std::pair<std::size_t, AssociationMap>> found;
    for (const auto& comp : out.components) {
        const HistoryNode* parent = comp.history ? comp.history->prev.get() : nullptr;
        std::optional<std::size_t> idx;
        for (std::size_t i = 0; i < prior.components.size(); ++i) {
            if (prior.components[i].history.get() == parent) idx = i;
        }
        auto it = idx && comp.history ? expected.find({*idx, comp.history->theta}) : expected.end();
        if (it == expected.end()) {
            ++c.unmatched;
            continue;
        }
        found.insert(it->first);
        c.max_weight_rel = std::max(c.max_weight_rel, -std::expm1(-std::abs(comp.log_weight - it->second)));
    }
    const double floor = std::log(std::numeric_limits<double>::min());
    for (const auto& [key, lw] : expected) {
        if (lw >= floor && !found.count(key)) ++c.missing;
    }
    const auto rho = cardinality_distribution(out);
    const auto rho_ref = ref.cardinality();
    for (std::size_t n = 0; n < std::max(rho.size(), rho_ref.size()); ++n) {
        const double a = n < rho.size() ? rho[n] : 0.0;
        const double b = n < rho_ref.size() ? rho_ref[n] : 0.0;
        c.max_cardinality_abs = std::max(c.max_cardinality_abs, std::abs(a - b));
    }
    auto r = existence_probabilities(out);
    for (const auto& [l, mass] : ref.phd_mass()) {
        c.max_phd_abs = std::max(c.max_phd_abs, std::abs(mass - r[l]));
        r.erase(l);
    }
    for (const auto& [l, mass] : r) c.max_phd_abs = std::max(c.max_phd_abs, mass);
    return c;
}

/// Positive random table with P rows and m measurements.
inline CostTable random_table(Rng& rng, std::size_t P, int m) {
    CostTable t;
    t.eta.resize(static_cast<Eigen::Index>(P), m + 2);
    for (std::size_t i = 0; i < P; ++i) {
        std::vector<double> psi(static_cast<std::size_t>(m) + 1);
        for (auto& x : psi) x = detail::uniform(rng, 0.05, 3.0);
        t.eta.row(static_cast<Eigen::Index>(i)) = cost_row(detail::uniform(rng, 0.1, 0.9), psi);
        t.labels.push_back(Label::birth(1, static_cast<int>(i) + 1));
        t.kinds.push_back(RowKind::birth);
    }
    return t;
}

/// Total-variation distance between Gibbs output frequencies and the exact target.
inline double gibbs_tv(const CostTable& table, std::size_t sweeps, Rng& rng) {
    const auto target = oracle::gibbs_target(table);
    const auto samples = gibbs_sample(table, initial_vector(table), sweeps, rng);
    std::map<AssocVector, double> freq;
    for (const auto& g : samples) freq[g] += 1.0 / static_cast<double>(samples.size());
    double tv = 0.0;
    for (const auto& [g, p] : target) {
        auto it = freq.find(g);
        tv += std::abs(p - (it == freq.end() ? 0.0 : it->second));
        if (it != freq.end()) freq.erase(it);
    }
    for (const auto& [g, q] : freq) tv += q;
    return 0.5 * tv;
}

struct SelftestOptions {
    std::uint64_t seed = 20240101;
    int prop2_instances = 30;
    int no_spawn_scenarios = 20;
    /// Perturbs a model constant on the main path only; some check must fail.
    bool mutate = false;
};

struct SelftestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

inline ModelBundle main_models(ModelBundle m, const SelftestOptions& opt) {
    if (opt.mutate) m.sensor.p_d *= 1.0 + 1e-6;
    return m;
}

/// Exhaustive main path against the spawn-aware enumeration.
inline SelftestCheck check_prop2(const SelftestOptions& opt) {
    SelftestCheck c{"spawn posterior equals enumeration", true, "", 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_rng(opt.seed, StreamTag::test, {1});
    double worst_w = 0.0, worst_m = 0.0;
    for (int i = 0; i < opt.prop2_instances; ++i) {
        const auto in = random_instance(rng);
        const auto out = joint_predict_update(in.prior, in.Z, main_models(in.models, opt), exhaustive_params(), 0);
        const auto ref = oracle::enumerate_posterior(in.prior, in.Z, in.models);
        const auto cmp = compare(in.prior, out, ref);
        worst_w = std::max(worst_w, cmp.max_weight_rel);
        worst_m = std::max({worst_m, cmp.max_cardinality_abs, cmp.max_phd_abs});
        if (!cmp.ok(1e-10, 1e-8)) c.passed = false;
    }
    c.detail = "max weight rel err " + detail::sci(worst_w) + ", max moment err " + detail::sci(worst_m);
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

/// Multi-scan spawn-free runs, checked scan by scan against the plain
/// fast GLMB step from the same prior.
inline SelftestCheck check_no_spawn(const SelftestOptions& opt) {
    SelftestCheck c{"no-spawn reduction to fast GLMB", true, "", 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_rng(opt.seed, StreamTag::test, {2});
    double worst = 0.0;
    for (int s = 0; s < opt.no_spawn_scenarios; ++s) {
        InstanceShape shape;
        shape.spawning = false;
        shape.max_births = 2;
        auto in = random_instance(rng, shape);
        if (in.models.birth.regions.empty()) {
            in.models.birth.regions.push_back(ModelBundle::reference().birth.regions.front());
        }
        const auto mm = main_models(in.models, opt);
        GlmbDensity prior = GlmbDensity::empty(0);
        for (int k = 1; k <= 3; ++k) {
            std::vector<Vector> Z;
            const int n = detail::uniform_int(rng, 0, 2);
            for (int j = 0; j < n; ++j) Z.push_back(detail::random_measurement(rng, in.models, prior));
            const auto out = joint_predict_update(prior, Z, mm, exhaustive_params(), 0);
            const auto ref = oracle::fast_glmb_step(prior, Z, in.models);
            const auto cmp = compare(prior, out, ref);
            worst = std::max(worst, cmp.max_weight_rel);
            if (!cmp.ok(1e-10, 1e-8)) c.passed = false;
            auto capped = cap_components(out.components, 12);
            prior.components = std::move(capped.components);
            prior.scan_time = out.scan_time;
        }
    }
    c.detail = "max weight rel err " + detail::sci(worst);
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

/// Gibbs frequencies against the exact target, and Murty's top 3 against
/// the enumerated ranking.
inline SelftestCheck check_gibbs(const SelftestOptions& opt) {
    SelftestCheck c{"gibbs target and ranked assignment", true, "", 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_rng(opt.seed, StreamTag::test, {3});
    double worst_tv = 0.0;
    for (int i = 0; i < 3; ++i) {
        const auto table = random_table(rng, 3, 2);
        worst_tv = std::max(worst_tv, gibbs_tv(table, 100'000, rng));
    }
    if (worst_tv > 0.05) c.passed = false;
    int ranked_ok = 0;
    for (int i = 0; i < 20; ++i) {
        const auto table = random_table(rng, 3, 2);
        const auto target = oracle::gibbs_target(table);
        std::vector<std::pair<double, AssocVector>> order;
        for (const auto& [g, p] : target) order.emplace_back(-p, g);
        std::sort(order.begin(), order.end());
        const auto top = murty_topk(table, 3);
        bool same = top.size() == 3;
        for (std::size_t r = 0; same && r < 3; ++r) same = top[r].gamma == order[r].second;
        ranked_ok += same ? 1 : 0;
    }
    if (ranked_ok != 20) c.passed = false;
    c.detail = "max TV " + detail::sci(worst_tv) + ", ranked " + std::to_string(ranked_ok) + "/20";
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

/// OSPA from the Hungarian solver against brute-force injections.
inline SelftestCheck check_ospa(const SelftestOptions& opt) {
    SelftestCheck c{"ospa against brute force", true, "", 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_rng(opt.seed, StreamTag::test, {4});
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        std::vector<Vector> X(static_cast<std::size_t>(detail::uniform_int(rng, 0, 5)));
        std::vector<Vector> Y(static_cast<std::size_t>(detail::uniform_int(rng, 0, 5)));
        for (auto* s : {&X, &Y}) {
            for (auto& v : *s) {
                v.resize(2);
                v << detail::uniform(rng, -150, 150), detail::uniform(rng, -150, 150);
            }
        }
        const double a = ospa(X, Y, {100.0, 1.0}).total;
        worst = std::max(worst, std::abs(a - oracle::ospa_bruteforce(X, Y, 100.0, 1.0)));
    }
    if (worst > 1e-9) c.passed = false;
    c.detail = "max abs err " + detail::sci(worst);
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

inline std::vector<SelftestCheck> run_selftest(const SelftestOptions& opt = {}) {
    return {check_prop2(opt), check_no_spawn(opt), check_gibbs(opt), check_ospa(opt)};
}

inline bool print_selftest(std::ostream& os, const std::vector<SelftestCheck>& checks) {
    bool all = true;
    for (const auto& c : checks) {
        os << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ", " << c.seconds << " s)\n";
        all = all && c.passed;
    }
    return all;
}

}  // namespace sglmb::testing
