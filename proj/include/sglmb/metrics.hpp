#pragma once

#include "sglmb/assignment.hpp"
#include "sglmb/estimation.hpp"
#include "sglmb/gaussian.hpp"
#include "sglmb/labels.hpp"
#include "sglmb/params.hpp"
#include "sglmb/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

namespace sglmb {

struct OspaResult {
    double total = 0.0;
    double localization = 0.0;
    double cardinality = 0.0;
};

/// OSPA of order p with cutoff c; total^p = localization^p + cardinality^p.
inline OspaResult ospa(std::span<const Vector> X, std::span<const Vector> Y, const OspaParams& params) {
    if (!(params.c > 0.0) || !(params.p >= 1.0)) {
        throw std::invalid_argument("ospa: requires c > 0 and p >= 1");
    }
    OspaResult r;
    if (X.empty() && Y.empty()) return r;
    if (X.size() > Y.size()) std::swap(X, Y);
    const auto n = static_cast<Eigen::Index>(X.size());
    const auto m = static_cast<Eigen::Index>(Y.size());
    const double cp = std::pow(params.c, params.p);
    if (n == 0) {
        r.total = params.c;
        r.cardinality = params.c;
        return r;
    }
    Matrix cost(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const double d = (X[static_cast<std::size_t>(i)] - Y[static_cast<std::size_t>(j)]).norm();
            cost(i, j) = std::pow(std::min(d, params.c), params.p);
        }
    }
    const auto sol = solve_assignment(cost);
    const double md = static_cast<double>(m);
    const double loc_p = sol.cost / md;
    const double card_p = cp * static_cast<double>(m - n) / md;
    r.localization = std::pow(loc_p, 1.0 / params.p);
    r.cardinality = std::pow(card_p, 1.0 / params.p);
    r.total = std::pow(loc_p + card_p, 1.0 / params.p);
    return r;
}

struct CardinalityStats {
    std::vector<double> mean;
    std::vector<double> stddev;  ///< sample standard deviation (n - 1), 0 for a single run
};

/// Per-scan mean and standard deviation over runs (rows) of estimated
/// cardinalities (columns = scans).
inline CardinalityStats cardinality_stats(const std::vector<std::vector<double>>& runs) {
    CardinalityStats s;
    if (runs.empty()) return s;
    const std::size_t scans = runs.front().size();
    for (const auto& r : runs) {
        if (r.size() != scans) throw std::invalid_argument("cardinality_stats: ragged input");
    }
    s.mean.assign(scans, 0.0);
    s.stddev.assign(scans, 0.0);
    const double n = static_cast<double>(runs.size());
    for (std::size_t k = 0; k < scans; ++k) {
        double sum = 0.0;
        for (const auto& r : runs) sum += r[k];
        const double mu = sum / n;
        double ss = 0.0;
        for (const auto& r : runs) ss += (r[k] - mu) * (r[k] - mu);
        s.mean[k] = mu;
        s.stddev[k] = runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    return s;
}

/// Event record of one lineage in one run.
struct AncestryRecord {
    int run = 0;
    int region = 0;
    std::optional<int> birth_time;
    std::optional<int> death_time;
    std::optional<int> gen1_spawn_time;
    std::optional<int> gen2_spawn_time;
    bool origin_error = false;
    bool label_switch = false;
    bool no_spawn = false;
    /// A generation-2 final label with spawn times within tolerance of the
    /// truth and a root classified to this region.
    bool reproduced = false;
};

struct AncestryConfig {
    std::vector<Vector> birth_means;  ///< position of each region, index = region - 1
    double gate = 30.0;               ///< region classification radius (3 sigma_B)
    double match_radius = 100.0;      ///< estimate-to-truth association radius at the horizon
    int time_tolerance = 2;
};

/// Estimates per scan: history[k - 1] holds the estimates at scan k.
using EstimateHistory = std::vector<std::vector<TrackEstimate>>;

namespace detail {

inline const TrackEstimate* find_estimate(const std::vector<TrackEstimate>& ests, const Label& l) {
    for (const auto& e : ests) {
        if (e.label == l) return &e;
    }
    return nullptr;
}

inline std::optional<int> first_appearance(const EstimateHistory& history, const Label& l) {
    for (std::size_t k = 0; k < history.size(); ++k) {
        if (find_estimate(history[k], l)) return static_cast<int>(k) + 1;
    }
    return std::nullopt;
}

}  // namespace detail

/// Region whose birth mean is nearest to the root's state at its birth
/// time (first estimate propagated back at constant velocity); 0 when no
/// mean lies within the gate. A root never extracted falls back to the
/// region index carried by its birth label.
inline int classify_root(const Label& root, const EstimateHistory& history, const AncestryConfig& cfg) {
    const auto k_first = detail::first_appearance(history, root);
    if (!k_first) return root.last_index();
    const auto* e = detail::find_estimate(history[static_cast<std::size_t>(*k_first - 1)], root);
    const double dt = static_cast<double>(*k_first - root.birth_time());
    Vector p(2);
    p << e->mean(0) - dt * e->mean(2), e->mean(1) - dt * e->mean(3);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cfg.birth_means.size(); ++i) {
        const double d = (p - cfg.birth_means[i].head(2)).norm();
        if (d <= cfg.gate && d < best_d) {
            best_d = d;
            best = static_cast<int>(i) + 1;
        }
    }
    return best;
}

/// Lineage events per true birth region (the regions of generation-0 truth
/// tracks that have descendants), read from the final estimates' labels.
inline std::vector<AncestryRecord> ancestry_analysis(int run, const EstimateHistory& history,
                                                     const Truth& truth, const AncestryConfig& cfg) {
    std::vector<AncestryRecord> out;
    if (history.empty()) return out;
    const auto& final_ests = history.back();
    const int horizon = static_cast<int>(history.size());

    std::map<Label, int> root_region;
    for (const auto& e : final_ests) {
        const Label root = e.label.root();
        if (!root_region.count(root)) root_region[root] = classify_root(root, history, cfg);
    }

    for (const auto& root_truth : truth.tracks) {
        if (root_truth.label.generation() != 0) continue;
        const TruthTrack* g1 = nullptr;
        const TruthTrack* g2 = nullptr;
        for (const auto& t : truth.tracks) {
            if (!root_truth.label.is_ancestor_of(t.label)) continue;
            if (t.label.generation() == 1 && !g1) g1 = &t;
            if (t.label.generation() == 2 && !g2) g2 = &t;
        }
        if (!g1) continue;

        AncestryRecord rec;
        rec.run = run;
        rec.region = root_truth.region;
        const int want1 = g1->label.event(1).time;
        const int want2 = g2 ? g2->label.event(2).time : 0;

        // Best generation-2 label of this region: smallest total spawn-time deviation.
        const TrackEstimate* best2 = nullptr;
        int best_dev = std::numeric_limits<int>::max();
        for (const auto& e : final_ests) {
            if (e.label.generation() != 2 || root_region[e.label.root()] != rec.region) continue;
            const int dev = std::abs(e.label.event(1).time - want1) + std::abs(e.label.event(2).time - want2);
            if (dev < best_dev) {
                best_dev = dev;
                best2 = &e;
            }
        }
        const TrackEstimate* best1 = nullptr;
        for (const auto& e : final_ests) {
            if (e.label.generation() != 1 || root_region[e.label.root()] != rec.region) continue;
            if (!best1 || std::abs(e.label.event(1).time - want1) < std::abs(best1->label.event(1).time - want1)) {
                best1 = &e;
            }
        }

        std::optional<Label> root;
        if (best2) {
            root = best2->label.root();
            rec.gen1_spawn_time = best2->label.event(1).time;
            rec.gen2_spawn_time = best2->label.event(2).time;
            rec.reproduced = g2 && std::abs(*rec.gen1_spawn_time - want1) <= cfg.time_tolerance &&
                             std::abs(*rec.gen2_spawn_time - want2) <= cfg.time_tolerance;
        } else if (best1) {
            root = best1->label.root();
            rec.gen1_spawn_time = best1->label.event(1).time;
        }
        rec.no_spawn = !best2 || !best1;

        if (root) {
            rec.birth_time = root->birth_time();
            if (const auto first = detail::first_appearance(history, *root)) {
                for (int k = *first; k <= horizon; ++k) {
                    if (!detail::find_estimate(history[static_cast<std::size_t>(k - 1)], *root)) {
                        rec.death_time = k;
                        break;
                    }
                }
            }
        }

        // The estimate closest to the true gen-2 object at the horizon must
        // descend from a root of this region and carry a gen-2 label.
        auto nearest = [&](const TruthTrack* t) -> const TrackEstimate* {
            if (!t || !t->alive(horizon)) return nullptr;
            const TrackEstimate* best = nullptr;
            double bd = cfg.match_radius;
            for (const auto& e : final_ests) {
                const double d = (e.mean.head(2) - t->state(horizon).head(2)).norm();
                if (d <= bd) {
                    bd = d;
                    best = &e;
                }
            }
            return best;
        };
        const auto* near2 = nearest(g2);
        const auto* near1 = nearest(g1);
        if (near2 && root_region[near2->label.root()] != rec.region) rec.origin_error = true;
        if (!root && near1 && root_region[near1->label.root()] != rec.region) rec.origin_error = true;
        if (best2 && near2 && near2 != best2) rec.label_switch = true;
        if (best1 && near1 && near1 != best1) rec.label_switch = true;
        if (best2 && best1 && !best1->label.is_ancestor_of(best2->label)) rec.label_switch = true;
        out.push_back(rec);
    }
    return out;
}

}  // namespace sglmb
