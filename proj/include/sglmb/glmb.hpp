#pragma once

#include "sglmb/assignment.hpp"
#include "sglmb/gaussian.hpp"
#include "sglmb/labels.hpp"
#include "sglmb/models.hpp"
#include "sglmb/params.hpp"
#include "sglmb/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sglmb {

using DensityPtr = std::shared_ptr<const GaussianMixture>;

/// One scan's association map: (label, measurement index) for every label of
/// the component at that scan, 0 meaning missed.
using AssociationMap = std::vector<std::pair<Label, int>>;

/// Persistent association history. Each node stores one scan's map and
/// points to the previous scan, so components share their common past.
struct HistoryNode {
    std::shared_ptr<const HistoryNode> prev;
    AssociationMap theta;
    int time = 0;
    std::size_t depth = 1;
    std::size_t hash = 0;
};
using History = std::shared_ptr<const HistoryNode>;

namespace detail {
inline std::size_t hash_map(const AssociationMap& theta, std::size_t seed) {
    std::size_t h = seed ^ 0x9e3779b97f4a7c15ULL;
    for (const auto& [l, j] : theta) {
        h = (h ^ std::hash<Label>{}(l)) * 0x100000001b3ULL;
        h = (h ^ static_cast<std::size_t>(j + 2)) * 0x100000001b3ULL;
    }
    return h;
}
}  // namespace detail

/// Appends a scan's map. With max_depth > 0 older entries are dropped.
inline History extend_history(const History& prev, int time, AssociationMap theta,
                              std::size_t max_depth = 0) {
    History base = prev;
    if (max_depth > 0 && base && base->depth >= max_depth) {
        // Rebuild the newest max_depth - 1 nodes; older ones are forgotten.
        std::vector<const HistoryNode*> chain;
        for (const HistoryNode* n = base.get(); n && chain.size() + 1 < max_depth; n = n->prev.get()) {
            chain.push_back(n);
        }
        History rebuilt;
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
            auto node = std::make_shared<HistoryNode>();
            node->prev = rebuilt;
            node->theta = (*it)->theta;
            node->time = (*it)->time;
            node->depth = rebuilt ? rebuilt->depth + 1 : 1;
            node->hash = detail::hash_map(node->theta, rebuilt ? rebuilt->hash : 0);
            rebuilt = std::move(node);
        }
        base = std::move(rebuilt);
    }
    auto node = std::make_shared<HistoryNode>();
    node->prev = base;
    node->theta = std::move(theta);
    node->time = time;
    node->depth = base ? base->depth + 1 : 1;
    node->hash = detail::hash_map(node->theta, base ? base->hash : 0);
    return node;
}

inline bool same_history(const HistoryNode* a, const HistoryNode* b) {
    while (a != b) {
        if (!a || !b) return false;
        if (a->hash != b->hash || a->depth != b->depth || a->time != b->time ||
            a->theta != b->theta) {
            return false;
        }
        a = a->prev.get();
        b = b->prev.get();
    }
    return true;
}

struct GlmbComponent {
    std::vector<Label> labels;          ///< sorted, distinct
    std::vector<DensityPtr> densities;  ///< aligned with labels
    History history;
    double log_weight = 0.0;

    [[nodiscard]] std::size_t cardinality() const { return labels.size(); }

    [[nodiscard]] const GaussianMixture& density(const Label& l) const {
        auto it = std::lower_bound(labels.begin(), labels.end(), l);
        if (it == labels.end() || *it != l) {
            throw std::out_of_range("component has no label " + l.to_string());
        }
        return *densities[static_cast<std::size_t>(it - labels.begin())];
    }
    [[nodiscard]] bool contains(const Label& l) const {
        return std::binary_search(labels.begin(), labels.end(), l);
    }
};

struct GlmbDensity {
    std::vector<GlmbComponent> components;
    int scan_time = 0;

    /// The empty multi-object density (single component, no labels).
    static GlmbDensity empty(int scan_time = 0) {
        GlmbDensity d;
        d.scan_time = scan_time;
        d.components.push_back(GlmbComponent{});
        return d;
    }

    [[nodiscard]] double total_weight() const {
        double s = 0.0;
        for (const auto& c : components) s += std::exp(c.log_weight);
        return s;
    }
};

/// Rescales log weights so that they sum to one; returns the previous log total.
inline double normalize(std::vector<GlmbComponent>& components) {
    std::vector<double> lw;
    lw.reserve(components.size());
    for (const auto& c : components) lw.push_back(c.log_weight);
    const double total = log_sum_exp(lw);
    if (std::isfinite(total)) {
        for (auto& c : components) c.log_weight -= total;
    }
    return total;
}

/// Merges components with identical (labels, history) by summing weights;
/// densities come from the first occurrence. Order of first occurrences is
/// kept and the result is renormalized.
inline std::vector<GlmbComponent> aggregate(std::vector<GlmbComponent> components) {
    std::unordered_multimap<std::size_t, std::size_t> seen;
    std::vector<GlmbComponent> out;
    std::vector<std::vector<double>> merged;
    out.reserve(components.size());
    for (auto& c : components) {
        std::size_t h = c.history ? c.history->hash : 0;
        for (const auto& l : c.labels) h = (h ^ std::hash<Label>{}(l)) * 0x100000001b3ULL;
        std::optional<std::size_t> hit;
        auto [lo, hi] = seen.equal_range(h);
        for (auto it = lo; it != hi; ++it) {
            const auto& o = out[it->second];
            if (o.labels == c.labels && same_history(o.history.get(), c.history.get())) {
                hit = it->second;
                break;
            }
        }
        if (hit) {
            merged[*hit].push_back(c.log_weight);
        } else {
            seen.emplace(h, out.size());
            merged.push_back({c.log_weight});
            out.push_back(std::move(c));
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (merged[i].size() > 1) out[i].log_weight = log_sum_exp(merged[i]);
    }
    normalize(out);
    return out;
}

struct CapResult {
    std::vector<GlmbComponent> components;
    double discarded_mass = 0.0;  ///< input mass dropped, as a fraction of the input total
};

/// Keeps the `cap` heaviest components (ties: lexicographically smaller
/// label set first) and renormalizes.
inline CapResult cap_components(std::vector<GlmbComponent> components, std::size_t cap) {
    if (cap < 1) throw std::invalid_argument("cap_components: cap must be >= 1");
    CapResult r;
    if (components.size() <= cap) {
        r.components = std::move(components);
        normalize(r.components);
        return r;
    }
    std::vector<std::size_t> order(components.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (components[a].log_weight != components[b].log_weight) {
            return components[a].log_weight > components[b].log_weight;
        }
        return components[a].labels < components[b].labels;
    });
    std::vector<double> all, kept;
    for (const auto& c : components) all.push_back(c.log_weight);
    order.resize(cap);
    for (std::size_t i : order) {
        kept.push_back(components[i].log_weight);
        r.components.push_back(std::move(components[i]));
    }
    r.discarded_mass = 1.0 - std::exp(log_sum_exp(kept) - log_sum_exp(all));
    normalize(r.components);
    return r;
}

/// Splits `total` draws over categories with the given probabilities
/// (conditional binomials), then raises every count to at least `floor`.
inline std::vector<std::size_t> allocate_budget(std::span<const double> probs, std::size_t total,
                                                std::size_t floor, Rng& rng) {
    std::vector<std::size_t> out(probs.size(), 0);
    double remaining_p = 1.0;
    std::size_t remaining = total;
    for (std::size_t i = 0; i < probs.size() && remaining > 0; ++i) {
        if (i + 1 == probs.size() || remaining_p <= 0.0) {
            out[i] = remaining;
            remaining = 0;
            break;
        }
        const double q = std::clamp(probs[i] / remaining_p, 0.0, 1.0);
        std::binomial_distribution<std::size_t> bin(remaining, q);
        out[i] = bin(rng);
        remaining -= out[i];
        remaining_p -= probs[i];
    }
    for (auto& c : out) c = std::max(c, floor);
    return out;
}

/// Result of conditioning one parent's family on a hypothesis.
struct FamilyPosterior {
    double log_evidence = 0.0;           ///< discrete factors times Gaussian evidence
    std::vector<DensityPtr> marginals;   ///< one per present member: survivor first, then spawns
};

/// Family evidence and member marginals for a parent with prior density
/// `parent`. `survivor` and `spawns` hold the association of the survivor
/// row and of each spawn row: -1 absent, 0 missed, j >= 1 measurement j.
inline FamilyPosterior compute_family_posteriors(const GaussianMixture& parent, int survivor,
                                                 std::span<const int> spawns,
                                                 std::span<const Vector> measurements,
                                                 const ModelBundle& models,
                                                 const FilterParams& params) {
    FamilyPosterior out;
    const double p_s = models.survival.p_s;
    const double p_t = models.spawn.p_t;
    const double p_d = models.sensor.p_d;
    out.log_evidence += survivor >= 0 ? std::log(p_s) : std::log1p(-p_s);
    for (int g : spawns) out.log_evidence += g >= 0 ? std::log(p_t) : std::log1p(-p_t);
    const bool survived = survivor >= 0;
    std::vector<int> member_assoc;
    if (survived) member_assoc.push_back(survivor);
    for (int g : spawns) {
        if (g >= 0) member_assoc.push_back(g);
    }
    if (member_assoc.empty()) return out;

    const auto fam = build_family(
        parent, survived, member_assoc.size() - (survived ? 1 : 0),
        [&](const Vector& m) { return models.spawn.offsets_for(m); }, models.motion.F,
        models.motion.Q, models.spawn.QT);
    std::vector<std::optional<Vector>> assigned;
    for (int g : member_assoc) {
        if (g >= 1) {
            const auto& z = measurements[static_cast<std::size_t>(g - 1)];
            out.log_evidence += std::log(p_d) - models.sensor.clutter_loglik(z);
            assigned.emplace_back(z);
        } else {
            out.log_evidence += std::log1p(-p_d);
            assigned.emplace_back(std::nullopt);
        }
    }
    const auto post = update_family(fam, assigned, models.sensor.H, models.sensor.R);
    out.log_evidence += post.log_evidence;
    for (std::size_t k = 0; k < member_assoc.size(); ++k) {
        auto capped = cap_mixture(marginalize(post, k).mixture, params.mixture_cap,
                                  params.mixture_prune);
        out.marginals.push_back(std::make_shared<const GaussianMixture>(std::move(capped.mixture)));
    }
    return out;
}

/// Per-scan diagnostics of the recursion.
struct ScanDiagnostics {
    int scan = 0;
    std::size_t prior_components = 0;
    std::size_t candidates = 0;       ///< distinct (component, vector) pairs evaluated
    std::size_t aggregated = 0;       ///< components after merging
    std::size_t components = 0;       ///< components after capping
    double discarded_mass = 0.0;
    double ess = 0.0;                 ///< 1 / sum w^2
    std::size_t sweeps = 0;
};

namespace detail {

struct TupleHash {
    std::size_t operator()(const std::pair<const GaussianMixture*, std::vector<int>>& k) const noexcept {
        std::size_t h = std::hash<const void*>{}(k.first);
        for (int x : k.second) h = (h ^ static_cast<std::size_t>(x + 2)) * 0x100000001b3ULL;
        return h;
    }
};

/// Per-scan memo tables. Keys are raw density pointers, valid while the
/// prior density is alive.
struct ScanCache {
    std::unordered_map<const GaussianMixture*, std::vector<double>> survive_psi;
    std::unordered_map<const GaussianMixture*, std::vector<double>> spawn_psi;
    std::unordered_map<std::pair<const GaussianMixture*, std::vector<int>>, FamilyPosterior,
                       TupleHash>
        families;
    std::map<std::pair<std::size_t, int>, std::pair<double, DensityPtr>> births;
};

inline GaussianMixture spawn_prediction(const GaussianMixture& parent, const ModelBundle& models) {
    GaussianMixture out;
    for (const auto& c : parent.components) {
        const Vector fm = models.motion.F * c.mean;
        Matrix cov = models.motion.F * c.cov * models.motion.F.transpose() + models.spawn.QT;
        symmetrize(cov);
        for (const auto& o : models.spawn.offsets_for(c.mean)) {
            out.components.push_back({c.weight * o.weight, fm + o.offset, cov});
        }
    }
    return out;
}

}  // namespace detail

/// One scan of the joint prediction/update with spawning.
///
/// For every prior component: allocate its share of the sweep budget, build
/// the cost table over births, its labels and their spawn labels, draw
/// distinct association vectors, and turn each into a posterior component
/// with its exact (untempered) weight. Components are then normalized,
/// merged on (labels, history) and capped.
///
/// `seed` must be specific to the scan (and trial); streams for the budget
/// and for each component's sampler are derived from it.
inline GlmbDensity joint_predict_update(const GlmbDensity& prior,
                                        std::span<const Vector> measurements,
                                        const ModelBundle& models, const FilterParams& params,
                                        std::uint64_t seed, ScanDiagnostics* diag = nullptr) {
    if (prior.components.empty()) {
        throw std::invalid_argument("joint_predict_update: prior has no components");
    }
    for (const auto& z : measurements) {
        if (!std::isfinite(models.sensor.clutter_loglik(z))) {
            throw std::invalid_argument("joint_predict_update: measurement outside the surveillance region");
        }
    }
    const int next_time = prior.scan_time + 1;
    const double eps = params.probability_clamp;
    const double p_s_bar = clamp_probability(params.temper_survival * models.survival.p_s, eps);
    const double p_d_bar = clamp_probability(params.temper_detection * models.sensor.p_d, eps);
    const double p_t_bar = clamp_probability(
        (params.temper_spawn ? params.temper_survival : 1.0) * models.spawn.p_t, eps);
    const bool spawning = models.spawn.enabled();
    const int per_parent = spawning ? models.spawn.per_parent : 0;
    const std::size_t m = measurements.size();

    // Birth rows are shared by every component.
    struct BirthRow {
        Label label;
        std::size_t region;
        std::vector<double> psi;
    };
    std::vector<BirthRow> birth_rows;
    for (std::size_t r = 0; r < models.birth.regions.size(); ++r) {
        const auto& reg = models.birth.regions[r];
        birth_rows.push_back({Label::birth(next_time, reg.label_index), r,
                              detection_terms(reg.density, measurements, models.sensor, p_d_bar)});
    }
    std::sort(birth_rows.begin(), birth_rows.end(),
              [](const BirthRow& a, const BirthRow& b) { return a.label < b.label; });

    detail::ScanCache cache;
    auto birth_posterior = [&](std::size_t region, int g) -> const std::pair<double, DensityPtr>& {
        auto key = std::make_pair(region, g);
        auto it = cache.births.find(key);
        if (it != cache.births.end()) return it->second;
        const auto& reg = models.birth.regions[region];
        std::pair<double, DensityPtr> v;
        if (g < 0) {
            v = {std::log1p(-reg.r_b), nullptr};
        } else if (g == 0) {
            v = {std::log(reg.r_b) + std::log1p(-models.sensor.p_d),
                 std::make_shared<const GaussianMixture>(reg.density)};
        } else {
            const auto& z = measurements[static_cast<std::size_t>(g - 1)];
            auto up = update(reg.density, z, models.sensor.H, models.sensor.R);
            auto capped = cap_mixture(up.posterior, params.mixture_cap, params.mixture_prune);
            v = {std::log(reg.r_b) + std::log(models.sensor.p_d) + up.log_likelihood -
                     models.sensor.clutter_loglik(z),
                 std::make_shared<const GaussianMixture>(std::move(capped.mixture))};
        }
        return cache.births.emplace(key, std::move(v)).first->second;
    };

    std::vector<double> probs;
    probs.reserve(prior.components.size());
    for (const auto& c : prior.components) probs.push_back(std::exp(c.log_weight));
    std::vector<std::size_t> budget(prior.components.size(), 0);
    if (params.search == HypothesisSearch::gibbs) {
        Rng brng = make_rng(seed, StreamTag::budget);
        budget = allocate_budget(probs, params.h_max, params.gibbs_floor, brng);
    }

    std::vector<GlmbComponent> candidates;
    std::size_t sweeps = 0;
    for (std::size_t h = 0; h < prior.components.size(); ++h) {
        const auto& comp = prior.components[h];
        if (params.search == HypothesisSearch::gibbs && budget[h] == 0) continue;
        const std::size_t B = birth_rows.size();
        const std::size_t S = comp.labels.size();
        const std::size_t P = B + S + S * static_cast<std::size_t>(per_parent);

        // Rows: births, survivors (component labels are sorted), then spawn
        // labels grouped by parent.
        CostTable table;
        table.eta.resize(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(m) + 2);
        table.labels.reserve(P);
        table.kinds.reserve(P);
        Eigen::Index row = 0;
        for (const auto& b : birth_rows) {
            table.eta.row(row++) = cost_row(clamp_probability(models.birth.regions[b.region].r_b, eps), b.psi);
            table.labels.push_back(b.label);
            table.kinds.push_back(RowKind::birth);
        }
        for (std::size_t s = 0; s < S; ++s) {
            const GaussianMixture* key = comp.densities[s].get();
            auto it = cache.survive_psi.find(key);
            if (it == cache.survive_psi.end()) {
                auto pred = predict(*key, models.motion.F, models.motion.Q);
                it = cache.survive_psi
                         .emplace(key, detection_terms(pred, measurements, models.sensor, p_d_bar))
                         .first;
            }
            table.eta.row(row++) = cost_row(p_s_bar, it->second);
            table.labels.push_back(comp.labels[s]);
            table.kinds.push_back(RowKind::survive);
        }
        for (std::size_t s = 0; s < S && per_parent > 0; ++s) {
            const GaussianMixture* key = comp.densities[s].get();
            auto it = cache.spawn_psi.find(key);
            if (it == cache.spawn_psi.end()) {
                auto pred = detail::spawn_prediction(*key, models);
                it = cache.spawn_psi
                         .emplace(key, detection_terms(pred, measurements, models.sensor, p_d_bar))
                         .first;
            }
            for (int j = 1; j <= per_parent; ++j) {
                table.eta.row(row++) = cost_row(p_t_bar, it->second);
                table.labels.push_back(comp.labels[s].spawn(next_time, j));
                table.kinds.push_back(RowKind::spawn);
            }
        }

        std::vector<AssocVector> vectors;
        if (params.search == HypothesisSearch::exhaustive) {
            vectors = enumerate_vectors(table, params.exhaustive_limit);
        } else {
            Rng grng = make_rng(seed, StreamTag::gibbs, {h});
            vectors = unique(gibbs_sample(table, initial_vector(table), budget[h], grng)).distinct;
            sweeps += budget[h];
        }

        for (const auto& gamma : vectors) {
            GlmbComponent nc;
            nc.log_weight = comp.log_weight;
            AssociationMap theta;
            std::vector<std::pair<Label, DensityPtr>> present;
            for (std::size_t i = 0; i < B; ++i) {
                const auto& bp = birth_posterior(birth_rows[i].region, gamma[i]);
                nc.log_weight += bp.first;
                if (gamma[i] >= 0) present.emplace_back(table.labels[i], bp.second);
            }
            std::vector<int> fam_key(1 + static_cast<std::size_t>(per_parent));
            for (std::size_t s = 0; s < S; ++s) {
                fam_key[0] = gamma[B + s];
                for (int j = 0; j < per_parent; ++j) {
                    fam_key[1 + static_cast<std::size_t>(j)] =
                        gamma[B + S + s * static_cast<std::size_t>(per_parent) + static_cast<std::size_t>(j)];
                }
                const GaussianMixture* dens = comp.densities[s].get();
                auto key = std::make_pair(dens, fam_key);
                auto it = cache.families.find(key);
                if (it == cache.families.end()) {
                    auto fp = compute_family_posteriors(
                        *dens, fam_key[0], std::span<const int>(fam_key).subspan(1), measurements,
                        models, params);
                    it = cache.families.emplace(std::move(key), std::move(fp)).first;
                }
                const auto& fp = it->second;
                nc.log_weight += fp.log_evidence;
                std::size_t k = 0;
                if (fam_key[0] >= 0) present.emplace_back(comp.labels[s], fp.marginals[k++]);
                for (int j = 0; j < per_parent; ++j) {
                    const std::size_t r = B + S + s * static_cast<std::size_t>(per_parent) +
                                          static_cast<std::size_t>(j);
                    if (gamma[r] >= 0) present.emplace_back(table.labels[r], fp.marginals[k++]);
                }
            }
            if (!std::isfinite(nc.log_weight)) continue;
            std::sort(present.begin(), present.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (auto& [l, d] : present) {
                nc.labels.push_back(l);
                nc.densities.push_back(std::move(d));
            }
            for (std::size_t i = 0; i < P; ++i) {
                if (gamma[i] >= 0) theta.emplace_back(table.labels[i], gamma[i]);
            }
            std::sort(theta.begin(), theta.end());
            nc.history = extend_history(comp.history, next_time, std::move(theta), params.history_depth);
            candidates.push_back(std::move(nc));
        }
    }
    if (candidates.empty()) {
        throw std::domain_error("joint_predict_update: every hypothesis has zero weight");
    }

    GlmbDensity out;
    out.scan_time = next_time;
    const std::size_t n_candidates = candidates.size();
    normalize(candidates);
    auto merged = aggregate(std::move(candidates));
    const std::size_t n_merged = merged.size();
    auto capped = cap_components(std::move(merged), params.cap);
    out.components = std::move(capped.components);
    if (diag) {
        diag->scan = next_time;
        diag->prior_components = prior.components.size();
        diag->candidates = n_candidates;
        diag->aggregated = n_merged;
        diag->components = out.components.size();
        diag->discarded_mass = capped.discarded_mass;
        double s2 = 0.0;
        for (const auto& c : out.components) s2 += std::exp(2.0 * c.log_weight);
        diag->ess = s2 > 0.0 ? 1.0 / s2 : 0.0;
        diag->sweeps = sweeps;
    }
    return out;
}

}  // namespace sglmb
