#pragma once

#include "sglmb/gaussian.hpp"
#include "sglmb/glmb.hpp"
#include "sglmb/labels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace sglmb {

struct TrackEstimate {
    Label label;
    Vector mean;
    Matrix cov;
    double existence = 0.0;  ///< total weight of components containing the label
};

/// rho(n) = total weight of components with n labels.
inline std::vector<double> cardinality_distribution(const GlmbDensity& density) {
    std::size_t n_max = 0;
    for (const auto& c : density.components) n_max = std::max(n_max, c.cardinality());
    std::vector<double> rho(n_max + 1, 0.0);
    for (const auto& c : density.components) rho[c.cardinality()] += std::exp(c.log_weight);
    return rho;
}

inline double mean_cardinality(std::span<const double> rho) {
    double s = 0.0;
    for (std::size_t n = 0; n < rho.size(); ++n) s += static_cast<double>(n) * rho[n];
    return s;
}

/// Existence probability of every label present in some component.
inline std::map<Label, double> existence_probabilities(const GlmbDensity& density) {
    std::map<Label, double> out;
    for (const auto& c : density.components) {
        const double w = std::exp(c.log_weight);
        for (const auto& l : c.labels) out[l] += w;
    }
    return out;
}

/// MAP cardinality (ties to the smaller n), then the heaviest component of
/// that cardinality (ties to the earlier component); one moment-matched
/// estimate per label.
inline std::vector<TrackEstimate> extract_estimates(const GlmbDensity& density) {
    std::vector<TrackEstimate> out;
    if (density.components.empty()) return out;
    const auto rho = cardinality_distribution(density);
    std::size_t n_star = 0;
    for (std::size_t n = 1; n < rho.size(); ++n) {
        if (rho[n] > rho[n_star]) n_star = n;
    }
    const GlmbComponent* best = nullptr;
    for (const auto& c : density.components) {
        if (c.cardinality() != n_star) continue;
        if (!best || c.log_weight > best->log_weight ||
            (c.log_weight == best->log_weight && c.labels < best->labels)) {
            best = &c;
        }
    }
    if (!best) return out;
    const auto existence = existence_probabilities(density);
    for (std::size_t i = 0; i < best->labels.size(); ++i) {
        auto g = moment_match(*best->densities[i]);
        out.push_back({best->labels[i], std::move(g.mean), std::move(g.cov),
                       existence.at(best->labels[i])});
    }
    return out;
}

struct PhdTerm {
    double mass = 0.0;
    GaussianMixture density;  ///< weights sum to `mass`
};

/// Mass and weight-blended density of one label over all components.
inline PhdTerm phd(const GlmbDensity& density, const Label& label) {
    PhdTerm out;
    for (const auto& c : density.components) {
        if (!c.contains(label)) continue;
        const double w = std::exp(c.log_weight);
        out.mass += w;
        for (const auto& mc : c.density(label).components) {
            out.density.components.push_back({w * mc.weight, mc.mean, mc.cov});
        }
    }
    return out;
}

}  // namespace sglmb
