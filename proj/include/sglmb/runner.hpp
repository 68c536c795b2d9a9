#pragma once

#include "sglmb/config.hpp"
#include "sglmb/estimation.hpp"
#include "sglmb/glmb.hpp"
#include "sglmb/metrics.hpp"
#include "sglmb/simulator.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace sglmb {

/// Structural checks applied to a posterior density. Returns one message per
/// violation.
inline std::vector<std::string> check_invariants(const GlmbDensity& density, double tol = 1e-9) {
    std::vector<std::string> out;
    const auto where = [&](std::size_t h) {
        return "scan " + std::to_string(density.scan_time) + " component " + std::to_string(h) + ": ";
    };
    const double total = density.total_weight();
    if (!(std::abs(total - 1.0) <= tol)) {
        out.push_back("scan " + std::to_string(density.scan_time) + ": weights sum to " +
                      std::to_string(total));
    }
    for (std::size_t h = 0; h < density.components.size(); ++h) {
        const auto& c = density.components[h];
        if (c.densities.size() != c.labels.size()) out.push_back(where(h) + "density count mismatch");
        for (std::size_t i = 1; i < c.labels.size(); ++i) {
            if (!(c.labels[i - 1] < c.labels[i])) out.push_back(where(h) + "labels not distinct/sorted");
        }
        std::vector<Label> prev_labels;
        if (c.history && c.history->prev) {
            for (const auto& [l, j] : c.history->prev->theta) prev_labels.push_back(l);
        }
        for (std::size_t i = 0; i < c.labels.size(); ++i) {
            const auto& l = c.labels[i];
            if (l.generation() > 0 && l.last_time() == density.scan_time) {
                const auto parent = *l.ancestor();
                if (std::find(prev_labels.begin(), prev_labels.end(), parent) == prev_labels.end()) {
                    out.push_back(where(h) + "spawn " + l.to_string() + " without parent in prior");
                }
            }
            if (!c.densities[i] || c.densities[i]->empty()) {
                out.push_back(where(h) + "empty density for " + l.to_string());
                continue;
            }
            if (std::abs(c.densities[i]->total_weight() - 1.0) > tol) {
                out.push_back(where(h) + "density of " + l.to_string() + " not normalized");
            }
            for (const auto& mc : c.densities[i]->components) {
                if (!is_valid_covariance(mc.cov)) {
                    out.push_back(where(h) + "covariance of " + l.to_string() + " not PSD");
                }
            }
        }
    }
    const auto rho = cardinality_distribution(density);
    double phd_mass = 0.0;
    for (const auto& [l, r] : existence_probabilities(density)) phd_mass += r;
    if (std::abs(phd_mass - mean_cardinality(rho)) > tol) {
        out.push_back("scan " + std::to_string(density.scan_time) + ": PHD mass differs from mean cardinality");
    }
    return out;
}

struct TrialResult {
    int trial = 0;
    EstimateHistory estimates;       ///< estimates[k - 1]
    std::vector<double> cardinality; ///< estimated object count per scan
    std::vector<OspaResult> ospa;
    std::vector<ScanDiagnostics> diagnostics;
    std::vector<std::string> violations;
    std::vector<AncestryRecord> ancestry;
    double wall_seconds = 0.0;
};

inline std::uint64_t filter_seed(std::uint64_t master, int trial, int scan) {
    return derive_seed(master, StreamTag::gibbs,
                       {static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(scan)});
}

inline AncestryConfig ancestry_config(const Scenario& s) {
    AncestryConfig cfg;
    for (const auto& r : s.models.birth.regions) {
        if (r.density.empty()) continue;
        cfg.birth_means.push_back(moment_match(r.density).mean);
    }
    cfg.gate = 3.0 * s.sigma_b;
    cfg.match_radius = s.ospa.c;
    return cfg;
}

/// One filter run over freshly simulated measurements.
inline TrialResult run_trial(const Scenario& s, const Truth& truth, std::uint64_t seed, int trial,
                             bool check = true) {
    const auto t0 = std::chrono::steady_clock::now();
    TrialResult r;
    r.trial = trial;
    const auto scans = generate_scans(truth, s.models.sensor, seed, static_cast<std::uint64_t>(trial));
    GlmbDensity density = GlmbDensity::empty(0);
    for (const auto& scan : scans) {
        ScanDiagnostics d;
        density = joint_predict_update(density, scan.measurements, s.models, s.filter,
                                       filter_seed(seed, trial, scan.time), &d);
        if (check) {
            for (auto& v : check_invariants(density)) r.violations.push_back(std::move(v));
        }
        auto est = extract_estimates(density);
        std::vector<Vector> xs, ys;
        for (const auto& e : est) xs.push_back(e.mean.head(2));
        for (const auto* t : truth.alive(scan.time)) ys.push_back(t->state(scan.time).head(2));
        r.ospa.push_back(ospa(xs, ys, s.ospa));
        r.cardinality.push_back(static_cast<double>(est.size()));
        r.estimates.push_back(std::move(est));
        r.diagnostics.push_back(d);
    }
    r.ancestry = ancestry_analysis(trial, r.estimates, truth, ancestry_config(s));
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Runs `trials` independent trials on `threads` workers. Results are stored
/// by trial index, so the output does not depend on the thread count.
inline std::vector<TrialResult> run_monte_carlo(const Scenario& s, const Truth& truth, int trials,
                                                std::uint64_t seed, unsigned threads,
                                                bool check = true,
                                                const std::function<void(const TrialResult&)>& on_done = {}) {
    std::vector<TrialResult> results(static_cast<std::size_t>(std::max(trials, 0)));
    std::atomic<int> next{0};
    std::mutex mu;
    std::exception_ptr failure;
    auto worker = [&] {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= trials) return;
            try {
                auto r = run_trial(s, truth, seed, i, check);
                std::lock_guard lock(mu);
                if (on_done) on_done(r);
                results[static_cast<std::size_t>(i)] = std::move(r);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                next = trials;
            }
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max(trials, 1))));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

// ---- output -----------------------------------------------------------------

inline void write_cardinality_csv(std::ostream& os, const std::vector<TrialResult>& results,
                                  const Truth& truth) {
    std::vector<std::vector<double>> runs;
    for (const auto& r : results) runs.push_back(r.cardinality);
    const auto stats = cardinality_stats(runs);
    os << "scan,truth,mean,std\n" << std::fixed << std::setprecision(6);
    for (std::size_t k = 0; k < stats.mean.size(); ++k) {
        const int scan = static_cast<int>(k) + 1;
        os << scan << ',' << truth.cardinality(scan) << ',' << stats.mean[k] << ',' << stats.stddev[k] << '\n';
    }
}

struct MeanOspa {
    std::vector<double> total, loc, card;
};

inline MeanOspa mean_ospa(const std::vector<TrialResult>& results) {
    MeanOspa m;
    if (results.empty()) return m;
    const std::size_t n = results.front().ospa.size();
    m.total.assign(n, 0.0);
    m.loc.assign(n, 0.0);
    m.card.assign(n, 0.0);
    for (const auto& r : results) {
        for (std::size_t k = 0; k < n; ++k) {
            m.total[k] += r.ospa[k].total;
            m.loc[k] += r.ospa[k].localization;
            m.card[k] += r.ospa[k].cardinality;
        }
    }
    const double t = static_cast<double>(results.size());
    for (std::size_t k = 0; k < n; ++k) {
        m.total[k] /= t;
        m.loc[k] /= t;
        m.card[k] /= t;
    }
    return m;
}

inline void write_ospa_csv(std::ostream& os, const std::vector<TrialResult>& results) {
    const auto m = mean_ospa(results);
    os << "scan,total,loc,card\n" << std::fixed << std::setprecision(6);
    for (std::size_t k = 0; k < m.total.size(); ++k) {
        os << k + 1 << ',' << m.total[k] << ',' << m.loc[k] << ',' << m.card[k] << '\n';
    }
}

inline void write_ancestry_csv(std::ostream& os, const std::vector<TrialResult>& results) {
    auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
    os << "run,region,birth_time,death_time,gen1_spawn_time,gen2_spawn_time,origin_error,"
          "label_switch,no_spawn\n";
    for (const auto& r : results) {
        for (const auto& a : r.ancestry) {
            os << a.run << ',' << a.region << ',' << opt(a.birth_time) << ',' << opt(a.death_time) << ','
               << opt(a.gen1_spawn_time) << ',' << opt(a.gen2_spawn_time) << ',' << int(a.origin_error)
               << ',' << int(a.label_switch) << ',' << int(a.no_spawn) << '\n';
        }
    }
}

/// scan,label,x,y,vx,vy,existence
inline void write_trial_csv(std::ostream& os, const TrialResult& r) {
    os << "scan,label,x,y,vx,vy,existence\n" << std::fixed << std::setprecision(6);
    for (std::size_t k = 0; k < r.estimates.size(); ++k) {
        for (const auto& e : r.estimates[k]) {
            os << k + 1 << ",\"" << e.label.to_string() << "\"," << e.mean(0) << ',' << e.mean(1) << ','
               << e.mean(2) << ',' << e.mean(3) << ',' << e.existence << '\n';
        }
    }
}

/// One JSON object per scan.
inline void write_diagnostics_jsonl(std::ostream& os, const TrialResult& r) {
    for (const auto& d : r.diagnostics) {
        nlohmann::json j{{"trial", r.trial},
                         {"scan", d.scan},
                         {"prior_components", d.prior_components},
                         {"candidates", d.candidates},
                         {"aggregated", d.aggregated},
                         {"components", d.components},
                         {"ess", d.ess},
                         {"discarded_mass", d.discarded_mass},
                         {"sweeps", d.sweeps}};
        os << j.dump() << '\n';
    }
}

}  // namespace sglmb
