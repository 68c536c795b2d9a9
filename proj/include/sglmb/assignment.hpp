#pragma once

#include "sglmb/gaussian.hpp"
#include "sglmb/labels.hpp"
#include "sglmb/models.hpp"
#include "sglmb/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sglmb {

enum class RowKind { birth, survive, spawn };

/// Association vector: gamma[i] = -1 (absent), 0 (missed) or j >= 1
/// (measurement j). Positive entries are unique.
using AssocVector = std::vector<int>;

/// Per-row, per-association weights eta_i(j), j in {-1, 0, 1..m}.
/// Column c of `eta` holds j = c - 1.
struct CostTable {
    std::vector<Label> labels;
    std::vector<RowKind> kinds;
    Matrix eta;

    [[nodiscard]] std::size_t rows() const { return labels.size(); }
    [[nodiscard]] int measurements() const { return static_cast<int>(eta.cols()) - 2; }
    [[nodiscard]] double at(std::size_t row, int j) const {
        return eta(static_cast<Eigen::Index>(row), j + 1);
    }
};

inline bool is_positive_one_to_one(const AssocVector& gamma, int measurements) {
    std::vector<char> used(static_cast<std::size_t>(std::max(measurements, 0)) + 1, 0);
    for (int g : gamma) {
        if (g < -1 || g > measurements) return false;
        if (g >= 1) {
            if (used[static_cast<std::size_t>(g)]) return false;
            used[static_cast<std::size_t>(g)] = 1;
        }
    }
    return true;
}

/// log prod_i eta_i(gamma_i).
inline double log_weight(const CostTable& table, const AssocVector& gamma) {
    double s = 0.0;
    for (std::size_t i = 0; i < gamma.size(); ++i) s += std::log(table.at(i, gamma[i]));
    return s;
}

/// log sum_c w_c N(z_j; H m_c, H P_c H' + R) for every measurement.
inline std::vector<double> log_detection_likelihoods(const GaussianMixture& predicted,
                                                     std::span<const Vector> measurements,
                                                     const Matrix& H, const Matrix& R) {
    const std::size_t m = measurements.size();
    std::vector<double> out(m, -std::numeric_limits<double>::infinity());
    if (m == 0) return out;
    std::vector<std::vector<double>> terms(m);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (const auto& c : predicted.components) {
        const Vector hm = H * c.mean;
        Matrix S = H * c.cov * H.transpose() + R;
        symmetrize(S);
        Eigen::LLT<Matrix> llt(S);
        if (llt.info() != Eigen::Success) {
            throw std::domain_error("cost table: singular innovation covariance");
        }
        const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const double base = std::log(c.weight) -
                            0.5 * (log_det + static_cast<double>(hm.size()) * log2pi);
        for (std::size_t j = 0; j < m; ++j) {
            const Vector y = llt.matrixL().solve(measurements[j] - hm);
            terms[j].push_back(base - 0.5 * y.squaredNorm());
        }
    }
    for (std::size_t j = 0; j < m; ++j) out[j] = log_sum_exp(terms[j]);
    return out;
}

/// Description of one cost-table row: the label, its kind, the existence
/// probability (r_B, mean p_S or mean p_T, already tempered and clamped) and
/// the predicted single-object density the detection terms integrate against.
struct CostRowSpec {
    Label label;
    RowKind kind = RowKind::survive;
    double existence = 0.5;
    const GaussianMixture* predicted = nullptr;
};

/// psi~(j) for j = 0..m: the missed-detection mass and p_D g / kappa integrals.
inline std::vector<double> detection_terms(const GaussianMixture& predicted,
                                           std::span<const Vector> measurements,
                                           const SensorModel& sensor, double p_d) {
    std::vector<double> psi(measurements.size() + 1);
    psi[0] = 1.0 - p_d;
    const auto ll = log_detection_likelihoods(predicted, measurements, sensor.H, sensor.R);
    for (std::size_t j = 0; j < measurements.size(); ++j) {
        const double log_kappa = sensor.clutter_loglik(measurements[j]);
        if (!std::isfinite(log_kappa)) {
            throw std::invalid_argument("cost table: measurement outside the clutter region");
        }
        psi[j + 1] = std::exp(std::log(p_d) + ll[j] - log_kappa);
    }
    return psi;
}

/// eta row from an existence probability and detection terms psi~(0..m).
inline Eigen::RowVectorXd cost_row(double existence, std::span<const double> psi) {
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(psi.size()) + 1);
    row(0) = 1.0 - existence;
    for (std::size_t j = 0; j < psi.size(); ++j) {
        row(static_cast<Eigen::Index>(j) + 1) = existence * psi[j];
    }
    return row;
}

inline double clamp_probability(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

/// Assembles the table from row specifications (already in canonical order).
inline CostTable build_cost_table(std::span<const CostRowSpec> rows,
                                  std::span<const Vector> measurements,
                                  const SensorModel& sensor, double p_d) {
    CostTable t;
    const auto m = static_cast<Eigen::Index>(measurements.size());
    t.eta.resize(static_cast<Eigen::Index>(rows.size()), m + 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].predicted) throw std::invalid_argument("cost table: row without density");
        const auto psi = detection_terms(*rows[i].predicted, measurements, sensor, p_d);
        t.eta.row(static_cast<Eigen::Index>(i)) = cost_row(rows[i].existence, psi);
        t.labels.push_back(rows[i].label);
        t.kinds.push_back(rows[i].kind);
    }
    return t;
}

struct Temper {
    double survival = 0.9;
    double detection = 0.9;
    bool spawn = false;
};

/// A track of the prior component: its label and current density.
struct TrackView {
    Label label;
    const GaussianMixture* density = nullptr;
};

/// Cost table of one prior component: births, then its labels, then their
/// spawn labels grouped by parent. Predicted densities are computed here; the filter uses a
/// cached variant of the same construction.
inline CostTable build_cost_table(std::span<const TrackView> tracks, int next_time,
                                  std::span<const Vector> measurements, const ModelBundle& models,
                                  const Temper& temper, double clamp_eps = 1e-6) {
    std::vector<GaussianMixture> storage;
    storage.reserve(models.birth.regions.size() + 2 * tracks.size() *
                                                      static_cast<std::size_t>(std::max(1, models.spawn.per_parent)));
    std::vector<CostRowSpec> rows;
    std::vector<std::pair<Label, std::size_t>> births;
    for (const auto& r : models.birth.regions) {
        storage.push_back(r.density);
        rows.push_back({Label::birth(next_time, r.label_index), RowKind::birth,
                        clamp_probability(r.r_b, clamp_eps), &storage.back()});
    }
    std::sort(rows.begin(), rows.end(),
              [](const CostRowSpec& a, const CostRowSpec& b) { return a.label < b.label; });
    std::vector<TrackView> sorted(tracks.begin(), tracks.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const TrackView& a, const TrackView& b) { return a.label < b.label; });
    const double p_s = clamp_probability(temper.survival * models.survival.p_s, clamp_eps);
    for (const auto& tr : sorted) {
        storage.push_back(predict(*tr.density, models.motion.F, models.motion.Q));
        rows.push_back({tr.label, RowKind::survive, p_s, &storage.back()});
    }
    if (models.spawn.enabled()) {
        const double p_t = clamp_probability(
            (temper.spawn ? temper.survival : 1.0) * models.spawn.p_t, clamp_eps);
        std::vector<CostRowSpec> spawn_rows;
        for (const auto& tr : sorted) {
            GaussianMixture spawn_pred;
            for (const auto& c : tr.density->components) {
                const Vector fm = models.motion.F * c.mean;
                Matrix cov = models.motion.F * c.cov * models.motion.F.transpose() + models.spawn.QT;
                symmetrize(cov);
                for (const auto& o : models.spawn.offsets_for(c.mean)) {
                    spawn_pred.components.push_back({c.weight * o.weight, fm + o.offset, cov});
                }
            }
            storage.push_back(std::move(spawn_pred));
            for (int j = 1; j <= models.spawn.per_parent; ++j) {
                spawn_rows.push_back(
                    {tr.label.spawn(next_time, j), RowKind::spawn, p_t, &storage.back()});
            }
        }
        rows.insert(rows.end(), spawn_rows.begin(), spawn_rows.end());
    }
    const double p_d = clamp_probability(temper.detection * models.sensor.p_d, clamp_eps);
    return build_cost_table(rows, measurements, models.sensor, p_d);
}

/// Births and spawns absent, survivors missed: always a valid vector.
inline AssocVector initial_vector(const CostTable& table) {
    AssocVector g(table.rows());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = table.kinds[i] == RowKind::survive ? 0 : -1;
    return g;
}

/// Gibbs sampler over positive 1-1 vectors with target prod_i eta_i(gamma_i).
///
/// Starts from `init` and returns the state after each of `iterations` full
/// sweeps. A sweep resamples every row in turn from its conditional, i.e.
/// eta_i(j) restricted to j in {-1, 0} and the measurements not held by
/// another row.
inline std::vector<AssocVector> gibbs_sample(const CostTable& table, AssocVector init,
                                             std::size_t iterations, Rng& rng) {
    const int m = table.measurements();
    const std::size_t P = table.rows();
    if (init.size() != P || !is_positive_one_to_one(init, m)) {
        throw std::invalid_argument("gibbs_sample: init is not a positive 1-1 vector of the table");
    }
    std::vector<AssocVector> out;
    if (iterations == 0) return out;
    out.reserve(iterations);
    std::vector<int> owner(static_cast<std::size_t>(m) + 1, -1);
    for (std::size_t i = 0; i < P; ++i) {
        if (init[i] >= 1) owner[static_cast<std::size_t>(init[i])] = static_cast<int>(i);
    }
    AssocVector cur = std::move(init);
    std::vector<double> cdf(static_cast<std::size_t>(m) + 2);
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < P; ++i) {
            if (cur[i] >= 1) owner[static_cast<std::size_t>(cur[i])] = -1;
            double acc = 0.0;
            for (int j = -1; j <= m; ++j) {
                const bool free = j < 1 || owner[static_cast<std::size_t>(j)] < 0;
                acc += free ? table.at(i, j) : 0.0;
                cdf[static_cast<std::size_t>(j + 1)] = acc;
            }
            if (!(acc > 0.0)) {
                throw std::domain_error("gibbs_sample: row " + std::to_string(i) +
                                        " has no admissible association");
            }
            const double u = uniform01(rng) * acc;
            int pick = m;
            for (int j = -1; j <= m; ++j) {
                if (u < cdf[static_cast<std::size_t>(j + 1)]) {
                    pick = j;
                    break;
                }
            }
            // Guard against landing on a zero-width bin at the end of the cdf.
            while (pick >= 1 && (owner[static_cast<std::size_t>(pick)] >= 0 || table.at(i, pick) <= 0.0)) --pick;
            cur[i] = pick;
            if (pick >= 1) owner[static_cast<std::size_t>(pick)] = static_cast<int>(i);
        }
        out.push_back(cur);
    }
    return out;
}

/// Every positive 1-1 vector with non-zero weight, in lexicographic order.
/// Throws std::length_error past `limit` vectors.
inline std::vector<AssocVector> enumerate_vectors(const CostTable& table,
                                                  std::size_t limit = 1'000'000) {
    const int m = table.measurements();
    const std::size_t P = table.rows();
    std::vector<AssocVector> out;
    AssocVector cur(P, -1);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    auto rec = [&](auto&& self, std::size_t i) -> void {
        if (i == P) {
            if (out.size() >= limit) throw std::length_error("enumerate_vectors: limit exceeded");
            out.push_back(cur);
            return;
        }
        for (int j = -1; j <= m; ++j) {
            if (j >= 1 && used[static_cast<std::size_t>(j)]) continue;
            if (!(table.at(i, j) > 0.0)) continue;
            cur[i] = j;
            if (j >= 1) used[static_cast<std::size_t>(j)] = 1;
            self(self, i + 1);
            if (j >= 1) used[static_cast<std::size_t>(j)] = 0;
        }
    };
    rec(rec, 0);
    return out;
}

struct AssocVectorHash {
    std::size_t operator()(const AssocVector& v) const noexcept {
        std::size_t h = 0x84222325cbf29ce4ULL;
        for (int x : v) h = (h ^ static_cast<std::size_t>(x + 2)) * 0x100000001b3ULL;
        return h;
    }
};

struct UniqueResult {
    std::vector<AssocVector> distinct;  ///< first-occurrence order
    std::vector<std::size_t> counts;
    std::vector<std::size_t> index_of;  ///< input position -> index into distinct
};

/// Stable de-duplication with exact equality on the full vector.
inline UniqueResult unique(std::span<const AssocVector> vectors) {
    UniqueResult r;
    std::unordered_map<AssocVector, std::size_t, AssocVectorHash> seen;
    r.index_of.reserve(vectors.size());
    for (const auto& v : vectors) {
        auto [it, inserted] = seen.try_emplace(v, r.distinct.size());
        if (inserted) {
            r.distinct.push_back(v);
            r.counts.push_back(0);
        }
        ++r.counts[it->second];
        r.index_of.push_back(it->second);
    }
    return r;
}

/// (I+, theta+) recovered from a vector: the rows with gamma >= 0.
struct Hypothesis {
    std::vector<std::size_t> rows;
    std::vector<Label> labels;
    std::vector<int> assignment;
};

inline Hypothesis gamma_to_hypothesis(const CostTable& table, const AssocVector& gamma) {
    if (gamma.size() != table.rows()) {
        throw std::invalid_argument("gamma_to_hypothesis: length mismatch");
    }
    Hypothesis h;
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        if (gamma[i] >= 0) {
            h.rows.push_back(i);
            h.labels.push_back(table.labels[i]);
            h.assignment.push_back(gamma[i]);
        }
    }
    return h;
}

inline AssocVector hypothesis_to_gamma(const CostTable& table, const Hypothesis& h) {
    AssocVector g(table.rows(), -1);
    for (std::size_t k = 0; k < h.labels.size(); ++k) {
        auto it = std::find(table.labels.begin(), table.labels.end(), h.labels[k]);
        if (it == table.labels.end()) {
            throw std::invalid_argument("hypothesis_to_gamma: label " + h.labels[k].to_string() +
                                        " is not a row of the table");
        }
        g[static_cast<std::size_t>(it - table.labels.begin())] = h.assignment[k];
    }
    return g;
}

struct AssignmentSolution {
    std::vector<int> col_of_row;
    double cost = 0.0;
    bool feasible = false;
};

/// Cost entries at or above this value are treated as forbidden.
inline constexpr double kForbiddenCost = 1e15;

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// shortest augmenting path with potentials.
inline AssignmentSolution solve_assignment(const Matrix& cost) {
    const auto n = static_cast<int>(cost.rows());
    const auto m = static_cast<int>(cost.cols());
    AssignmentSolution sol;
    if (n == 0) {
        sol.feasible = true;
        return sol;
    }
    if (n > m) throw std::invalid_argument("solve_assignment: more rows than columns");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    auto c = [&](int i, int j) {
        const double x = cost(i - 1, j - 1);
        return std::isfinite(x) ? std::min(x, kForbiddenCost) : kForbiddenCost;
    };
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = c(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    sol.col_of_row.assign(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= m; ++j) {
        if (p[j]) sol.col_of_row[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    }
    sol.feasible = true;
    for (int i = 0; i < n; ++i) {
        const double x = cost(i, sol.col_of_row[static_cast<std::size_t>(i)]);
        if (!std::isfinite(x) || x >= kForbiddenCost) sol.feasible = false;
        sol.cost += x;
    }
    return sol;
}

struct RankedVector {
    AssocVector gamma;
    double log_weight = 0.0;
};

/// Exact k best positive 1-1 vectors by prod eta (Murty's partitioning over
/// an assignment problem with one private "absent" and one private "missed"
/// column per row). Ties are ordered lexicographically by gamma. Intended as
/// a test oracle at desk scale.
inline std::vector<RankedVector> murty_topk(const CostTable& table, std::size_t k) {
    if (k < 1) throw std::invalid_argument("murty_topk: k must be >= 1");
    const int m = table.measurements();
    const auto P = static_cast<int>(table.rows());
    std::vector<RankedVector> out;
    if (P == 0) {
        out.push_back({{}, 0.0});
        return out;
    }
    const int cols = m + 2 * P;
    const double inf = std::numeric_limits<double>::infinity();
    Matrix base = Matrix::Constant(P, cols, inf);
    for (int i = 0; i < P; ++i) {
        for (int j = 1; j <= m; ++j) base(i, j - 1) = -std::log(table.at(static_cast<std::size_t>(i), j));
        base(i, m + 2 * i) = -std::log(table.at(static_cast<std::size_t>(i), -1));
        base(i, m + 2 * i + 1) = -std::log(table.at(static_cast<std::size_t>(i), 0));
    }
    auto to_gamma = [&](const std::vector<int>& col_of_row) {
        AssocVector g(static_cast<std::size_t>(P));
        for (int i = 0; i < P; ++i) {
            const int c = col_of_row[static_cast<std::size_t>(i)];
            g[static_cast<std::size_t>(i)] = c < m ? c + 1 : ((c - m) % 2 == 0 ? -1 : 0);
        }
        return g;
    };
    struct Node {
        Matrix cost;
        AssignmentSolution sol;
        int fixed_rows = 0;  ///< rows [0, fixed_rows) are forced to sol's columns
    };
    auto cmp = [](const Node& a, const Node& b) { return a.sol.cost > b.sol.cost; };
    std::priority_queue<Node, std::vector<Node>, decltype(cmp)> queue(cmp);
    {
        Node root{base, solve_assignment(base), 0};
        if (root.sol.feasible) queue.push(std::move(root));
    }
    std::vector<std::pair<double, AssocVector>> found;
    double kth_cost = inf;
    while (!queue.empty()) {
        Node node = queue.top();
        queue.pop();
        if (found.size() >= k && node.sol.cost > kth_cost + 1e-12 * std::max(1.0, std::abs(kth_cost))) break;
        found.emplace_back(node.sol.cost, to_gamma(node.sol.col_of_row));
        if (found.size() == k) kth_cost = node.sol.cost;
        // Partition the node's remaining space around its solution.
        Matrix cost = node.cost;
        for (int r = node.fixed_rows; r < P; ++r) {
            Matrix child = cost;
            const int col = node.sol.col_of_row[static_cast<std::size_t>(r)];
            child(r, col) = inf;
            auto sol = solve_assignment(child);
            if (sol.feasible) queue.push(Node{child, std::move(sol), r});
            // Force row r onto its column for the following children.
            for (int j = 0; j < cols; ++j) {
                if (j != col) cost(r, j) = inf;
            }
            for (int i = 0; i < P; ++i) {
                if (i != r) cost(i, col) = inf;
            }
        }
    }
    std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    if (found.size() > k) found.resize(k);
    for (auto& [c, g] : found) out.push_back({std::move(g), -c});
    return out;
}

}  // namespace sglmb
