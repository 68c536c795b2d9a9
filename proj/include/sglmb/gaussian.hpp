#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sglmb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Gaussian {
    Vector mean;
    Matrix cov;
};

struct MixtureComponent {
    double weight = 1.0;
    Vector mean;
    Matrix cov;
};

/// Weighted sum of Gaussians; the single-object density of one track.
struct GaussianMixture {
    std::vector<MixtureComponent> components;

    GaussianMixture() = default;
    explicit GaussianMixture(const Gaussian& g) { components.push_back({1.0, g.mean, g.cov}); }

    [[nodiscard]] std::size_t size() const { return components.size(); }
    [[nodiscard]] bool empty() const { return components.empty(); }
    [[nodiscard]] Eigen::Index dim() const {
        return components.empty() ? 0 : components.front().mean.size();
    }

    [[nodiscard]] double total_weight() const {
        double s = 0.0;
        for (const auto& c : components) s += c.weight;
        return s;
    }

    /// Rescales weights to sum to one and returns the previous total.
    double normalize() {
        const double s = total_weight();
        if (s > 0.0) {
            for (auto& c : components) c.weight /= s;
        }
        return s;
    }
};

inline void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

/// Symmetric within 1e-9 relative and eigenvalues >= -tol * trace.
inline bool is_valid_covariance(const Matrix& cov, double tol = 1e-9) {
    if (cov.rows() != cov.cols()) return false;
    if (!cov.allFinite()) return false;
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
    Matrix sym = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -tol * std::max(sym.trace(), 1.0);
}

/// log N(x; mean, cov). Throws std::domain_error when cov is not positive definite.
inline double log_normal_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw std::domain_error("log_normal_pdf: covariance is not positive definite");
    }
    const Vector r = x - mean;
    const Vector y = llt.matrixL().solve(r);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * (y.squaredNorm() + log_det +
                   static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

/// log(sum(exp(v))); -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline Gaussian predict(const Gaussian& prior, const Matrix& F, const Matrix& Q) {
    if (F.cols() != prior.mean.size() || F.rows() != Q.rows() || Q.rows() != Q.cols() ||
        prior.cov.rows() != prior.mean.size()) {
        throw std::invalid_argument("predict: dimension mismatch");
    }
    Gaussian out{F * prior.mean, F * prior.cov * F.transpose() + Q};
    symmetrize(out.cov);
    return out;
}

inline GaussianMixture predict(const GaussianMixture& prior, const Matrix& F, const Matrix& Q) {
    GaussianMixture out;
    out.components.reserve(prior.size());
    for (const auto& c : prior.components) {
        auto g = predict(Gaussian{c.mean, c.cov}, F, Q);
        out.components.push_back({c.weight, std::move(g.mean), std::move(g.cov)});
    }
    return out;
}

struct UpdateResult {
    Gaussian posterior;
    double log_likelihood = 0.0;
};

/// Kalman measurement update. log_likelihood = log N(z; H m, H P H' + R).
inline UpdateResult update(const Gaussian& prior, const Vector& z, const Matrix& H,
                           const Matrix& R) {
    if (H.cols() != prior.mean.size() || H.rows() != z.size() || R.rows() != z.size() ||
        R.cols() != z.size()) {
        throw std::invalid_argument("update: dimension mismatch");
    }
    const Matrix PHt = prior.cov * H.transpose();
    Matrix S = H * PHt + R;
    symmetrize(S);
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) {
        throw std::domain_error("update: singular innovation covariance (degenerate model)");
    }
    const Vector innov = z - H * prior.mean;
    const Matrix K = llt.solve(PHt.transpose()).transpose();
    UpdateResult out;
    out.posterior.mean = prior.mean + K * innov;
    out.posterior.cov = prior.cov - K * S * K.transpose();
    symmetrize(out.posterior.cov);
    const Vector y = llt.matrixL().solve(innov);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.log_likelihood = -0.5 * (y.squaredNorm() + log_det +
                                 static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi));
    return out;
}

struct MixtureUpdate {
    GaussianMixture posterior;
    double log_likelihood = 0.0;  ///< log sum_c w_c N(z; H m_c, S_c)
};

inline MixtureUpdate update(const GaussianMixture& prior, const Vector& z, const Matrix& H,
                            const Matrix& R) {
    MixtureUpdate out;
    std::vector<double> logw;
    logw.reserve(prior.size());
    for (const auto& c : prior.components) {
        auto r = update(Gaussian{c.mean, c.cov}, z, H, R);
        logw.push_back(std::log(c.weight) + r.log_likelihood);
        out.posterior.components.push_back({0.0, std::move(r.posterior.mean),
                                            std::move(r.posterior.cov)});
    }
    out.log_likelihood = log_sum_exp(logw);
    for (std::size_t i = 0; i < logw.size(); ++i) {
        out.posterior.components[i].weight = std::exp(logw[i] - out.log_likelihood);
    }
    return out;
}

/// Single Gaussian with the mixture's first two moments.
inline Gaussian moment_match(const GaussianMixture& mix) {
    if (mix.empty()) throw std::invalid_argument("moment_match: empty mixture");
    const double total = mix.total_weight();
    Vector mean = Vector::Zero(mix.dim());
    for (const auto& c : mix.components) mean += (c.weight / total) * c.mean;
    Matrix cov = Matrix::Zero(mix.dim(), mix.dim());
    for (const auto& c : mix.components) {
        const Vector d = c.mean - mean;
        cov += (c.weight / total) * (c.cov + d * d.transpose());
    }
    symmetrize(cov);
    return {std::move(mean), std::move(cov)};
}

struct CappedMixture {
    GaussianMixture mixture;
    double kept_mass = 1.0;  ///< kept weight / input weight before renormalizing
};

/// Drops components below `prune_threshold` (relative to the total weight),
/// keeps at most `max_components` by weight (ties: lower index first) and
/// renormalizes. The heaviest component always survives.
inline CappedMixture cap_mixture(const GaussianMixture& mix, std::size_t max_components,
                                 double prune_threshold) {
    if (max_components < 1) throw std::invalid_argument("cap_mixture: max_components must be >= 1");
    CappedMixture out;
    const double total = mix.total_weight();
    if (mix.empty() || !(total > 0.0)) {
        out.mixture = mix;
        return out;
    }
    std::vector<std::size_t> order(mix.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return mix.components[a].weight > mix.components[b].weight;
    });
    std::vector<std::size_t> keep;
    for (std::size_t idx : order) {
        if (keep.size() >= max_components) break;
        if (!keep.empty() && mix.components[idx].weight / total < prune_threshold) break;
        keep.push_back(idx);
    }
    std::sort(keep.begin(), keep.end());
    double kept = 0.0;
    for (std::size_t idx : keep) {
        out.mixture.components.push_back(mix.components[idx]);
        kept += mix.components[idx].weight;
    }
    out.kept_mass = kept / total;
    out.mixture.normalize();
    return out;
}

/// Additive offset applied to a spawned member's predicted mean.
struct WeightedOffset {
    double weight = 1.0;
    Vector offset;
};

/// Joint Gaussian mixture over the stacked states of one parent's family:
/// the survived parent (if any) first, then each spawned member.
struct FamilyBlock {
    std::size_t members = 0;
    Eigen::Index state_dim = 0;
    GaussianMixture joint;
    double log_evidence = 0.0;

    [[nodiscard]] Eigen::Index offset(std::size_t member) const {
        return static_cast<Eigen::Index>(member) * state_dim;
    }
};

/// Builds the joint predicted density of a parent's survivor and spawns.
///
/// Every member is a linear function of the same parent state x, so the
/// blocks are correlated: cov(member_a, member_b) = F P F' for a != b and the
/// diagonal blocks add Q (survivor) or Q_T (spawn). `offsets_for(m)` returns
/// the spawn offset mixture for a parent component with mean m; each spawned
/// member picks one offset independently, so joint components enumerate
/// parent components x offset choices with product weights.
template <typename OffsetFn>
FamilyBlock build_family(const GaussianMixture& parent, bool survived, std::size_t spawn_count,
                         OffsetFn&& offsets_for, const Matrix& F, const Matrix& Q,
                         const Matrix& QT) {
    const std::size_t members = (survived ? 1 : 0) + spawn_count;
    if (members == 0) throw std::invalid_argument("build_family: empty member set");
    if (parent.empty()) throw std::invalid_argument("build_family: empty parent density");
    const Eigen::Index d = F.rows();
    FamilyBlock fam;
    fam.members = members;
    fam.state_dim = d;
    const Eigen::Index n = d * static_cast<Eigen::Index>(members);

    for (const auto& pc : parent.components) {
        const Vector fm = F * pc.mean;
        Matrix fpf = F * pc.cov * F.transpose();
        symmetrize(fpf);
        std::vector<WeightedOffset> offs;
        if (spawn_count > 0) offs = offsets_for(pc.mean);
        if (spawn_count > 0 && offs.empty()) {
            throw std::invalid_argument("build_family: spawn offset model is empty");
        }
        // Odometer over offset choices, one digit per spawned member.
        std::vector<std::size_t> choice(spawn_count, 0);
        while (true) {
            MixtureComponent jc;
            jc.weight = pc.weight;
            jc.mean.resize(n);
            jc.cov.resize(n, n);
            for (std::size_t a = 0; a < members; ++a) {
                for (std::size_t b = 0; b < members; ++b) {
                    jc.cov.block(d * a, d * b, d, d) = fpf;
                }
            }
            std::size_t m = 0;
            if (survived) {
                jc.mean.segment(0, d) = fm;
                jc.cov.block(0, 0, d, d) += Q;
                ++m;
            }
            for (std::size_t s = 0; s < spawn_count; ++s, ++m) {
                const auto& o = offs[choice[s]];
                jc.weight *= o.weight;
                jc.mean.segment(d * m, d) = fm + o.offset;
                jc.cov.block(d * m, d * m, d, d) += QT;
            }
            fam.joint.components.push_back(std::move(jc));

            std::size_t pos = 0;
            while (pos < spawn_count && ++choice[pos] == offs.size()) choice[pos++] = 0;
            if (pos == spawn_count) break;
        }
    }
    fam.joint.normalize();
    return fam;
}

/// Conditions the family joint on the measurements assigned to its members
/// (nullopt = missed). The Gaussian evidence log sum_c w_c N(z; H_s m_c, S_c)
/// is added to `log_evidence`; weights are renormalized.
inline FamilyBlock update_family(const FamilyBlock& family,
                                 std::span<const std::optional<Vector>> assigned,
                                 const Matrix& H, const Matrix& R) {
    if (assigned.size() != family.members) {
        throw std::invalid_argument("update_family: one assignment per member required");
    }
    std::vector<std::size_t> detected;
    for (std::size_t i = 0; i < assigned.size(); ++i) {
        if (assigned[i]) detected.push_back(i);
    }
    if (detected.empty()) return family;

    const Eigen::Index d = family.state_dim;
    const Eigen::Index mz = H.rows();
    const Eigen::Index n = d * static_cast<Eigen::Index>(family.members);
    const Eigen::Index nz = mz * static_cast<Eigen::Index>(detected.size());
    Matrix Hs = Matrix::Zero(nz, n);
    Matrix Rs = Matrix::Zero(nz, nz);
    Vector zs(nz);
    for (std::size_t k = 0; k < detected.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k) * mz;
        Hs.block(r, family.offset(detected[k]), mz, d) = H;
        Rs.block(r, r, mz, mz) = R;
        zs.segment(r, mz) = *assigned[detected[k]];
    }

    FamilyBlock out = family;
    std::vector<double> logw;
    logw.reserve(family.joint.size());
    for (std::size_t c = 0; c < family.joint.size(); ++c) {
        const auto& jc = family.joint.components[c];
        auto r = update(Gaussian{jc.mean, jc.cov}, zs, Hs, Rs);
        logw.push_back(std::log(jc.weight) + r.log_likelihood);
        out.joint.components[c].mean = std::move(r.posterior.mean);
        out.joint.components[c].cov = std::move(r.posterior.cov);
    }
    const double lse = log_sum_exp(logw);
    for (std::size_t c = 0; c < logw.size(); ++c) {
        out.joint.components[c].weight = std::exp(logw[c] - lse);
    }
    out.log_evidence = family.log_evidence + lse;
    return out;
}

struct Marginal {
    GaussianMixture mixture;  ///< normalized
    double mass = 1.0;        ///< weight before normalizing
};

/// Per-component block selection of one member; weights are carried over.
inline Marginal marginalize(const FamilyBlock& family, std::size_t member) {
    if (member >= family.members) {
        throw std::out_of_range("marginalize: member index " + std::to_string(member) +
                                " out of range");
    }
    const Eigen::Index d = family.state_dim;
    const Eigen::Index o = family.offset(member);
    Marginal out;
    out.mixture.components.reserve(family.joint.size());
    for (const auto& jc : family.joint.components) {
        out.mixture.components.push_back(
            {jc.weight, jc.mean.segment(o, d), jc.cov.block(o, o, d, d)});
    }
    out.mass = out.mixture.normalize();
    return out;
}

}  // namespace sglmb
