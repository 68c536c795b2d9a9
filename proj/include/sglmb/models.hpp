#pragma once

#include "sglmb/gaussian.hpp"
#include "sglmb/random.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace sglmb {

/// Nearly-constant-velocity dynamics on [px, py, vx, vy].
struct MotionModel {
    Matrix F;
    Matrix Q;
    double dt = 1.0;

    static MotionModel constant_velocity(double dt, double sigma_v) {
        MotionModel m;
        m.dt = dt;
        const Matrix I2 = Matrix::Identity(2, 2);
        m.F = Matrix::Identity(4, 4);
        m.F.block(0, 2, 2, 2) = dt * I2;
        const double s2 = sigma_v * sigma_v;
        m.Q.resize(4, 4);
        m.Q.block(0, 0, 2, 2) = s2 * std::pow(dt, 4) / 4.0 * I2;
        m.Q.block(0, 2, 2, 2) = s2 * std::pow(dt, 3) / 2.0 * I2;
        m.Q.block(2, 0, 2, 2) = s2 * std::pow(dt, 3) / 2.0 * I2;
        m.Q.block(2, 2, 2, 2) = s2 * dt * dt * I2;
        return m;
    }
};

struct BirthRegion {
    double r_b = 0.02;
    GaussianMixture density;
    int label_index = 1;
};

struct BirthModel {
    std::vector<BirthRegion> regions;
};

struct SurvivalModel {
    double p_s = 0.99;
};

/// One spawn direction: `distance` metres from the parent's predicted
/// position, at `bearing` radians relative to the parent's heading.
struct SpawnOffsetSpec {
    double distance = 70.0;
    double bearing = 0.0;
    double weight = 1.0;
};

namespace detail {
inline std::atomic<std::size_t>& zero_speed_warning_count() {
    static std::atomic<std::size_t> count{0};
    return count;
}
}  // namespace detail

/// Number of times spawn_offset fell back to heading 0 for a parent at rest.
inline std::size_t zero_speed_warnings() { return detail::zero_speed_warning_count().load(); }

/// d_T = [dist cos(h + b), dist sin(h + b), -vx, -vy] where h is the parent's
/// heading. A parent at rest (speed < 1e-12) is assigned heading 0.
inline Vector spawn_offset(const Vector& parent_state, double relative_bearing, double distance) {
    if (parent_state.size() != 4) throw std::invalid_argument("spawn_offset: expected a 4-vector");
    const double vx = parent_state(2);
    const double vy = parent_state(3);
    double heading = 0.0;
    if (std::hypot(vx, vy) < 1e-12) {
        if (detail::zero_speed_warning_count().fetch_add(1) == 0) {
            std::clog << "sglmb: warning: spawn offset requested for a parent at rest; "
                         "using heading 0\n";
        }
    } else {
        heading = std::atan2(vy, vx);
    }
    Vector d(4);
    d << distance * std::cos(heading + relative_bearing),
        distance * std::sin(heading + relative_bearing), -vx, -vy;
    return d;
}

struct SpawnModel {
    double p_t = 0.01;
    std::vector<SpawnOffsetSpec> offsets;
    Matrix QT;
    int per_parent = 1;

    [[nodiscard]] bool enabled() const { return p_t > 0.0 && per_parent > 0 && !offsets.empty(); }

    /// Normalized offset mixture for a parent component with mean `parent_mean`.
    [[nodiscard]] std::vector<WeightedOffset> offsets_for(const Vector& parent_mean) const {
        double total = 0.0;
        for (const auto& o : offsets) total += o.weight;
        std::vector<WeightedOffset> out;
        out.reserve(offsets.size());
        for (const auto& o : offsets) {
            out.push_back({o.weight / total, spawn_offset(parent_mean, o.bearing, o.distance)});
        }
        return out;
    }
};

struct Rect {
    double xmin = -1000.0;
    double xmax = 1000.0;
    double ymin = -1000.0;
    double ymax = 1000.0;

    [[nodiscard]] double area() const { return (xmax - xmin) * (ymax - ymin); }
    [[nodiscard]] bool contains(const Vector& z) const {
        return z.size() >= 2 && z(0) >= xmin && z(0) <= xmax && z(1) >= ymin && z(1) <= ymax;
    }
};

/// Linear-Gaussian position sensor with uniform Poisson clutter.
struct SensorModel {
    Matrix H;
    Matrix R;
    double p_d = 0.88;
    double clutter_rate = 66.0;  ///< expected clutter count per scan
    Rect region;

    /// log kappa(z): log(rate / area) inside the region, -inf outside.
    [[nodiscard]] double clutter_loglik(const Vector& z) const {
        if (!region.contains(z) || clutter_rate <= 0.0) {
            return -std::numeric_limits<double>::infinity();
        }
        return std::log(clutter_rate / region.area());
    }

    [[nodiscard]] std::vector<Vector> sample_clutter(Rng& rng) const {
        std::vector<Vector> out;
        if (clutter_rate <= 0.0) return out;
        std::poisson_distribution<int> count(clutter_rate);
        const int n = count(rng);
        out.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            Vector z(2);
            z(0) = region.xmin + uniform01(rng) * (region.xmax - region.xmin);
            z(1) = region.ymin + uniform01(rng) * (region.ymax - region.ymin);
            out.push_back(std::move(z));
        }
        return out;
    }
};

struct ModelBundle {
    MotionModel motion;
    BirthModel birth;
    SpawnModel spawn;
    SensorModel sensor;
    SurvivalModel survival;

    /// The linear-Gaussian scenario: 2 km square, three birth regions,
    /// 70 m spawns at -80/-90/-100 degrees.
    static ModelBundle reference() {
        ModelBundle m;
        m.motion = MotionModel::constant_velocity(1.0, 1.0);
        const double sigma_b = 10.0;
        const std::vector<std::pair<double, double>> birth_xy{{0.0, 500.0}, {433.0, -250.0},
                                                              {-433.0, -250.0}};
        for (std::size_t i = 0; i < birth_xy.size(); ++i) {
            Vector mb(4);
            mb << birth_xy[i].first, birth_xy[i].second, 0.0, 0.0;
            m.birth.regions.push_back(
                {0.02, GaussianMixture(Gaussian{mb, sigma_b * sigma_b * Matrix::Identity(4, 4)}),
                 static_cast<int>(i) + 1});
        }
        m.spawn.p_t = 0.01;
        m.spawn.per_parent = 1;
        constexpr double deg = std::numbers::pi / 180.0;
        m.spawn.offsets = {{70.0, -80.0 * deg, 1.0}, {70.0, -90.0 * deg, 1.0},
                           {70.0, -100.0 * deg, 1.0}};
        m.spawn.QT = 25.0 * Matrix::Identity(4, 4);
        m.sensor.H = Matrix::Zero(2, 4);
        m.sensor.H(0, 0) = 1.0;
        m.sensor.H(1, 1) = 1.0;
        m.sensor.R = 100.0 * Matrix::Identity(2, 2);
        m.sensor.p_d = 0.88;
        m.sensor.region = Rect{};
        m.sensor.clutter_rate = 1.65e-5 * m.sensor.region.area();
        m.survival.p_s = 0.99;
        return m;
    }
};

}  // namespace sglmb
