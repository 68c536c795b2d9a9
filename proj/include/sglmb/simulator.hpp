#pragma once

#include "sglmb/gaussian.hpp"
#include "sglmb/labels.hpp"
#include "sglmb/models.hpp"
#include "sglmb/params.hpp"
#include "sglmb/random.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sglmb {

/// One true object: alive on scans [birth_scan, death_scan).
struct TruthTrack {
    Label label;
    int birth_scan = 1;
    int death_scan = 1;
    std::vector<Vector> states;  ///< states[k - birth_scan]
    int region = 0;              ///< originating birth region (1-based) of its lineage

    [[nodiscard]] bool alive(int k) const { return k >= birth_scan && k < death_scan; }
    [[nodiscard]] const Vector& state(int k) const {
        if (!alive(k)) throw std::out_of_range("truth track " + label.to_string() + " not alive at " + std::to_string(k));
        return states[static_cast<std::size_t>(k - birth_scan)];
    }
};

struct Truth {
    std::vector<TruthTrack> tracks;
    int horizon = 100;

    [[nodiscard]] std::size_t cardinality(int k) const {
        std::size_t n = 0;
        for (const auto& t : tracks) n += t.alive(k) ? 1 : 0;
        return n;
    }
    [[nodiscard]] std::vector<const TruthTrack*> alive(int k) const {
        std::vector<const TruthTrack*> out;
        for (const auto& t : tracks) {
            if (t.alive(k)) out.push_back(&t);
        }
        return out;
    }
};

namespace detail {

struct Waypoint {
    int time;
    double x;
    double y;
};

/// Piecewise-linear position through the waypoints, extrapolated with the
/// last segment's velocity. Velocity is the forward difference, so that
/// state(k + 1) = F state(k) holds exactly away from turns.
inline TruthTrack waypoint_track(Label label, int region, std::vector<Waypoint> wps, int birth,
                                 int death) {
    auto position = [&](int k) {
        std::size_t s = 0;
        while (s + 2 < wps.size() && k >= wps[s + 1].time) ++s;
        const auto& a = wps[s];
        const auto& b = wps[s + 1];
        const double u = static_cast<double>(k - a.time) / static_cast<double>(b.time - a.time);
        return std::pair{a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)};
    };
    TruthTrack t;
    t.label = std::move(label);
    t.region = region;
    t.birth_scan = birth;
    t.death_scan = death;
    for (int k = birth; k < death; ++k) {
        const auto [x, y] = position(k);
        const auto [x1, y1] = position(k + 1);
        Vector s(4);
        s << x, y, x1 - x, y1 - y;
        t.states.push_back(std::move(s));
    }
    return t;
}

inline Waypoint offset_point(const Vector& parent, int time, double bearing, double distance) {
    const double heading = std::atan2(parent(3), parent(2));
    return {time, parent(0) + distance * std::cos(heading + bearing),
            parent(1) + distance * std::sin(heading + bearing)};
}

/// Starts at rest at `from`, accelerates at `accel` towards `to`, then
/// cruises so that it reaches `to` at to.time and keeps going. The
/// acceleration is raised when it cannot cover the distance in time.
inline TruthTrack accelerated_track(Label label, int region, Waypoint from, Waypoint to, double accel,
                                    int death) {
    const double dx = to.x - from.x;
    const double dy = to.y - from.y;
    const double dist = std::hypot(dx, dy);
    const double T = static_cast<double>(to.time - from.time);
    if (!(T > 0.0)) throw std::invalid_argument("accelerated_track: target must lie in the future");
    const double a = std::max(accel, 2.0 * dist / (T * T));
    // a tau (T - tau / 2) = dist, smaller root.
    const double tau = T - std::sqrt(std::max(0.0, T * T - 2.0 * dist / a));
    const double ux = dist > 0.0 ? dx / dist : 0.0;
    const double uy = dist > 0.0 ? dy / dist : 0.0;
    TruthTrack t;
    t.label = std::move(label);
    t.region = region;
    t.birth_scan = from.time;
    t.death_scan = death;
    for (int k = from.time; k < death; ++k) {
        const double s = static_cast<double>(k - from.time);
        const double travelled = s <= tau ? 0.5 * a * s * s : a * tau * (s - 0.5 * tau);
        const double speed = a * std::min(s, tau);
        Vector x(4);
        x << from.x + ux * travelled, from.y + uy * travelled, ux * speed, uy * speed;
        t.states.push_back(std::move(x));
    }
    return t;
}

}  // namespace detail

/// The deterministic three-lineage scenario.
///
/// Region r (r = 1, 2, 3) launches an object at scan r which heads for the
/// origin at `birth_speed`. It spawns at scan 9 + r and dies
/// `parent_death_delay` scans later. The first-generation spawn crosses the
/// origin at scan 45 and spawns again at 54 + 2r. Late births (55, 3),
/// (57, 1), (59, 2) meet the second-generation spawns at scans 82, 84 and 86.
/// Spawns appear at rest, `spawn_distance` metres from the parent at
/// `spawn_bearing_deg` relative to its heading, and accelerate towards their
/// next waypoint.
inline Truth generate_truth(const TruthParams& params, int horizon = 100,
                            double spawn_distance = 70.0) {
    const double deg = std::numbers::pi / 180.0;
    const double bearing = params.spawn_bearing_deg * deg;
    const std::vector<std::pair<double, double>> births{{0.0, 500.0}, {433.0, -250.0}, {-433.0, -250.0}};
    const std::vector<std::pair<double, double>> crossings{{-250.0, -433.0}, {-260.0, 430.0}, {507.0, 26.0}};
    // Build the full scenario, then cut it at the horizon: later waypoints
    // depend on states past a short horizon.
    const int end = std::max(horizon, 100) + 1;
    auto clip = [&](int k) { return std::min(k, end); };

    Truth truth;
    truth.horizon = horizon;
    for (int r = 1; r <= 3; ++r) {
        const auto [bx, by] = births[static_cast<std::size_t>(r - 1)];
        const double norm = std::hypot(bx, by);
        const double vx = -bx / norm * params.birth_speed;
        const double vy = -by / norm * params.birth_speed;
        const int t_root = r;
        const int t_gen1 = 9 + r;
        const int t_gen2 = 54 + 2 * r;
        const int t_cross = 80 + 2 * r;

        const Label root = Label::birth(t_root, r);
        auto root_track = detail::waypoint_track(
            root, r, {{t_root, bx, by}, {t_root + 1, bx + vx, by + vy}}, t_root,
            clip(t_gen1 + params.parent_death_delay));

        const Label gen1 = root.spawn(t_gen1, 1);
        const auto start1 = detail::offset_point(root_track.state(t_gen1), t_gen1, bearing, spawn_distance);
        auto gen1_track = detail::accelerated_track(gen1, r, start1, {45, 0.0, 0.0},
                                                    params.spawn_acceleration, end);

        const Label gen2 = gen1.spawn(t_gen2, 1);
        const auto start2 = detail::offset_point(gen1_track.state(t_gen2), t_gen2, bearing, spawn_distance);
        const auto [cx, cy] = crossings[static_cast<std::size_t>(r - 1)];
        auto gen2_track = detail::accelerated_track(gen2, r, start2, {t_cross, cx, cy},
                                                    params.spawn_acceleration, end);

        truth.tracks.push_back(std::move(root_track));
        truth.tracks.push_back(std::move(gen1_track));
        truth.tracks.push_back(std::move(gen2_track));
    }
    // Late births: (55, 3), (57, 1), (59, 2), each meeting one gen-2 track.
    const std::vector<std::pair<int, int>> late{{55, 3}, {57, 1}, {59, 2}};
    for (std::size_t i = 0; i < late.size(); ++i) {
        const auto [t, region] = late[i];
        const auto [bx, by] = births[static_cast<std::size_t>(region - 1)];
        const auto [cx, cy] = crossings[i];
        const int t_cross = 82 + 2 * static_cast<int>(i);
        truth.tracks.push_back(detail::waypoint_track(Label::birth(t, region), region,
                                                      {{t, bx, by}, {t_cross, cx, cy}}, t, end));
    }
    std::erase_if(truth.tracks, [&](const TruthTrack& t) { return t.birth_scan > horizon; });
    for (auto& t : truth.tracks) {
        t.death_scan = std::min(t.death_scan, horizon + 1);
        t.states.resize(static_cast<std::size_t>(t.death_scan - t.birth_scan));
    }
    std::sort(truth.tracks.begin(), truth.tracks.end(),
              [](const TruthTrack& a, const TruthTrack& b) { return a.label < b.label; });
    return truth;
}

struct Scan {
    int time = 0;
    std::vector<Vector> measurements;
    std::size_t detections = 0;  ///< leading entries that originate from objects
};

/// Detections (each alive object w.p. p_D, z = Hx + N(0, R), dropped when
/// outside the region) followed by Poisson clutter.
inline Scan generate_scan(const Truth& truth, int k, const SensorModel& sensor, Rng& rng) {
    Scan scan;
    scan.time = k;
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix L;
    if (sensor.R.size() > 0 && sensor.R.norm() > 0.0) {
        Eigen::LLT<Matrix> llt(sensor.R);
        if (llt.info() != Eigen::Success) throw std::domain_error("generate_scan: R is not positive definite");
        L = llt.matrixL();
    } else {
        L = Matrix::Zero(sensor.H.rows(), sensor.H.rows());
    }
    for (const auto* t : truth.alive(k)) {
        if (!(uniform01(rng) < sensor.p_d)) continue;
        Vector n(sensor.H.rows());
        for (Eigen::Index i = 0; i < n.size(); ++i) n(i) = normal(rng);
        Vector z = sensor.H * t->state(k) + L * n;
        if (sensor.region.contains(z)) scan.measurements.push_back(std::move(z));
    }
    scan.detections = scan.measurements.size();
    for (auto& z : sensor.sample_clutter(rng)) scan.measurements.push_back(std::move(z));
    return scan;
}

inline std::vector<Scan> generate_scans(const Truth& truth, const SensorModel& sensor,
                                        std::uint64_t seed, std::uint64_t trial) {
    std::vector<Scan> out;
    for (int k = 1; k <= truth.horizon; ++k) {
        Rng rng = make_rng(seed, StreamTag::measurements, {trial, static_cast<std::uint64_t>(k)});
        out.push_back(generate_scan(truth, k, sensor, rng));
    }
    return out;
}

inline nlohmann::json truth_to_json(const Truth& truth) {
    nlohmann::json j;
    j["horizon"] = truth.horizon;
    j["tracks"] = nlohmann::json::array();
    for (const auto& t : truth.tracks) {
        nlohmann::json tj;
        tj["label"] = t.label.to_string();
        tj["region"] = t.region;
        tj["birth_scan"] = t.birth_scan;
        tj["death_scan"] = t.death_scan;
        tj["states"] = nlohmann::json::array();
        for (const auto& s : t.states) tj["states"].push_back({s(0), s(1), s(2), s(3)});
        j["tracks"].push_back(std::move(tj));
    }
    return j;
}

inline Truth truth_from_json(const nlohmann::json& j) {
    Truth truth;
    truth.horizon = j.at("horizon").get<int>();
    for (const auto& tj : j.at("tracks")) {
        TruthTrack t;
        t.label = Label::parse(tj.at("label").get<std::string>());
        t.region = tj.value("region", t.label.root().last_index());
        t.birth_scan = tj.at("birth_scan").get<int>();
        t.death_scan = tj.at("death_scan").get<int>();
        for (const auto& s : tj.at("states")) {
            if (s.size() != 4) throw std::invalid_argument("truth: states must be 4-vectors");
            Vector v(4);
            for (int i = 0; i < 4; ++i) v(i) = s.at(static_cast<std::size_t>(i)).get<double>();
            t.states.push_back(std::move(v));
        }
        if (static_cast<int>(t.states.size()) != t.death_scan - t.birth_scan) {
            throw std::invalid_argument("truth: track " + t.label.to_string() +
                                        " has the wrong number of states");
        }
        truth.tracks.push_back(std::move(t));
    }
    return truth;
}

/// scan,x,y rows.
inline void write_scans_csv(std::ostream& os, const std::vector<Scan>& scans) {
    os << "scan,x,y\n" << std::fixed << std::setprecision(6);
    for (const auto& s : scans) {
        for (const auto& z : s.measurements) os << s.time << ',' << z(0) << ',' << z(1) << '\n';
    }
}

}  // namespace sglmb
