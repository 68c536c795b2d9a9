#pragma once

#include "sglmb/models.hpp"
#include "sglmb/params.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>

namespace sglmb {

/// Thrown for schema violations; `path()` names the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
    [[nodiscard]] const std::string& path() const { return path_; }

private:
    std::string path_;
};

/// Everything a Monte Carlo run needs besides the seed overrides.
struct Scenario {
    ModelBundle models = ModelBundle::reference();
    FilterParams filter;
    OspaParams ospa;
    MonteCarloParams montecarlo;
    TruthParams truth;

    // Raw scalars kept for echoing the configuration back.
    double sigma_v = 1.0;
    double sigma_b = 10.0;
    double sigma_t = 5.0;
    double sigma_eps = 10.0;
};

namespace detail {

using nlohmann::json;

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!ok.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
        }
    }

    [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }
    [[nodiscard]] std::string field(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }
    [[nodiscard]] const json& raw(const char* key) const { return j_.at(key); }

    double number(const char* key, double def) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(field(key), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(field(key), "must be finite");
        return x;
    }

    double probability(const char* key, double def, bool open_low, bool open_high) const {
        const double x = number(key, def);
        const bool low_ok = open_low ? x > 0.0 : x >= 0.0;
        const bool high_ok = open_high ? x < 1.0 : x <= 1.0;
        if (!low_ok || !high_ok) {
            throw ConfigError(field(key), std::string("probability must lie in ") +
                                              (open_low ? "(" : "[") + "0,1" +
                                              (open_high ? ")" : "]"));
        }
        return x;
    }

    double positive(const char* key, double def) const {
        const double x = number(key, def);
        if (!(x > 0.0)) throw ConfigError(field(key), "must be positive");
        return x;
    }

    double non_negative(const char* key, double def) const {
        const double x = number(key, def);
        if (x < 0.0) throw ConfigError(field(key), "must be non-negative");
        return x;
    }

    long long integer(const char* key, long long def, long long min) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
        const auto x = v.get<long long>();
        if (x < min) throw ConfigError(field(key), "must be >= " + std::to_string(min));
        return x;
    }

    bool boolean(const char* key, bool def) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(field(key), "expected a boolean");
        return v.get<bool>();
    }

    std::string string(const char* key, const std::string& def) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
        return v.get<std::string>();
    }

    Reader child(const char* key) const { return Reader(j_.at(key), field(key)); }

private:
    const json& j_;
    std::string path_;
};

inline Vector read_vector(const json& v, const std::string& path, Eigen::Index n) {
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != n) {
        throw ConfigError(path, "expected an array of " + std::to_string(n) + " numbers");
    }
    Vector out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!v[static_cast<std::size_t>(i)].is_number()) throw ConfigError(path, "expected numbers");
        out(i) = v[static_cast<std::size_t>(i)].get<double>();
    }
    return out;
}

}  // namespace detail

/// Parses a JSON scenario. Every section and field is optional; missing
/// values take the reference-scenario defaults.
inline Scenario load_scenario(const nlohmann::json& root) {
    using detail::Reader;
    constexpr double deg = std::numbers::pi / 180.0;
    Scenario s;
    Reader top(root, "");
    top.allow({"dynamics", "birth", "spawn", "sensor", "filter", "ospa", "montecarlo", "truth"});
    auto& m = s.models;

    if (top.has("dynamics")) {
        auto r = top.child("dynamics");
        r.allow({"dt", "sigma_v", "p_s"});
        const double dt = r.positive("dt", 1.0);
        s.sigma_v = r.non_negative("sigma_v", 1.0);
        m.motion = MotionModel::constant_velocity(dt, s.sigma_v);
        m.survival.p_s = r.probability("p_s", 0.99, true, true);
    }

    if (top.has("birth")) {
        auto r = top.child("birth");
        r.allow({"r_b", "sigma_b", "regions"});
        const double r_b = r.probability("r_b", 0.02, true, true);
        s.sigma_b = r.positive("sigma_b", 10.0);
        const Matrix PB = s.sigma_b * s.sigma_b * Matrix::Identity(4, 4);
        if (r.has("regions")) {
            const auto& arr = r.raw("regions");
            if (!arr.is_array()) throw ConfigError(r.field("regions"), "expected an array");
            m.birth.regions.clear();
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const std::string path = r.field("regions") + "[" + std::to_string(i) + "]";
                Reader rr(arr[i], path);
                rr.allow({"mean", "label_index", "r_b"});
                if (!rr.has("mean")) throw ConfigError(rr.field("mean"), "required");
                Vector mean = detail::read_vector(rr.raw("mean"), rr.field("mean"), 4);
                const auto idx = static_cast<int>(rr.integer("label_index", static_cast<long long>(i) + 1, 1));
                const double rb = rr.probability("r_b", r_b, true, true);
                m.birth.regions.push_back({rb, GaussianMixture(Gaussian{mean, PB}), idx});
            }
        } else {
            for (auto& reg : m.birth.regions) {
                reg.r_b = r_b;
                reg.density.components.front().cov = PB;
            }
        }
        std::set<int> seen;
        for (const auto& reg : m.birth.regions) {
            if (!seen.insert(reg.label_index).second) {
                throw ConfigError(r.field("regions"), "duplicate label_index");
            }
        }
    }

    if (top.has("spawn")) {
        auto r = top.child("spawn");
        r.allow({"p_t", "per_parent", "sigma_t", "offsets"});
        m.spawn.p_t = r.probability("p_t", 0.01, false, true);
        m.spawn.per_parent = static_cast<int>(r.integer("per_parent", 1, 0));
        s.sigma_t = r.positive("sigma_t", 5.0);
        m.spawn.QT = s.sigma_t * s.sigma_t * Matrix::Identity(4, 4);
        if (r.has("offsets")) {
            const auto& arr = r.raw("offsets");
            if (!arr.is_array()) throw ConfigError(r.field("offsets"), "expected an array");
            m.spawn.offsets.clear();
            for (std::size_t i = 0; i < arr.size(); ++i) {
                Reader rr(arr[i], r.field("offsets") + "[" + std::to_string(i) + "]");
                rr.allow({"distance", "bearing_deg", "weight"});
                m.spawn.offsets.push_back({rr.non_negative("distance", 70.0),
                                           rr.number("bearing_deg", -90.0) * deg,
                                           rr.positive("weight", 1.0)});
            }
        }
    }

    if (top.has("sensor")) {
        auto r = top.child("sensor");
        r.allow({"p_d", "sigma_eps", "clutter_intensity", "clutter_rate", "region"});
        m.sensor.p_d = r.probability("p_d", 0.88, true, true);
        s.sigma_eps = r.positive("sigma_eps", 10.0);
        m.sensor.R = s.sigma_eps * s.sigma_eps * Matrix::Identity(2, 2);
        if (r.has("region")) {
            Vector b = detail::read_vector(r.raw("region"), r.field("region"), 4);
            if (!(b(0) < b(1)) || !(b(2) < b(3))) {
                throw ConfigError(r.field("region"), "expected [xmin, xmax, ymin, ymax] with min < max");
            }
            m.sensor.region = Rect{b(0), b(1), b(2), b(3)};
        }
        if (r.has("clutter_intensity") && r.has("clutter_rate")) {
            throw ConfigError(r.field("clutter_rate"), "give either clutter_intensity or clutter_rate");
        }
        if (r.has("clutter_rate")) {
            m.sensor.clutter_rate = r.non_negative("clutter_rate", 66.0);
        } else {
            m.sensor.clutter_rate =
                r.non_negative("clutter_intensity", 1.65e-5) * m.sensor.region.area();
        }
    }

    if (top.has("filter")) {
        auto r = top.child("filter");
        r.allow({"h_max", "cap", "temper_survival", "temper_detection", "temper_spawn",
                 "gibbs_floor", "mixture_cap", "mixture_prune", "probability_clamp", "search",
                 "history_depth"});
        auto& f = s.filter;
        f.h_max = static_cast<std::size_t>(r.integer("h_max", 1000, 0));
        f.cap = static_cast<std::size_t>(r.integer("cap", 1000, 1));
        f.temper_survival = r.probability("temper_survival", 0.9, true, false);
        f.temper_detection = r.probability("temper_detection", 0.9, true, false);
        f.temper_spawn = r.boolean("temper_spawn", false);
        f.gibbs_floor = static_cast<std::size_t>(r.integer("gibbs_floor", 10, 0));
        f.mixture_cap = static_cast<std::size_t>(r.integer("mixture_cap", 10, 1));
        f.mixture_prune = r.non_negative("mixture_prune", 1e-5);
        f.probability_clamp = r.probability("probability_clamp", 1e-6, true, true);
        const auto search = r.string("search", "gibbs");
        if (search == "gibbs") {
            f.search = HypothesisSearch::gibbs;
        } else if (search == "exhaustive") {
            f.search = HypothesisSearch::exhaustive;
        } else {
            throw ConfigError(r.field("search"), "expected \"gibbs\" or \"exhaustive\"");
        }
        f.history_depth = static_cast<std::size_t>(r.integer("history_depth", 0, 0));
    }

    if (top.has("ospa")) {
        auto r = top.child("ospa");
        r.allow({"c", "p"});
        s.ospa.c = r.positive("c", 100.0);
        s.ospa.p = r.number("p", 1.0);
        if (s.ospa.p < 1.0) throw ConfigError(r.field("p"), "must be >= 1");
    }

    if (top.has("montecarlo")) {
        auto r = top.child("montecarlo");
        r.allow({"trials", "seed", "horizon"});
        s.montecarlo.trials = static_cast<int>(r.integer("trials", 100, 1));
        s.montecarlo.seed = static_cast<std::uint64_t>(r.integer("seed", 1, 0));
        s.montecarlo.horizon = static_cast<int>(r.integer("horizon", 100, 1));
    }

    if (top.has("truth")) {
        auto r = top.child("truth");
        r.allow({"parent_death_delay", "birth_speed", "spawn_bearing_deg", "spawn_acceleration"});
        s.truth.parent_death_delay = static_cast<int>(r.integer("parent_death_delay", 5, 1));
        s.truth.birth_speed = r.non_negative("birth_speed", 10.0);
        s.truth.spawn_bearing_deg = r.number("spawn_bearing_deg", -90.0);
        s.truth.spawn_acceleration = r.positive("spawn_acceleration", 1.0);
    }
    return s;
}

inline Scenario load_scenario(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    return load_scenario(root);
}

/// Fully expanded configuration, loadable again by load_scenario.
inline nlohmann::json to_json(const Scenario& s) {
    using nlohmann::json;
    constexpr double deg = std::numbers::pi / 180.0;
    const auto& m = s.models;
    json regions = json::array();
    for (const auto& r : m.birth.regions) {
        const auto& mean = r.density.components.front().mean;
        regions.push_back({{"mean", {mean(0), mean(1), mean(2), mean(3)}},
                           {"label_index", r.label_index},
                           {"r_b", r.r_b}});
    }
    json offsets = json::array();
    for (const auto& o : m.spawn.offsets) {
        offsets.push_back(
            {{"distance", o.distance}, {"bearing_deg", o.bearing / deg}, {"weight", o.weight}});
    }
    const auto& reg = m.sensor.region;
    return {
        {"dynamics", {{"dt", m.motion.dt}, {"sigma_v", s.sigma_v}, {"p_s", m.survival.p_s}}},
        {"birth", {{"sigma_b", s.sigma_b}, {"regions", regions}}},
        {"spawn",
         {{"p_t", m.spawn.p_t},
          {"per_parent", m.spawn.per_parent},
          {"sigma_t", s.sigma_t},
          {"offsets", offsets}}},
        {"sensor",
         {{"p_d", m.sensor.p_d},
          {"sigma_eps", s.sigma_eps},
          {"clutter_rate", m.sensor.clutter_rate},
          {"region", {reg.xmin, reg.xmax, reg.ymin, reg.ymax}}}},
        {"filter",
         {{"h_max", s.filter.h_max},
          {"cap", s.filter.cap},
          {"temper_survival", s.filter.temper_survival},
          {"temper_detection", s.filter.temper_detection},
          {"temper_spawn", s.filter.temper_spawn},
          {"gibbs_floor", s.filter.gibbs_floor},
          {"mixture_cap", s.filter.mixture_cap},
          {"mixture_prune", s.filter.mixture_prune},
          {"probability_clamp", s.filter.probability_clamp},
          {"search", s.filter.search == HypothesisSearch::gibbs ? "gibbs" : "exhaustive"},
          {"history_depth", s.filter.history_depth}}},
        {"ospa", {{"c", s.ospa.c}, {"p", s.ospa.p}}},
        {"montecarlo",
         {{"trials", s.montecarlo.trials},
          {"seed", s.montecarlo.seed},
          {"horizon", s.montecarlo.horizon}}},
        {"truth",
         {{"parent_death_delay", s.truth.parent_death_delay},
          {"birth_speed", s.truth.birth_speed},
          {"spawn_bearing_deg", s.truth.spawn_bearing_deg},
          {"spawn_acceleration", s.truth.spawn_acceleration}}},
    };
}

}  // namespace sglmb
