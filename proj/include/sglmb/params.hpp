#pragma once

#include <cstddef>
#include <cstdint>

namespace sglmb {

/// How candidate association vectors are generated for each prior component.
enum class HypothesisSearch {
    gibbs,       ///< randomized Gibbs sweeps over the cost table
    exhaustive,  ///< every positive 1-1 vector (small instances only)
};

struct FilterParams {
    std::size_t h_max = 1000;  ///< total Gibbs sweep budget per scan
    std::size_t cap = 1000;    ///< maximum number of GLMB components
    double temper_survival = 0.9;
    double temper_detection = 0.9;
    bool temper_spawn = false;      ///< apply temper_survival to p_T as well
    std::size_t gibbs_floor = 10;   ///< minimum sweeps per prior component
    std::size_t mixture_cap = 10;   ///< per-track Gaussian components
    double mixture_prune = 1e-5;    ///< relative weight below which mixture terms are dropped
    double probability_clamp = 1e-6;
    HypothesisSearch search = HypothesisSearch::gibbs;
    std::size_t exhaustive_limit = 1'000'000;  ///< guard on enumerated vectors per component
    std::size_t history_depth = 0;  ///< stored association-history depth, 0 = unbounded
};

struct OspaParams {
    double c = 100.0;
    double p = 1.0;
};

struct MonteCarloParams {
    int trials = 100;
    std::uint64_t seed = 1;
    int horizon = 100;
};

/// Free parameters of the ground-truth construction.
struct TruthParams {
    int parent_death_delay = 5;   ///< scans a parent lives after its spawn event
    double birth_speed = 10.0;    ///< m/s of the initial births, heading to the origin
    double spawn_bearing_deg = -90.0;  ///< truth spawn direction relative to parent heading
    double spawn_acceleration = 1.0;   ///< m/s^2 of a spawned object leaving rest
};

}  // namespace sglmb
