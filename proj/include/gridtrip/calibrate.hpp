#pragma once

// Parameter fitting of the tripping blocks by bound-constrained global-best
// particle swarm optimization, and the error metrics used to compare models.

#include "gridtrip/common.hpp"
#include "gridtrip/trip_models.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gridtrip {

struct Bounds {
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t size() const { return lower.size(); }
    bool contains(std::span<const double> x) const;
    void validate() const;
};

struct SwarmConfig {
    std::size_t swarm_size = 100;
    int max_iters = 100;
    double omega = 0.5;
    double phi_p = 0.5;
    double phi_g = 0.5;
    double min_step = 1e-8;
    double min_func_delta = 1e-8;
    std::uint64_t seed = 1;

    void validate() const;
};

struct FitResult {
    std::vector<std::string> names;
    std::vector<double> best;
    double best_objective = 0.0;
    std::vector<double> history; // best objective after initialization and after each iteration
    int iterations = 0;
    std::string termination;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
    Bounds bounds;
};

using Objective = std::function<double(std::span<const double>)>;

/// Global-best PSO with inertia, cognitive and social terms. Positions are
/// clipped to the bounds; the run stops after max_iters or when a new best
/// improves the objective by at most min_func_delta or moves by at most
/// min_step. Particle evaluations run concurrently; the result depends only
/// on the seed.
FitResult pso_minimize(const Objective& objective, const Bounds& bounds, const SwarmConfig& config);

/// One voltage trace with the active fraction the block should reproduce.
struct FitTrace {
    std::vector<double> voltage;
    std::vector<double> target;
};

struct FitProblem {
    Family family = Family::pi;
    Side side = Side::under; // PI only; DER_A blocks cover both sides
    bool reactivation = false;
    std::vector<FitTrace> traces;
    double dt = 1e-3;
    double input_trv = 0.0; // block filter applied to the trace voltage (0: already filtered)
    Bounds bounds;

    std::size_t dimension() const;
    std::size_t point_count() const;
    void validate() const;
};

/// Sum of squared errors over all traces and samples; each trace is replayed
/// from a fresh block state. Parameter vectors with degenerate or misoriented
/// spans return a finite penalty above any feasible value.
double objective(std::span<const double> x, const FitProblem& problem);

Bounds default_bounds(Family family, Side side, bool reactivation);

/// Whether the code's inverters can reactivate after momentary cessation.
inline bool has_reactivation(DerCode code) { return code == DerCode::inv2020; }

/// Fits one block. PI: one side of one code, with 7 decision variables for
/// INV2020 and 5 otherwise. DER_A: all 9 parameters of one code's block on
/// the traces of both sides (`side` is ignored).
FitResult fit_code(std::span<const FitTrace> traces, Side side, DerCode code, Family family,
                   const SwarmConfig& config, double dt, const Bounds* bounds = nullptr);

/// Mean absolute error in percent. Throws ConfigError on length mismatch.
double mae(std::span<const double> predicted, std::span<const double> actual);

nlohmann::json to_json(const FitResult& r);
FitResult fit_result_from_json(const nlohmann::json& j);

} // namespace gridtrip
