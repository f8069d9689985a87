#pragma once

// Transmission-distribution co-simulation, disturbance suites, trace
// persistence and model evaluation.

#include "gridtrip/calibrate.hpp"
#include "gridtrip/common.hpp"
#include "gridtrip/der_fleet.hpp"
#include "gridtrip/machines.hpp"
#include "gridtrip/network.hpp"
#include "gridtrip/trip_models.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gridtrip {

enum class SuiteKind { in_sample, out_of_sample };

std::string to_string(SuiteKind k);
SuiteKind parse_suite(std::string_view s);

struct ScenarioSpec {
    std::string name;
    SuiteKind label = SuiteKind::in_sample;
    Side side = Side::under; // which tripping side the disturbance exercises
    std::optional<DisturbanceEvent> disturbance; // none: steady-state run
    double horizon = 5.0;
    double dt = 1e-3;
    int n_dg = 2;
    std::uint64_t seed = 7;

    void validate() const;
};

/// Complete simulation setup shared by every scenario of a suite.
struct CoSimSystem {
    TestSystem grid;
    MachineFixture machines;
    FleetSpec fleet;
    std::vector<DerUnit> units; // sampled fleet in its initial (unsettled) state
};

CoSimSystem load_cosim_system(int n_dg, std::uint64_t seed, const std::filesystem::path& fixtures_dir);

struct SimulationTrace {
    ScenarioSpec scenario;
    std::array<double, 3> shares = kDefaultShares;
    std::size_t inverter_count = 0;
    std::vector<double> t;
    std::vector<double> v_ss_filt;
    std::array<std::vector<double>, 3> frac;
    std::vector<double> frac_weighted;

    std::size_t size() const { return t.size(); }
    double dt() const { return scenario.dt; }
};

/// Optional per-step log of bus voltage magnitudes and machine states.
struct CoSimLog {
    std::vector<std::vector<double>> bus_voltage; // per sample, per bus row
    std::vector<int> trips;                       // units tripped by the end, per code
};

/// Fixed-step co-simulation. Each step solves the network algebraically with
/// the machines in Norton form, advances machines and exciters with Heun's
/// method and advances every inverter with exact lag updates.
SimulationTrace run_cosimulation(const CoSimSystem& system, const ScenarioSpec& scenario, CoSimLog* log = nullptr);

struct SuiteOptions {
    int steps_per_side = 6;    // under side: load-increase steps
    int faults = 5;            // under side: bolted-to-mild faults at the substation
    int over_steps = 11;       // over side: capacitive injection steps
    int bus = 5;
    double t_start = 0.5;
    double horizon = 5.0;
    double dt = 1e-3;
    int n_dg = 2;
    std::uint64_t seed = 7;
    // Sweep ranges; step magnitudes are |dS| in pu, faults are conductances.
    double under_step_min = 0.3;
    double under_step_max = 1.5;
    double over_step_min = 0.4;
    double over_step_max = 2.5;
    double fault_g_min = 1.5;
    double fault_g_max = 30.0;
};

/// In-sample: dP:dQ = 1:2 and 60 ms faults. Out-of-sample: 1:0.8 and 120 ms.
std::vector<ScenarioSpec> generate_suite(SuiteKind kind, const SuiteOptions& options = {});

/// Runs the scenarios concurrently; output order follows the input.
std::vector<SimulationTrace> run_suite(const CoSimSystem& system, const std::vector<ScenarioSpec>& scenarios);

struct NamedModel {
    std::string name;
    CompositeModel model;
};

struct ScenarioError {
    std::string model;
    std::string scenario;
    Side side = Side::under;
    double mae = 0.0;
};

struct SuiteReport {
    std::vector<std::string> models;
    std::vector<std::array<double, 2>> mae; // per model: [under, over], percent; NaN if no traces
    std::vector<ScenarioError> per_scenario;
    nlohmann::json config;

    nlohmann::json to_json() const;
    std::string table() const;
    double at(const std::string& model, Side side) const;
};

/// Replays every model on each trace's filtered substation voltage and
/// scores the weighted fraction. Throws ConfigError when traces differ in dt.
SuiteReport evaluate_models(const std::vector<SimulationTrace>& traces, const std::vector<NamedModel>& models);

/// Per-code fitting data from the traces of one side.
std::vector<FitTrace> fit_traces(const std::vector<SimulationTrace>& traces, DerCode code, std::optional<Side> side);

void write_trace(const std::filesystem::path& dir, const SimulationTrace& trace);
SimulationTrace read_trace(const std::filesystem::path& csv);

/// Writes one CSV + JSON sidecar per trace and a manifest listing the suite.
void write_traces(const std::filesystem::path& dir, const std::vector<SimulationTrace>& traces,
                  const nlohmann::json& manifest_extra = {});

struct TraceSuite {
    std::vector<SimulationTrace> traces;
    std::string notice; // non-empty when the directory held no traces
};

/// Reads every trace of a directory in manifest order (or name order when no
/// manifest exists). Throws IoError on malformed files, naming the column on
/// a header mismatch.
TraceSuite read_traces(const std::filesystem::path& dir);

/// One fitted block: a PI side of one code, or one code's DER_A block.
struct FittedBlock {
    Family family = Family::pi;
    DerCode code = DerCode::inv2005;
    std::optional<Side> side; // empty for DER_A
    FitResult result;
};

/// Fits the requested blocks of one family. PI blocks use the traces of
/// their side; DER_A blocks use every trace.
std::vector<FittedBlock> fit_blocks(const std::vector<SimulationTrace>& traces, Family family,
                                    std::span<const DerCode> codes, std::span<const Side> sides,
                                    const SwarmConfig& config);

/// Composite whose blocks are replaced by the fitted ones. Blocks not present
/// in `fits` keep the values of `base`.
CompositeModel apply_fits(CompositeModel base, const std::vector<FittedBlock>& fits);

std::string param_file_name(Family family, DerCode code, std::optional<Side> side);
nlohmann::json to_json(const FittedBlock& b);
void write_fit(const std::filesystem::path& dir, const FittedBlock& b);
/// Reads every block of a family from a parameter directory. Throws IoError
/// naming the first missing file.
CompositeModel load_fitted_model(const std::filesystem::path& dir, Family family, const std::string& name);

nlohmann::json to_json(const ScenarioSpec& s);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

} // namespace gridtrip
