#pragma once

// Algebraic phasor network: Y-bus assembly, Newton power flow, disturbance
// overlays, the per-step linear solve, and assembly of the combined
// transmission + distribution test system.

#include "gridtrip/common.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gridtrip {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

enum class BusKind { slack, generator, load };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::load;
    double base_kv = 1.0;
    Complex shunt_admittance{0.0, 0.0};
};

struct Branch {
    int from = 0;
    int to = 0;
    Complex series_impedance{0.0, 0.0};
    double charging_susceptance = 0.0; // total line charging, split half per end
    double tap_ratio = 1.0;            // off-nominal ratio on the `from` side
};

/// Y-bus from raw bus and branch lists. Throws ConfigError on duplicate bus
/// ids, dangling branch endpoints, zero series impedance or bad tap ratios.
ComplexMatrix build_admittance(std::span<const Bus> buses, std::span<const Branch> branches);

/// Immutable network model. The admittance matrix includes bus shunts, so
/// folding constant-impedance loads produces a new network.
class PhasorNetwork {
public:
    PhasorNetwork() = default;
    PhasorNetwork(std::vector<Bus> buses, std::vector<Branch> branches);

    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<Branch>& branches() const { return branches_; }
    const ComplexMatrix& admittance() const { return admittance_; }
    std::size_t size() const { return buses_.size(); }

    /// Row index of a bus id; throws ConfigError for unknown ids.
    std::size_t index_of(int bus_id) const;
    bool contains(int bus_id) const { return index_.count(bus_id) > 0; }

    /// Copy with `extra[i]` added to the shunt admittance of bus row i.
    PhasorNetwork with_added_shunts(std::span<const Complex> extra) const;

private:
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    std::unordered_map<int, std::size_t> index_;
    ComplexMatrix admittance_;
};

/// Power-flow specification for one bus. Injections are generation minus
/// load, in pu on the system base. Slack buses use v_set and angle; generator
/// buses use p and v_set; load buses use p and q.
struct BusSetpoint {
    double p = 0.0;
    double q = 0.0;
    double v_set = 1.0;
    double angle = 0.0;
};

struct PowerFlowOptions {
    int max_iterations = 50;
    double tolerance = 1e-8;
    /// Optional start point; flat start (slack angle, set magnitudes) otherwise.
    std::optional<ComplexVector> initial;
};

struct PowerFlowResult {
    ComplexVector voltages;
    ComplexVector injections; // S = V * conj(Y V) at the solution
    int iterations = 0;
    double max_mismatch = 0.0;
};

/// Full Newton-Raphson in polar coordinates. Throws NumericalError on
/// non-convergence or a singular Jacobian.
PowerFlowResult solve_power_flow(const PhasorNetwork& network, std::span<const BusSetpoint> setpoints,
                                 const PowerFlowOptions& options = {});

struct DisturbanceEvent {
    enum class Kind { fault, injection_step };

    Kind kind = Kind::fault;
    int bus = 0;
    double g_sc = 0.0; // fault conductance, pu
    double dp = 0.0;   // injection step, pu (positive = generation)
    double dq = 0.0;
    double t_start = 0.0;
    double t_clear = 0.0; // faults only

    static DisturbanceEvent fault(int bus, double g_sc, double t_start, double t_clear);
    static DisturbanceEvent injection_step(int bus, double dp, double dq, double t_start);

    bool active_at(double t) const;
    /// Throws ConfigError when the event violates its invariants.
    void validate() const;
};

/// Additive, per-bus changes to the base network at a given instant.
struct NetworkOverlay {
    std::vector<std::pair<std::size_t, Complex>> admittance; // diagonal additions
    std::vector<std::pair<std::size_t, Complex>> injection;  // complex power injections, pu

    bool empty() const { return admittance.empty() && injection.empty(); }
    bool changes_admittance() const { return !admittance.empty(); }
};

NetworkOverlay apply_disturbance(const PhasorNetwork& network, const DisturbanceEvent& event, double t);

/// Base matrix plus overlay diagonal terms; the base is never modified.
ComplexMatrix overlay_admittance(const ComplexMatrix& base, const NetworkOverlay& overlay);

/// V = Y^-1 I with singularity detection and a residual check
/// (||Y V - I||_inf <= 1e-10 scaled by max(1, ||I||_inf)).
ComplexVector solve_network_step(const ComplexMatrix& admittance, const ComplexVector& currents);

/// Pre-factorized admittance for repeated solves against the same matrix.
class FactorizedNetwork {
public:
    explicit FactorizedNetwork(const ComplexMatrix& admittance);
    ComplexVector solve(const ComplexVector& currents) const;
    std::size_t size() const { return size_; }

private:
    Eigen::PartialPivLU<ComplexMatrix> lu_;
    std::size_t size_ = 0;
};

/// One PV-hosting node of a distribution feeder.
struct PvNode {
    int bus_id = 0;
    std::size_t bus_index = 0;
    int feeder = 0;
    int node = 0;
    double pv_setpoint = 0.0; // pu on system base, before per-unit sampling
};

struct TestSystem {
    PhasorNetwork network;             // branches and line charging; loads not folded
    std::vector<BusSetpoint> setpoints; // generators only; loads kept separately
    std::vector<Complex> load_power;    // consumption per bus row, pu
    std::vector<PvNode> pv_nodes;
    std::vector<int> machine_buses;
    int substation_bus = 5;
    std::size_t substation_index = 0;
    int n_dg = 0;
    double frequency_hz = 60.0;

    std::size_t inverter_count() const { return pv_nodes.size() * kAllCodes.size(); }
};

struct SystemOptions {
    double load_std_fraction = 0.2;
    int substation_bus = 5;
};

/// IEEE 9-bus with `n_dg` copies of the CIGRE LV feeder attached at the
/// substation bus. Deterministic in (n_dg, seed, fixtures).
TestSystem assemble_test_system(int n_dg, std::uint64_t seed, const std::filesystem::path& fixtures_dir,
                                const SystemOptions& options = {});

/// Directory holding the shipped fixture files.
std::filesystem::path default_fixtures_dir();

/// Loads a transmission fixture (buses, branches, setpoints, loads).
struct TransmissionFixture {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::unordered_map<int, BusSetpoint> setpoints;
    std::unordered_map<int, Complex> loads;
    double frequency_hz = 60.0;
};

TransmissionFixture load_transmission_fixture(const std::filesystem::path& path);

} // namespace gridtrip
