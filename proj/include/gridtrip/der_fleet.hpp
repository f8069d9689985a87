#pragma once

// Detailed per-inverter DER model: terminal voltage filter, Volt-VAr and
// Volt-Watt loops with first-order delays, current-reference lags with a
// current limit, and the binary voltage ride-through state machine of each
// grid code. Also fleet sampling and active-fraction accounting.

#include "gridtrip/common.hpp"
#include "gridtrip/network.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gridtrip {

struct DerControlParams {
    double trv = 0.02;
    double tg = 0.02;
    double tiq = 0.02;
    double tpord = 0.02;

    bool volt_var = false;
    double kqv1 = 7.78;
    double kqv2 = 7.65;
    double tqv = 6.0;
    double dbq1 = 0.956;
    double dbq2 = 1.043;
    double iq_limit = 0.44;

    bool volt_watt = false;
    double dbp1 = 1.07;
    double dbp2 = 1.1075;
    double tpv = 8.0;
    double p_floor = 0.2;

    double i_max = 1.2; // pu of rating

    /// Table values; the voltage-support loops are only enabled for INV2020.
    static DerControlParams for_code(DerCode code);
    void validate() const;
};

struct VrtSettings {
    DerCode code = DerCode::inv2005;
    double v_l0 = 0.5;
    double v_l1 = 0.88;
    double v_h1 = 1.1;
    double v_h_mc = 1.13; // INV2020 only
    double v_h0 = 1.17;
    double t_l0 = 0.0;
    double t_l1 = 0.1;
    double t_h1 = 0.8;
    double t_h0 = 0.0;
    double mc_deact_delay = 0.0; // INV2020 only
    double mc_react_delay = 0.0; // INV2020 only

    void validate() const;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Sampling ranges of the VRT settings for one grid code.
struct VrtBounds {
    Interval v_l0, v_l1, v_h1, v_h_mc, v_h0;
    Interval t_l0, t_l1, t_h1, t_h0;
    Interval mc_deact_delay, mc_react_delay;

    static VrtBounds for_code(DerCode code);
    bool contains(const VrtSettings& s) const;
};

enum class DerMode { continuous, mandatory, momentary_cessation, tripped };

std::string to_string(DerMode m);

struct DerUnitState {
    DerMode mode = DerMode::continuous;
    double v_filt = 1.0;
    double q_vv = 0.0; // delayed Volt-VAr reactive current reference
    double p_vw = 1.0; // delayed Volt-Watt active power ceiling
    double p_ord = 1.0;
    double ip = 1.0;
    double iq = 0.0;
    // Dwell accumulated in each off-nominal region since the voltage last
    // sat in the continuous range.
    double below_l1 = 0.0;
    double below_l0 = 0.0;
    double above_h1 = 0.0;
    double above_h0 = 0.0;
    double mc_pending = 0.0;
    double react_pending = 0.0;
};

inline bool is_active(DerMode m) { return m == DerMode::continuous || m == DerMode::mandatory; }

struct DerUnit {
    DerCode code = DerCode::inv2005;
    int bus_id = 0;
    std::size_t bus_index = 0;
    double rating = 0.0; // pu on system base; also the pre-disturbance active power
    DerControlParams control;
    VrtSettings vrt;
    DerUnitState state;

    bool active() const { return is_active(state.mode); }
};

/// Reactive current reference of the Volt-VAr curve (positive = injection).
double volt_var_ref(double v_filt, const DerControlParams& params);

/// Active power ceiling of the Volt-Watt curve, pu of rating.
double volt_watt_ref(double v_filt, const DerControlParams& params);

/// Advances the ride-through logic by dt given the unit's filtered voltage.
void vrt_update(DerUnit& unit, double v_filt, double dt);

/// Settles every filter and lag at the given terminal voltage and returns the
/// resulting current injection (system pu, network frame).
Complex init_unit(DerUnit& unit, Complex v_terminal);

/// One step of the unit: filter, ride-through logic, control loops, lags.
/// Returns the network-frame current injection for the next network solve.
Complex der_step(DerUnit& unit, Complex v_terminal, double dt);

/// Complex power the unit delivers at the given voltage with its current state.
Complex unit_power(const DerUnit& unit, double v_mag);

struct FleetSpec {
    std::array<double, 3> shares = kDefaultShares;
    double setpoint_std_fraction = 0.2;
    std::uint64_t seed = 7;

    void validate() const;
};

FleetSpec load_fleet_spec(const std::filesystem::path& path);

/// Three units (one per grid code) at every PV node. Ratings are normal
/// around share * node setpoint, clipped at a small positive floor; VRT
/// settings are uniform within the code's bounds.
std::vector<DerUnit> sample_fleet(const FleetSpec& spec, std::span<const PvNode> placement, std::uint64_t seed);

/// Rated-power-weighted share of the code's units that are active.
/// Throws ConfigError if the fleet has no unit of that code.
double fleet_active_fraction(std::span<const DerUnit> units, DerCode code);

/// Share-weighted combination of per-code fractions.
double weighted_fraction(const std::array<double, 3>& per_code, const std::array<double, 3>& shares);

} // namespace gridtrip
