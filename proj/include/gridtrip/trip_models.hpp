#pragma once

// Aggregate fractional-tripping blocks driven by the substation voltage:
//   * the proportional-integral (PI) block, one per side and grid code,
//   * the linear DER_A block with its latched recovery line,
//   * composites that weight per-code outputs by installed share.

#include "gridtrip/common.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace gridtrip {

/// Seven-parameter PI block. Voltages labelled 0 sit at the severe end of a
/// span and voltages labelled 1 at the nominal end, so v0 < v1 on the under
/// side and v0 > v1 on the over side. With that convention the recurrence is
/// identical for both sides; only the running extreme (min or max) differs.
struct PiParams {
    Side side = Side::under;
    double v0_prop = 0.0; // proportional branch: all units lost at/after this extreme
    double v1_prop = 0.5; //   none lost while the extreme stays inside this value
    double v0_int = 0.8;  // integral deactivation: rate saturates at 1 here
    double v1_int = 0.9;  //   rate is zero on the nominal side of this value
    double t_deact = 1.0; // integrator time to deactivate 100 %
    double v0_rec = 0.85; // reactivation starts past this value
    double t_rec = 1.0;   // integrator time to reactivate 100 %
    double trv = 0.02;    // input filter; <= 0 means the input is already filtered
    bool reactivation = false;

    /// The reactivation span mirrors the deactivation span.
    double v1_rec() const { return v0_rec + (v1_int - v0_int); }
    /// Spans non-degenerate and oriented for the side; time constants positive.
    bool feasible() const;
    void validate() const;
};

struct PiState {
    double p_del = 0.0;
    double p_rec = 0.0;
    double v_extreme = 1.0; // running min (under) or max (over) of the filtered voltage
    double v_filt = 1.0;
};

/// One step of the PI block; returns the active fraction and updates state.
double pi_step(const PiParams& params, PiState& state, double v_ss, double dt);

std::vector<double> pi_simulate(const PiParams& params, PiState state, std::span<const double> v_ss, double dt);

/// Nine-parameter DER_A tripping block (both sides).
struct DerAParams {
    double v_l0 = 0.44;
    double v_l1 = 0.49;
    double v_h1 = 1.15;
    double v_h0 = 1.2;
    double t_vl0 = 0.16;
    double t_vl1 = 0.16;
    double t_vh0 = 0.16;
    double t_vh1 = 0.16;
    double v_r_frac = 0.35;
    double trv = 0.02;

    bool feasible() const;
    void validate() const;
};

struct DerASideState {
    double dwell_inner = 0.0; // continuous time past the inner threshold (v_l1 / v_h1)
    double dwell_outer = 0.0; // continuous time past the outer threshold (v_l0 / v_h0)
    double excursion_extreme = 1.0;
    double latched_loss = 0.0; // latched deactivated fraction
    bool armed = false;
};

struct DerAState {
    double v_filt = 1.0;
    DerASideState under;
    DerASideState over;
};

/// One step of DER_A; the under- and over-side active fractions multiply.
double dera_step(const DerAParams& params, DerAState& state, double v_ss, double dt);

std::vector<double> dera_simulate(const DerAParams& params, DerAState state, std::span<const double> v_ss, double dt);

enum class Family { pi, dera };

std::string to_string(Family f);
Family parse_family(std::string_view s);

/// Per-code blocks of one family plus the code weights.
struct CompositeModel {
    std::string name;
    Family family = Family::pi;
    std::array<PiParams, 3> pi_under{};
    std::array<PiParams, 3> pi_over{};
    std::array<DerAParams, 3> dera{};
    std::array<double, 3> shares = kDefaultShares;

    void validate() const;
};

struct CompositePrediction {
    std::array<std::vector<double>, 3> per_code;
    std::vector<double> weighted;
};

/// Runs each code's blocks from a fresh state over the trace.
CompositePrediction composite_predict(const CompositeModel& model, std::span<const double> v_ss, double dt);

/// Copy whose block input filters are bypassed, for replay on traces that
/// already record the filtered substation voltage.
CompositeModel with_filtered_input(CompositeModel model);

struct DefaultModels {
    CompositeModel der_a;     // one block shared by all codes
    CompositeModel deraemo1;  // one block per code
};

DefaultModels make_default_models();

// Named-parameter records used by parameter files and the decision vectors.
std::vector<std::string> pi_parameter_names(Side side, bool reactivation);
std::vector<double> pi_to_vector(const PiParams& p);
PiParams pi_from_vector(Side side, std::span<const double> x, bool reactivation, double trv = 0.02);

std::vector<std::string> dera_parameter_names();
std::vector<double> dera_to_vector(const DerAParams& p);
DerAParams dera_from_vector(std::span<const double> x, double trv = 0.02);

nlohmann::json to_json(const PiParams& p);
PiParams pi_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DerAParams& p);
DerAParams dera_from_json(const nlohmann::json& j);

} // namespace gridtrip
