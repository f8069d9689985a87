#pragma once

// Two-axis (fourth-order) synchronous machine with an IEEE DC1A exciter.
// All quantities are per-unit on the system base unless stated otherwise;
// the stator resistance is neglected and the governor is omitted (constant Pm).

#include "gridtrip/common.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

namespace gridtrip {

struct MachineParams {
    int bus = 0;
    double base_mva = 100.0;
    double h = 1.0;  // inertia constant, s
    double d = 0.0;  // damping, pu torque / pu speed
    double xd = 1.0;
    double xq = 1.0;
    double xd_prime = 0.2;
    double xq_prime = 0.2;
    double td0_prime = 5.0;
    double tq0_prime = 0.5;

    void validate() const;
    /// Same machine expressed on another MVA base.
    MachineParams on_base(double system_mva) const;
};

struct MachineState {
    double delta = 0.0;   // rotor angle, rad
    double d_omega = 0.0; // speed deviation, pu
    double eq_prime = 1.0;
    double ed_prime = 0.0;
};

struct MachineDerivatives {
    double delta = 0.0;
    double d_omega = 0.0;
    double eq_prime = 0.0;
    double ed_prime = 0.0;
};

struct ExciterParams {
    double ka = 20.0;
    double ta = 0.2;
    double ke = 1.0;
    double te = 0.314;
    double kf = 0.063;
    double tf = 0.35;
    double vr_min = -5.0;
    double vr_max = 5.0;
    double se_a = 0.0; // saturation SE(Efd) = se_a * exp(se_b * Efd); off by default
    double se_b = 0.0;

    void validate() const;
    double saturation(double efd) const { return se_a * std::exp(se_b * efd); }
};

struct ExciterState {
    double efd = 1.0;   // field voltage
    double vr = 1.0;    // regulator output
    double rf = 0.0;    // rate-feedback integrator; feedback signal is kf/tf*efd - rf
    double v_ref = 1.0; // voltage reference (held constant)

    double feedback(const ExciterParams& p) const { return p.kf / p.tf * efd - rf; }
};

struct ExciterDerivatives {
    double efd = 0.0;
    double vr = 0.0;
    double rf = 0.0;
};

/// Stator currents in the machine's own d-q frame.
struct DqCurrents {
    double id = 0.0;
    double iq = 0.0;
    double vd = 0.0;
    double vq = 0.0;
};

DqCurrents stator_currents(const MachineState& state, Complex v_terminal, const MachineParams& params);

double electrical_power(const MachineState& state, Complex v_terminal, const MachineParams& params);

/// d(Pe)/d(delta) holding the terminal voltage phasor fixed.
double electrical_power_ddelta(const MachineState& state, Complex v_terminal, const MachineParams& params);

MachineDerivatives machine_derivatives(const MachineState& state, const ExciterState& exciter, Complex v_terminal,
                                       double pm, const MachineParams& params, double omega_s);

/// DC1A signal path with regulator anti-windup. |v_terminal| is the measured voltage.
ExciterDerivatives avr_derivatives(const ExciterState& exciter, double v_terminal_mag, const ExciterParams& params);

/// Stator current leaving the machine into the network, in the network frame.
Complex machine_current_injection(const MachineState& state, Complex v_terminal, const MachineParams& params);

/// The injection is affine in the terminal voltage once delta is fixed:
/// I = constant + coupling * [Re V, Im V]. Saliency makes the coupling
/// real-linear rather than complex-linear.
struct StatorAffine {
    Complex constant;
    Eigen::Matrix2d coupling;
};

StatorAffine stator_affine(const MachineState& state, const MachineParams& params);

struct MachineEquilibrium {
    MachineState machine;
    ExciterState exciter;
    double pm = 0.0;
};

/// Back-initialization from a converged power flow: terminal voltage and the
/// complex power the machine delivers. Throws ConfigError when the required
/// regulator output lies outside [vr_min, vr_max].
MachineEquilibrium init_equilibrium(Complex v_terminal, Complex s_generated, const MachineParams& params,
                                    const ExciterParams& exciter);

struct MachineFixture {
    std::vector<MachineParams> machines; // on the machine base
    ExciterParams exciter;
};

MachineFixture load_machine_fixture(const std::filesystem::path& path);

} // namespace gridtrip
