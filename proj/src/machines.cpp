#include "gridtrip/machines.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <numbers>

namespace gridtrip {

namespace {

// Machine frame rotation: x_dq = x_net * exp(-j (delta - pi/2)).
Complex to_dq(Complex x, double delta) { return x * std::polar(1.0, std::numbers::pi / 2.0 - delta); }
Complex to_network(Complex x_dq, double delta) { return x_dq * std::polar(1.0, delta - std::numbers::pi / 2.0); }

} // namespace

void MachineParams::validate() const {
    if (!(h > 0.0)) throw ConfigError("machine inertia must be positive");
    if (!(xd_prime > 0.0 && xd >= xd_prime)) throw ConfigError("need xd >= xd' > 0");
    if (!(xq_prime > 0.0 && xq >= xq_prime)) throw ConfigError("need xq >= xq' > 0");
    if (!(td0_prime > 0.0 && tq0_prime > 0.0)) throw ConfigError("open-circuit time constants must be positive");
    if (!(base_mva > 0.0)) throw ConfigError("machine base must be positive");
}

MachineParams MachineParams::on_base(double system_mva) const {
    MachineParams p = *this;
    const double z = system_mva / base_mva;
    p.xd *= z;
    p.xq *= z;
    p.xd_prime *= z;
    p.xq_prime *= z;
    p.h /= z;
    p.d /= z;
    p.base_mva = system_mva;
    return p;
}

void ExciterParams::validate() const {
    if (!(ta > 0.0 && te > 0.0 && tf > 0.0)) throw ConfigError("exciter time constants must be positive");
    if (!(vr_min < vr_max)) throw ConfigError("exciter limits must satisfy vr_min < vr_max");
}

DqCurrents stator_currents(const MachineState& state, Complex v_terminal, const MachineParams& params) {
    const Complex v = to_dq(v_terminal, state.delta);
    DqCurrents c;
    c.vd = v.real();
    c.vq = v.imag();
    c.id = (state.eq_prime - c.vq) / params.xd_prime;
    c.iq = (c.vd - state.ed_prime) / params.xq_prime;
    return c;
}

double electrical_power(const MachineState& state, Complex v_terminal, const MachineParams& params) {
    const auto c = stator_currents(state, v_terminal, params);
    return c.vd * c.id + c.vq * c.iq;
}

double electrical_power_ddelta(const MachineState& state, Complex v_terminal, const MachineParams& params) {
    // dVd/ddelta = Vq, dVq/ddelta = -Vd.
    const auto c = stator_currents(state, v_terminal, params);
    const double did = c.vd / params.xd_prime;
    const double diq = c.vq / params.xq_prime;
    return c.vq * c.id + c.vd * did - c.vd * c.iq + c.vq * diq;
}

MachineDerivatives machine_derivatives(const MachineState& state, const ExciterState& exciter, Complex v_terminal,
                                       double pm, const MachineParams& params, double omega_s) {
    const auto c = stator_currents(state, v_terminal, params);
    const double pe = c.vd * c.id + c.vq * c.iq;
    MachineDerivatives d;
    d.delta = omega_s * state.d_omega;
    d.d_omega = (pm - pe - params.d * state.d_omega) / (2.0 * params.h);
    d.eq_prime = (-state.eq_prime - (params.xd - params.xd_prime) * c.id + exciter.efd) / params.td0_prime;
    d.ed_prime = (-state.ed_prime + (params.xq - params.xq_prime) * c.iq) / params.tq0_prime;
    return d;
}

ExciterDerivatives avr_derivatives(const ExciterState& exciter, double v_terminal_mag, const ExciterParams& p) {
    ExciterDerivatives d;
    d.efd = (-(p.ke + p.saturation(exciter.efd)) * exciter.efd + exciter.vr) / p.te;
    d.rf = (-exciter.rf + p.kf / p.tf * exciter.efd) / p.tf;
    const double error = exciter.v_ref - v_terminal_mag - exciter.feedback(p);
    d.vr = (p.ka * error - exciter.vr) / p.ta;
    if ((exciter.vr >= p.vr_max && d.vr > 0.0) || (exciter.vr <= p.vr_min && d.vr < 0.0)) d.vr = 0.0;
    return d;
}

Complex machine_current_injection(const MachineState& state, Complex v_terminal, const MachineParams& params) {
    const auto c = stator_currents(state, v_terminal, params);
    return to_network(Complex{c.id, c.iq}, state.delta);
}

StatorAffine stator_affine(const MachineState& state, const MachineParams& params) {
    const double phi = state.delta - std::numbers::pi / 2.0;
    const double cs = std::cos(phi);
    const double sn = std::sin(phi);
    Eigen::Matrix2d rot;
    rot << cs, -sn, sn, cs;
    Eigen::Matrix2d stator;
    stator << 0.0, -1.0 / params.xd_prime, 1.0 / params.xq_prime, 0.0;
    StatorAffine a;
    a.constant = to_network(Complex{state.eq_prime / params.xd_prime, -state.ed_prime / params.xq_prime},
                            state.delta);
    a.coupling = rot * stator * rot.transpose();
    return a;
}

MachineEquilibrium init_equilibrium(Complex v_terminal, Complex s_generated, const MachineParams& params,
                                    const ExciterParams& exciter) {
    params.validate();
    exciter.validate();
    if (std::abs(v_terminal) <= 0.0) throw ConfigError("machine terminal voltage must be non-zero");
    const Complex current = std::conj(s_generated / v_terminal);
    const Complex e_q_axis = v_terminal + Complex{0.0, params.xq} * current;

    MachineEquilibrium eq;
    eq.machine.delta = std::arg(e_q_axis);
    eq.machine.d_omega = 0.0;
    const Complex v = to_dq(v_terminal, eq.machine.delta);
    const Complex i = to_dq(current, eq.machine.delta);
    eq.machine.ed_prime = (params.xq - params.xq_prime) * i.imag();
    eq.machine.eq_prime = v.imag() + params.xd_prime * i.real();

    const double efd = eq.machine.eq_prime + (params.xd - params.xd_prime) * i.real();
    eq.exciter.efd = efd;
    eq.exciter.vr = (exciter.ke + exciter.saturation(efd)) * efd;
    eq.exciter.rf = exciter.kf / exciter.tf * efd;
    eq.exciter.v_ref = std::abs(v_terminal) + eq.exciter.vr / exciter.ka;
    if (eq.exciter.vr < exciter.vr_min || eq.exciter.vr > exciter.vr_max)
        throw ConfigError("initial field voltage outside exciter limits at bus " + std::to_string(params.bus));
    eq.pm = v.real() * i.real() + v.imag() * i.imag();
    return eq;
}

MachineFixture load_machine_fixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fixture " + path.string());
    MachineFixture fx;
    try {
        const auto doc = nlohmann::json::parse(in);
        for (const auto& m : doc.at("machines")) {
            MachineParams p;
            p.bus = m.at("bus").get<int>();
            p.base_mva = m.at("base_mva").get<double>();
            p.h = m.at("h").get<double>();
            p.d = m.value("d", 0.0);
            p.xd = m.at("xd").get<double>();
            p.xq = m.at("xq").get<double>();
            p.xd_prime = m.at("xd_prime").get<double>();
            p.xq_prime = m.at("xq_prime").get<double>();
            p.td0_prime = m.at("td0_prime").get<double>();
            p.tq0_prime = m.at("tq0_prime").get<double>();
            p.validate();
            fx.machines.push_back(p);
        }
        const auto& e = doc.at("exciter");
        fx.exciter.ka = e.at("ka").get<double>();
        fx.exciter.ta = e.at("ta").get<double>();
        fx.exciter.ke = e.at("ke").get<double>();
        fx.exciter.te = e.at("te").get<double>();
        fx.exciter.kf = e.at("kf").get<double>();
        fx.exciter.tf = e.at("tf").get<double>();
        fx.exciter.vr_min = e.at("vr_min").get<double>();
        fx.exciter.vr_max = e.at("vr_max").get<double>();
        fx.exciter.se_a = e.value("se_a", 0.0);
        fx.exciter.se_b = e.value("se_b", 0.0);
        fx.exciter.validate();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed machine fixture " + path.string() + ": " + e.what());
    }
    return fx;
}

} // namespace gridtrip
