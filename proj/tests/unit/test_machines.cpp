#include "catch_amalgamated.hpp"

#include "gridtrip/machines.hpp"
#include "gridtrip/network.hpp"

#include <numbers>

using namespace gridtrip;
using Catch::Approx;

namespace {

const double kOmegaS = 2.0 * std::numbers::pi * 60.0;

struct Case {
    MachineParams params;
    ExciterParams exciter;
    Complex v;
    Complex s;
};

// Machines of the 9-bus fixture at their power-flow operating points.
std::vector<Case> operating_points() {
    const auto fx = load_transmission_fixture(default_fixtures_dir() / "ieee9.json");
    const PhasorNetwork net(fx.buses, fx.branches);
    std::vector<BusSetpoint> sp(net.size());
    for (const auto& b : net.buses()) {
        const std::size_t k = net.index_of(b.id);
        sp[k] = fx.setpoints.at(b.id);
        if (fx.loads.count(b.id)) {
            sp[k].p -= fx.loads.at(b.id).real();
            sp[k].q -= fx.loads.at(b.id).imag();
        }
    }
    const auto pf = solve_power_flow(net, sp);
    const auto mf = load_machine_fixture(default_fixtures_dir() / "machines_ieee9.json");
    std::vector<Case> out;
    for (const auto& m : mf.machines) {
        const auto k = static_cast<Eigen::Index>(net.index_of(m.bus));
        out.push_back({m.on_base(100.0), mf.exciter, pf.voltages(k), pf.injections(k)});
    }
    return out;
}

} // namespace

TEST_CASE("equilibrium back-initialization", "[machines][init]") {
    for (const auto& c : operating_points()) {
        const auto eq = init_equilibrium(c.v, c.s, c.params, c.exciter);
        const auto d = machine_derivatives(eq.machine, eq.exciter, c.v, eq.pm, c.params, kOmegaS);
        CHECK(std::abs(d.delta) <= 1e-10);
        CHECK(std::abs(d.d_omega) <= 1e-10);
        CHECK(std::abs(d.eq_prime) <= 1e-10);
        CHECK(std::abs(d.ed_prime) <= 1e-10);
        const auto e = avr_derivatives(eq.exciter, std::abs(c.v), c.exciter);
        CHECK(std::abs(e.efd) <= 1e-9);
        CHECK(std::abs(e.vr) <= 1e-9);
        CHECK(std::abs(e.rf) <= 1e-9);

        // The injection reproduces the power-flow output of the machine.
        const Complex i = machine_current_injection(eq.machine, c.v, c.params);
        CHECK(std::abs(c.v * std::conj(i) - c.s) <= 1e-6);
        CHECK(eq.pm == Approx(c.s.real()).margin(1e-9));
    }
}

TEST_CASE("swing equation responses", "[machines][derivatives]") {
    const auto c = operating_points().at(1);
    const auto eq = init_equilibrium(c.v, c.s, c.params, c.exciter);

    auto spinning = eq.machine;
    spinning.d_omega = 0.01;
    const auto d1 = machine_derivatives(spinning, eq.exciter, c.v, eq.pm, c.params, kOmegaS);
    CHECK(d1.delta == Approx(0.01 * kOmegaS).epsilon(1e-12));

    const auto d2 = machine_derivatives(eq.machine, eq.exciter, c.v, eq.pm + 0.1, c.params, kOmegaS);
    CHECK(d2.d_omega == Approx(0.1 / (2.0 * c.params.h)).epsilon(1e-9));
}

TEST_CASE("DC1A exciter signal path", "[machines][avr]") {
    ExciterParams p;
    ExciterState e;
    e.efd = 1.5;
    e.vr = p.ke * e.efd;
    e.rf = p.kf / p.tf * e.efd;
    e.v_ref = 1.0 + e.vr / p.ka;

    SECTION("regulation point") {
        const auto d = avr_derivatives(e, 1.0, p);
        CHECK(std::abs(d.efd) < 1e-14);
        CHECK(std::abs(d.vr) < 1e-14);
        CHECK(std::abs(d.rf) < 1e-14);
    }
    SECTION("first-order regulator lag") {
        ExciterState s = e;
        s.v_ref = 1.0;
        s.vr = 0.3;
        const auto d = avr_derivatives(s, 0.95, p);
        CHECK(d.vr == Approx((p.ka * 0.05 - s.vr) / p.ta).epsilon(1e-12));
    }
    SECTION("anti-windup") {
        ExciterState s = e;
        s.vr = p.vr_max;
        CHECK(avr_derivatives(s, 0.5, p).vr == 0.0);
        s.vr = p.vr_min;
        CHECK(avr_derivatives(s, 1.5, p).vr == 0.0);
        CHECK(avr_derivatives(s, 0.5, p).vr > 0.0);
    }
}

TEST_CASE("stator currents and frame rotation", "[machines][injection]") {
    MachineParams p;
    p.xd = 1.2;
    p.xq = 0.9;
    p.xd_prime = 0.25;
    p.xq_prime = 0.4;
    const Complex v = std::polar(1.02, 0.3);

    SECTION("no EMF difference, no current") {
        MachineState s;
        s.delta = std::arg(v);
        s.eq_prime = std::abs(v);
        s.ed_prime = 0.0;
        CHECK(std::abs(machine_current_injection(s, v, p)) < 1e-14);
    }
    SECTION("rotating state and voltage rotates the current") {
        MachineState s;
        s.delta = 0.7;
        s.eq_prime = 1.1;
        s.ed_prime = 0.2;
        const Complex i0 = machine_current_injection(s, v, p);
        MachineState r = s;
        r.delta += std::numbers::pi / 2.0;
        const Complex i1 = machine_current_injection(r, v * Complex{0.0, 1.0}, p);
        CHECK(std::abs(i1 - i0 * Complex{0.0, 1.0}) < 1e-12);
    }
    SECTION("affine form agrees with the direct injection") {
        MachineState s;
        s.delta = 0.4;
        s.eq_prime = 1.05;
        s.ed_prime = 0.15;
        const auto a = stator_affine(s, p);
        for (const Complex vt : {Complex{1.0, 0.1}, Complex{0.7, -0.4}, Complex{0.2, 0.9}}) {
            const Eigen::Vector2d lin = a.coupling * Eigen::Vector2d(vt.real(), vt.imag());
            const Complex i = a.constant + Complex{lin(0), lin(1)};
            CHECK(std::abs(i - machine_current_injection(s, vt, p)) < 1e-12);
        }
    }
    SECTION("analytic dPe/ddelta matches central differences") {
        MachineState s;
        s.delta = 0.9;
        s.eq_prime = 1.08;
        s.ed_prime = 0.1;
        const double h = 1e-6;
        MachineState up = s, dn = s;
        up.delta += h;
        dn.delta -= h;
        const double fd = (electrical_power(up, v, p) - electrical_power(dn, v, p)) / (2.0 * h);
        const double an = electrical_power_ddelta(s, v, p);
        CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(an)));
    }
}

TEST_CASE("initialization edge cases", "[machines][init]") {
    const auto mf = load_machine_fixture(default_fixtures_dir() / "machines_ieee9.json");
    const auto p = mf.machines.front().on_base(100.0);

    const auto idle = init_equilibrium({1.0, 0.0}, {0.0, 0.0}, p, mf.exciter);
    CHECK(idle.pm == 0.0);

    // A reactive demand that would need a field voltage beyond the regulator limits.
    CHECK_THROWS_AS(init_equilibrium({1.0, 0.0}, {0.5, 60.0}, p, mf.exciter), ConfigError);

    MachineParams bad = p;
    bad.xd_prime = bad.xd * 2.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
