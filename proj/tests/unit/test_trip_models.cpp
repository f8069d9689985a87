#include "catch_amalgamated.hpp"

#include "gridtrip/trip_models.hpp"
#include "oracles.hpp"

#include <random>

using namespace gridtrip;
using Catch::Approx;

namespace {

PiParams hand_params(bool reactivation) {
    PiParams p;
    p.side = Side::under;
    p.v0_prop = 0.0;
    p.v1_prop = 0.5;
    p.v0_int = 0.8;
    p.v1_int = 0.9;
    p.t_deact = 1.0;
    p.v0_rec = 0.85;
    p.t_rec = 1.0;
    p.trv = 0.0;
    p.reactivation = reactivation;
    return p;
}

double run(const PiParams& p, PiState& s, double v, double seconds, double dt) {
    double out = 1.0;
    const auto n = static_cast<int>(std::llround(seconds / dt));
    for (int k = 0; k < n; ++k) out = pi_step(p, s, v, dt);
    return out;
}

PiParams random_pi(std::mt19937_64& rng, Side side, bool reactivation) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PiParams p;
    p.side = side;
    p.reactivation = reactivation;
    p.trv = u(rng) < 0.2 ? 0.0 : 0.005 + 0.05 * u(rng);
    p.t_deact = 0.05 + 3.0 * u(rng);
    p.t_rec = 0.05 + 3.0 * u(rng);
    if (side == Side::under) {
        p.v0_prop = 0.6 * u(rng);
        p.v1_prop = p.v0_prop + 0.01 + 0.3 * u(rng);
        p.v0_int = 0.5 + 0.35 * u(rng);
        p.v1_int = p.v0_int + 0.01 + 0.1 * u(rng);
        p.v0_rec = 0.7 + 0.25 * u(rng);
    } else {
        p.v0_prop = 1.2 + 0.2 * u(rng);
        p.v1_prop = p.v0_prop - 0.01 - 0.15 * u(rng);
        p.v0_int = 1.1 + 0.2 * u(rng);
        p.v1_int = p.v0_int - 0.01 - 0.08 * u(rng);
        p.v0_rec = 1.0 + 0.15 * u(rng);
    }
    if (!reactivation) p.v0_rec = side == Side::under ? 1e300 : -1e300;
    return p;
}

} // namespace

TEST_CASE("PI hand-derived responses", "[trip][pi]") {
    SECTION("nominal voltage keeps everything active") {
        const auto p = hand_params(true);
        PiState s;
        for (int k = 0; k < 1000; ++k) CHECK(pi_step(p, s, 1.0, 1e-3) == 1.0);
    }
    SECTION("held dip, then recovery with reactivation") {
        const auto p = hand_params(true);
        PiState s;
        CHECK(run(p, s, 0.85, 0.5, 1e-4) == Approx(0.75).margin(1e-6));
        CHECK(s.p_del == Approx(0.25).margin(1e-6));
        CHECK(run(p, s, 1.0, 0.1, 1e-4) == Approx(0.85).margin(1e-6));
        CHECK(s.p_rec == Approx(0.1).margin(1e-6));
    }
    SECTION("sustained saturation") {
        auto p = hand_params(false);
        PiState s;
        // p_im(0.3) = 0.6 while p_del climbs to its limit of 1.
        CHECK(run(p, s, 0.3, 3.0, 1e-3) == Approx(0.0).margin(1e-12));

        p.v0_prop = 0.2;
        p.v1_prop = 0.7;
        p.v0_int = 0.1;
        p.v1_int = 0.5;
        p.t_deact = 10.0;
        PiState s2;
        // p_im(0.4) = 0.4; the limiter caps p_del at 0.25.
        CHECK(run(p, s2, 0.4, 20.0, 1e-3) == Approx(0.15).margin(1e-9));
        CHECK(s2.p_del == Approx(0.25).margin(1e-12));
    }
}

TEST_CASE("PI matches the literal recurrence", "[trip][pi][oracle]") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double ts = 5e-5;
    for (int trial = 0; trial < 400; ++trial) {
        const bool rec = trial % 2 == 0;
        const Side side = trial % 4 < 2 ? Side::under : Side::over;
        const auto p = random_pi(rng, side, rec);
        const double sign = side == Side::under ? 1.0 : -1.0;
        oracle::PiRef ref{sign * p.v0_prop, sign * p.v1_prop, sign * p.v0_int, sign * p.v1_int, p.t_deact,
                          sign * p.v0_rec, p.t_rec, p.trv, rec};
        ref.v_min = ref.v_filt = sign;
        PiState s;
        double v = 1.0;
        for (int k = 0; k < 4000; ++k) {
            if (k % 400 == 0) v = side == Side::under ? 0.2 + 0.9 * u(rng) : 0.95 + 0.4 * u(rng);
            const double a = pi_step(p, s, v, ts);
            const double b = ref.step(sign * v, ts);
            REQUIRE(std::abs(a - b) <= 1e-12);
        }
    }
}

TEST_CASE("PI invariants", "[trip][pi][property]") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const Side side = trial % 2 ? Side::under : Side::over;
        const bool rec = trial % 3 == 0;
        const auto p = random_pi(rng, side, rec);
        PiState s;
        double extreme = s.v_extreme;
        double last = 1.0;
        for (int k = 0; k < 3000; ++k) {
            const double vin = side == Side::under ? 0.1 + u(rng) * 1.0 : 0.9 + u(rng) * 0.6;
            const double out = pi_step(p, s, vin, 1e-3);
            REQUIRE(out >= 0.0);
            REQUIRE(out <= 1.0);
            REQUIRE(s.p_del >= 0.0);
            REQUIRE(s.p_del <= 1.0);
            REQUIRE(s.p_rec <= 1.0);
            if (side == Side::under) REQUIRE(s.v_extreme <= extreme);
            else REQUIRE(s.v_extreme >= extreme);
            extreme = s.v_extreme;
            if (!rec) REQUIRE(out <= last);
            last = out;
        }
    }
}

TEST_CASE("PI shift invariance", "[trip][pi][property]") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_pi(rng, Side::under, true);
        auto q = p;
        const double shift = 0.137;
        q.v0_prop += shift;
        q.v1_prop += shift;
        q.v0_int += shift;
        q.v1_int += shift;
        q.v0_rec += shift;
        PiState a, b;
        b.v_extreme = b.v_filt = 1.0 + shift;
        for (int k = 0; k < 2000; ++k) {
            const double v = 0.3 + 0.8 * u(rng);
            REQUIRE(pi_step(p, a, v, 1e-3) == Approx(pi_step(q, b, v + shift, 1e-3)).margin(1e-9));
        }
    }
}

TEST_CASE("PI step-size consistency", "[trip][pi]") {
    auto p = hand_params(true);
    p.trv = 0.02;
    PiState a, b;
    double worst = 0.0;
    for (int k = 0; k < 3000; ++k) {
        const double v = k < 1000 ? 1.0 : k < 1500 ? 0.82 : 1.0;
        const double ya = pi_step(p, a, v, 1e-3);
        double yb = 0.0;
        for (int j = 0; j < 10; ++j) yb = pi_step(p, b, v, 1e-4);
        worst = std::max(worst, std::abs(ya - yb));
    }
    CHECK(worst <= 0.01);
}

TEST_CASE("DER_A block", "[trip][dera]") {
    DerAParams p;
    p.trv = 0.0;
    SECTION("nominal") {
        DerAState s;
        for (int k = 0; k < 500; ++k) CHECK(dera_step(p, s, 1.0, 1e-3) == 1.0);
    }
    SECTION("latched dip and partial recovery") {
        DerAState s;
        double out = 1.0;
        for (int k = 0; k < 300; ++k) out = dera_step(p, s, 0.465, 1e-3);
        CHECK(out == Approx(0.5).margin(1e-12));
        for (int k = 0; k < 100; ++k) out = dera_step(p, s, 1.0, 1e-3);
        CHECK(out == Approx(0.675).margin(1e-12));
    }
    SECTION("short dip below the timers does not latch") {
        DerAState s;
        for (int k = 0; k < 100; ++k) dera_step(p, s, 0.3, 1e-3);
        CHECK(dera_step(p, s, 1.0, 1e-3) == 1.0);
    }
    SECTION("over side mirrors the under side") {
        DerAState s;
        double out = 1.0;
        for (int k = 0; k < 300; ++k) out = dera_step(p, s, 1.175, 1e-3);
        CHECK(out == Approx(0.5).margin(1e-12));
        for (int k = 0; k < 100; ++k) out = dera_step(p, s, 1.0, 1e-3);
        CHECK(out == Approx(0.675).margin(1e-12));
    }
    SECTION("output always in [0, 1]") {
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> u(0.0, 1.5);
        DerAState s;
        for (int k = 0; k < 20000; ++k) {
            const double y = dera_step(p, s, u(rng), 1e-3);
            REQUIRE(y >= 0.0);
            REQUIRE(y <= 1.0);
        }
    }
}

TEST_CASE("composites and defaults", "[trip][composite]") {
    const auto d = make_default_models();
    CHECK(d.der_a.dera[0].v_l0 == 0.44);
    CHECK(d.der_a.dera[0].v_l1 == 0.49);
    CHECK(d.deraemo1.dera[2].v_h0 == 1.21);
    CHECK(d.deraemo1.dera[2].v_r_frac == 1.0);
    CHECK(d.deraemo1.dera[0].t_vl0 == 1.58);

    const std::vector<double> flat(200, 1.0);
    const auto pred = composite_predict(d.deraemo1, flat, 1e-3);
    for (double y : pred.weighted) CHECK(y == Approx(1.0).margin(1e-15));

    SECTION("per-side product") {
        CompositeModel m;
        m.family = Family::pi;
        for (auto& b : m.pi_under) b = hand_params(false);
        for (auto& b : m.pi_over) {
            b = PiParams{};
            b.side = Side::over;
            b.v0_prop = 1.4;
            b.v1_prop = 1.3;
            b.v0_int = 1.3;
            b.v1_int = 1.2;
            b.trv = 0.0;
        }
        const std::vector<double> dip(500, 0.85);
        const auto r = composite_predict(m, dip, 1e-3);
        PiState s;
        const auto under_only = pi_simulate(m.pi_under[0], s, dip, 1e-3);
        for (std::size_t k = 0; k < dip.size(); ++k) CHECK(r.per_code[0][k] == under_only[k]);
    }
}

TEST_CASE("parameter records round-trip", "[trip][io]") {
    std::mt19937_64 rng(4);
    for (Side side : {Side::under, Side::over}) {
        for (bool rec : {false, true}) {
            const auto p = random_pi(rng, side, rec);
            const auto x = pi_to_vector(p);
            CHECK(x.size() == (rec ? 7u : 5u));
            CHECK(pi_parameter_names(side, rec).size() == x.size());
            const auto q = pi_from_json(to_json(pi_from_vector(side, x, rec, p.trv)));
            CHECK(pi_to_vector(q) == x);
            CHECK(q.trv == p.trv);
        }
    }
    const auto d = make_default_models().deraemo1.dera[1];
    const auto e = dera_from_json(to_json(d));
    CHECK(dera_to_vector(e) == dera_to_vector(d));
    CHECK(dera_parameter_names().size() == 9);
    CHECK_THROWS_AS(pi_from_json(nlohmann::json{{"side", "under"}}), ConfigError);
}
