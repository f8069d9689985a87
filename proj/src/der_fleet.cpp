#include "gridtrip/der_fleet.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <random>

namespace gridtrip {

std::string to_string(DerMode m) {
    switch (m) {
    case DerMode::continuous: return "continuous";
    case DerMode::mandatory: return "mandatory";
    case DerMode::momentary_cessation: return "momentary_cessation";
    case DerMode::tripped: return "tripped";
    }
    return "?";
}

DerControlParams DerControlParams::for_code(DerCode code) {
    DerControlParams p;
    p.volt_var = p.volt_watt = code == DerCode::inv2020;
    return p;
}

void DerControlParams::validate() const {
    if (!(trv > 0.0 && tg > 0.0 && tiq > 0.0 && tpord > 0.0 && tqv > 0.0 && tpv > 0.0))
        throw ConfigError("DER time constants must be positive");
    if (!(dbq1 < dbq2)) throw ConfigError("Volt-VAr deadband must satisfy dbq1 < dbq2");
    if (!(dbp1 < dbp2)) throw ConfigError("Volt-Watt band must satisfy dbp1 < dbp2");
    if (!(i_max > 0.0)) throw ConfigError("current limit must be positive");
}

void VrtSettings::validate() const {
    if (!(v_l0 < v_l1 && v_l1 < v_h1 && v_h1 <= v_h0)) throw ConfigError("VRT thresholds out of order");
    if (code == DerCode::inv2020 && !(v_l1 < v_h_mc && v_h_mc <= v_h0))
        throw ConfigError("momentary-cessation threshold out of order");
    for (double t : {t_l0, t_l1, t_h1, t_h0, mc_deact_delay, mc_react_delay})
        if (!(t >= 0.0)) throw ConfigError("VRT times must be non-negative");
}

VrtBounds VrtBounds::for_code(DerCode code) {
    VrtBounds b;
    switch (code) {
    case DerCode::inv2005:
        b.v_l0 = {0.2, 0.8};
        b.v_l1 = {0.84, 0.92};
        b.v_h1 = {1.08, 1.12};
        b.v_h_mc = {0.0, 0.0};
        b.v_h0 = {1.14, 1.20};
        b.t_l0 = {0.0, 0.0};
        b.t_l1 = {0.0, 0.2};
        b.t_h1 = {0.0, 1.6};
        b.t_h0 = {0.0, 0.0};
        b.mc_deact_delay = {0.0, 0.0};
        b.mc_react_delay = {0.0, 0.0};
        break;
    case DerCode::inv2015:
        b.v_l0 = {0.1, 0.5};
        b.v_l1 = {0.84, 0.92};
        b.v_h1 = {1.12, 1.14};
        b.v_h_mc = {0.0, 0.0};
        b.v_h0 = {1.14, 1.16};
        b.t_l0 = {0.0, 0.0};
        b.t_l1 = {0.0, 1.0};
        b.t_h1 = {0.0, 1.0};
        b.t_h0 = {0.0, 0.0};
        b.mc_deact_delay = {0.0, 0.0};
        b.mc_react_delay = {0.0, 0.0};
        break;
    case DerCode::inv2020:
        b.v_l0 = {0.29, 0.31};
        b.v_l1 = {0.77, 0.79};
        b.v_h1 = {1.14, 1.16};
        b.v_h_mc = {1.12, 1.14};
        b.v_h0 = {1.19, 1.21};
        b.t_l0 = {1.0, 2.0};
        b.t_l1 = {10.0, 10.0};
        b.t_h1 = {1.0, 2.0};
        b.t_h0 = {0.0, 0.0};
        b.mc_deact_delay = {0.0, 0.1};
        b.mc_react_delay = {0.0, 0.4};
        break;
    }
    return b;
}

bool VrtBounds::contains(const VrtSettings& s) const {
    const bool mc_ok = s.code != DerCode::inv2020 || v_h_mc.contains(s.v_h_mc);
    return v_l0.contains(s.v_l0) && v_l1.contains(s.v_l1) && v_h1.contains(s.v_h1) && mc_ok &&
           v_h0.contains(s.v_h0) && t_l0.contains(s.t_l0) && t_l1.contains(s.t_l1) && t_h1.contains(s.t_h1) &&
           t_h0.contains(s.t_h0) && mc_deact_delay.contains(s.mc_deact_delay) &&
           mc_react_delay.contains(s.mc_react_delay);
}

double volt_var_ref(double v, const DerControlParams& p) {
    double iq = 0.0;
    if (v < p.dbq1)
        iq = p.kqv1 * (p.dbq1 - v);
    else if (v > p.dbq2)
        iq = -p.kqv2 * (v - p.dbq2);
    return std::clamp(iq, -p.iq_limit, p.iq_limit);
}

double volt_watt_ref(double v, const DerControlParams& p) {
    if (v <= p.dbp1) return 1.0;
    if (v >= p.dbp2) return p.p_floor;
    return 1.0 - (1.0 - p.p_floor) * (v - p.dbp1) / (p.dbp2 - p.dbp1);
}

void vrt_update(DerUnit& unit, double v, double dt) {
    auto& s = unit.state;
    if (s.mode == DerMode::tripped) return;
    const auto& vrt = unit.vrt;
    const bool cessation_capable = unit.code == DerCode::inv2020;
    const double upper_continuous = cessation_capable ? vrt.v_h_mc : vrt.v_h1;

    if (v >= vrt.v_l1 && v <= upper_continuous) {
        s.below_l1 = s.below_l0 = s.above_h1 = s.above_h0 = s.mc_pending = 0.0;
        if (s.mode == DerMode::momentary_cessation) {
            s.react_pending += dt;
            if (s.react_pending >= vrt.mc_react_delay) {
                s.mode = DerMode::continuous;
                s.react_pending = 0.0;
            }
        } else {
            s.mode = DerMode::continuous;
        }
        return;
    }
    s.react_pending = 0.0;

    bool trip = false;
    if (v < vrt.v_l1) {
        s.below_l1 += dt;
        trip |= s.below_l1 >= vrt.t_l1;
    }
    if (v < vrt.v_l0) {
        s.below_l0 += dt;
        trip |= s.below_l0 >= vrt.t_l0;
    }
    if (v > vrt.v_h1) {
        s.above_h1 += dt;
        trip |= s.above_h1 >= vrt.t_h1;
    }
    if (v > vrt.v_h0) {
        s.above_h0 += dt;
        trip |= s.above_h0 >= vrt.t_h0;
    }
    if (trip) {
        s.mode = DerMode::tripped;
        return;
    }

    const bool cessation_region = cessation_capable && (v < vrt.v_l0 || v > vrt.v_h_mc);
    if (cessation_region) {
        s.mc_pending += dt;
        if (s.mode != DerMode::momentary_cessation && s.mc_pending >= vrt.mc_deact_delay)
            s.mode = DerMode::momentary_cessation;
    } else {
        s.mc_pending = 0.0;
    }
    if (s.mode == DerMode::continuous) s.mode = DerMode::mandatory;
}

namespace {

struct CurrentRefs {
    double ip = 0.0;
    double iq = 0.0;
};

CurrentRefs current_refs(const DerControlParams& p, double v_filt, double q_vv, double p_ord) {
    CurrentRefs r;
    r.iq = q_vv;
    r.ip = p_ord / std::max(v_filt, 0.01);
    if (p.volt_var && v_filt < p.dbq1) {
        r.iq = std::clamp(r.iq, -p.i_max, p.i_max);
        r.ip = std::min(r.ip, std::sqrt(std::max(0.0, p.i_max * p.i_max - r.iq * r.iq)));
    } else {
        r.ip = std::min(r.ip, p.i_max);
        const double iq_room = std::sqrt(std::max(0.0, p.i_max * p.i_max - r.ip * r.ip));
        r.iq = std::clamp(r.iq, -iq_room, iq_room);
    }
    return r;
}

Complex output_current(const DerUnit& unit, Complex v_terminal) {
    if (!unit.active()) return {0.0, 0.0};
    const double mag = std::abs(v_terminal);
    const Complex unit_angle = mag > 0.0 ? v_terminal / mag : Complex{1.0, 0.0};
    return Complex{unit.state.ip, -unit.state.iq} * unit_angle * unit.rating;
}

} // namespace

Complex init_unit(DerUnit& unit, Complex v_terminal) {
    auto& s = unit.state;
    const auto& p = unit.control;
    s = DerUnitState{};
    s.v_filt = std::abs(v_terminal);
    s.q_vv = p.volt_var ? volt_var_ref(s.v_filt, p) : 0.0;
    s.p_vw = p.volt_watt ? volt_watt_ref(s.v_filt, p) : 1.0;
    s.p_ord = std::min(1.0, s.p_vw);
    const auto refs = current_refs(p, s.v_filt, s.q_vv, s.p_ord);
    s.ip = refs.ip;
    s.iq = refs.iq;
    return output_current(unit, v_terminal);
}

Complex der_step(DerUnit& unit, Complex v_terminal, double dt) {
    auto& s = unit.state;
    const auto& p = unit.control;
    s.v_filt += (std::abs(v_terminal) - s.v_filt) * lag_factor(dt, p.trv);
    vrt_update(unit, s.v_filt, dt);

    if (p.volt_var) s.q_vv += (volt_var_ref(s.v_filt, p) - s.q_vv) * lag_factor(dt, p.tqv);
    if (p.volt_watt) s.p_vw += (volt_watt_ref(s.v_filt, p) - s.p_vw) * lag_factor(dt, p.tpv);

    if (!unit.active()) {
        // Output is blocked directly; on reactivation it ramps back through the lags.
        s.p_ord = s.ip = s.iq = 0.0;
        return {0.0, 0.0};
    }
    s.p_ord += (std::min(1.0, s.p_vw) - s.p_ord) * lag_factor(dt, p.tpord);
    const auto refs = current_refs(p, s.v_filt, s.q_vv, s.p_ord);
    s.ip += (refs.ip - s.ip) * lag_factor(dt, p.tg);
    s.iq += (refs.iq - s.iq) * lag_factor(dt, p.tiq);
    return output_current(unit, v_terminal);
}

Complex unit_power(const DerUnit& unit, double v_mag) {
    if (!unit.active()) return {0.0, 0.0};
    return Complex{unit.state.ip, unit.state.iq} * v_mag * unit.rating;
}

void FleetSpec::validate() const {
    double sum = 0.0;
    for (double s : shares) {
        if (!(s >= 0.0)) throw ConfigError("code shares must be non-negative");
        sum += s;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("code shares must sum to 1");
    if (!(setpoint_std_fraction >= 0.0)) throw ConfigError("setpoint spread must be non-negative");
}

FleetSpec load_fleet_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fleet spec " + path.string());
    FleetSpec spec;
    try {
        const auto doc = nlohmann::json::parse(in);
        if (doc.contains("shares")) {
            const auto& sh = doc.at("shares");
            for (DerCode c : kAllCodes) spec.shares[code_index(c)] = sh.at(to_string(c)).get<double>();
        }
        spec.setpoint_std_fraction = doc.value("setpoint_std_fraction", spec.setpoint_std_fraction);
        spec.seed = doc.value("seed", spec.seed);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed fleet spec " + path.string() + ": " + e.what());
    }
    spec.validate();
    return spec;
}

std::vector<DerUnit> sample_fleet(const FleetSpec& spec, std::span<const PvNode> placement, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](const Interval& iv) {
        if (iv.hi <= iv.lo) return iv.lo;
        return std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng);
    };

    std::vector<DerUnit> units;
    units.reserve(placement.size() * kAllCodes.size());
    for (const auto& node : placement) {
        for (DerCode code : kAllCodes) {
            const double mean = node.pv_setpoint * spec.shares[code_index(code)];
            std::normal_distribution<double> dist(mean, spec.setpoint_std_fraction * mean);
            DerUnit u;
            u.code = code;
            u.bus_id = node.bus_id;
            u.bus_index = node.bus_index;
            // A unit clipped to exactly zero would drop out of the weighting; keep a floor.
            u.rating = std::max(spec.setpoint_std_fraction > 0.0 ? dist(rng) : mean, 1e-3 * mean);
            u.control = DerControlParams::for_code(code);

            const auto b = VrtBounds::for_code(code);
            auto& v = u.vrt;
            v.code = code;
            v.v_l0 = uniform(b.v_l0);
            v.v_l1 = uniform(b.v_l1);
            v.v_h1 = uniform(b.v_h1);
            v.v_h_mc = code == DerCode::inv2020 ? uniform(b.v_h_mc) : v.v_h1;
            v.v_h0 = uniform(b.v_h0);
            v.t_l0 = uniform(b.t_l0);
            v.t_l1 = uniform(b.t_l1);
            v.t_h1 = uniform(b.t_h1);
            v.t_h0 = uniform(b.t_h0);
            v.mc_deact_delay = uniform(b.mc_deact_delay);
            v.mc_react_delay = uniform(b.mc_react_delay);
            v.validate();
            units.push_back(u);
        }
    }
    return units;
}

double fleet_active_fraction(std::span<const DerUnit> units, DerCode code) {
    double total = 0.0;
    double active = 0.0;
    bool any = false;
    for (const auto& u : units) {
        if (u.code != code) continue;
        any = true;
        total += u.rating;
        if (u.active()) active += u.rating;
    }
    if (!any) throw ConfigError("fleet has no " + to_string(code) + " units");
    return total > 0.0 ? active / total : 0.0;
}

double weighted_fraction(const std::array<double, 3>& per_code, const std::array<double, 3>& shares) {
    return shares[0] * per_code[0] + shares[1] * per_code[1] + shares[2] * per_code[2];
}

} // namespace gridtrip
