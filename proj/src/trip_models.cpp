#include "gridtrip/trip_models.hpp"

#include "gridtrip/der_fleet.hpp"

#include <limits>

namespace gridtrip {

bool PiParams::feasible() const {
    const double orient = side == Side::under ? 1.0 : -1.0;
    const bool spans = orient * (v1_prop - v0_prop) > 0.0 && orient * (v1_int - v0_int) > 0.0;
    const bool times = t_deact > 0.0 && (!reactivation || t_rec > 0.0);
    const bool finite = std::isfinite(v0_prop + v1_prop + v0_int + v1_int + t_deact) &&
                        (!reactivation || std::isfinite(v0_rec + t_rec));
    return spans && times && finite;
}

void PiParams::validate() const {
    if (!feasible())
        throw ConfigError("PI parameters infeasible for the " + to_string(side) +
                          " side (span orientation or time constants)");
}

double pi_step(const PiParams& p, PiState& s, double v_ss, double dt) {
    s.v_filt += (v_ss - s.v_filt) * lag_factor(dt, p.trv);
    s.v_extreme = p.side == Side::under ? std::min(s.v_filt, s.v_extreme) : std::max(s.v_filt, s.v_extreme);

    const double p_im = clamp01((s.v_extreme - p.v0_prop) / (p.v1_prop - p.v0_prop));

    const double span = p.v1_int - p.v0_int;
    const double del_rate = clamp01((p.v1_int - s.v_filt) / span);
    s.p_del += del_rate * (dt / p.t_deact);
    const double del_lim = clamp01((p.v1_int - s.v_extreme) / span);
    s.p_del = std::min(s.p_del, del_lim);

    if (p.reactivation) {
        // Rate and limiter share the same ramp between v0_rec and v1_rec.
        const double rec = clamp01((s.v_filt - p.v0_rec) / (p.v1_rec() - p.v0_rec));
        s.p_rec += rec * (dt / p.t_rec);
        s.p_rec = std::min(s.p_rec, rec);
    }
    return clamp01(p_im - s.p_del + s.p_rec);
}

std::vector<double> pi_simulate(const PiParams& params, PiState state, std::span<const double> v_ss, double dt) {
    std::vector<double> out;
    out.reserve(v_ss.size());
    for (double v : v_ss) out.push_back(pi_step(params, state, v, dt));
    return out;
}

bool DerAParams::feasible() const {
    return v_l0 < v_l1 && v_h1 < v_h0 && v_r_frac >= 0.0 && v_r_frac <= 1.0 && t_vl0 >= 0.0 && t_vl1 >= 0.0 &&
           t_vh0 >= 0.0 && t_vh1 >= 0.0;
}

void DerAParams::validate() const {
    if (!feasible()) throw ConfigError("DER_A parameters infeasible (threshold order, timers or v_r_frac)");
}

namespace {

// Under-side logic. The over side reuses it on negated voltages, which maps
// the running maximum onto a running minimum.
double dera_side(DerASideState& s, double v, double inner, double outer, double t_inner, double t_outer,
                 double v_r_frac, double dt) {
    const auto f = [&](double x) { return clamp01((x - outer) / (inner - outer)); };
    const bool past_inner = v < inner;
    const bool past_outer = v < outer;
    s.dwell_inner = past_inner ? s.dwell_inner + dt : 0.0;
    s.dwell_outer = past_outer ? s.dwell_outer + dt : 0.0;
    s.excursion_extreme = past_inner ? std::min(s.excursion_extreme, v) : v;

    if ((past_inner && s.dwell_inner >= t_inner) || (past_outer && s.dwell_outer >= t_outer)) {
        s.armed = true;
        s.latched_loss = std::max(s.latched_loss, 1.0 - f(s.excursion_extreme));
    }
    if (!s.armed) return 1.0;
    const double kept = 1.0 - s.latched_loss;
    return kept + v_r_frac * std::max(0.0, f(v) - kept);
}

} // namespace

double dera_step(const DerAParams& p, DerAState& s, double v_ss, double dt) {
    s.v_filt += (v_ss - s.v_filt) * lag_factor(dt, p.trv);
    const double under = dera_side(s.under, s.v_filt, p.v_l1, p.v_l0, p.t_vl1, p.t_vl0, p.v_r_frac, dt);
    const double over = dera_side(s.over, -s.v_filt, -p.v_h1, -p.v_h0, p.t_vh1, p.t_vh0, p.v_r_frac, dt);
    return clamp01(under * over);
}

std::vector<double> dera_simulate(const DerAParams& params, DerAState state, std::span<const double> v_ss,
                                  double dt) {
    std::vector<double> out;
    out.reserve(v_ss.size());
    for (double v : v_ss) out.push_back(dera_step(params, state, v, dt));
    return out;
}

std::string to_string(Family f) { return f == Family::pi ? "pi" : "dera"; }

Family parse_family(std::string_view s) {
    if (s == "pi" || s == "PI") return Family::pi;
    if (s == "dera" || s == "DERA" || s == "deraemo1") return Family::dera;
    throw ConfigError("unknown model family '" + std::string(s) + "'");
}

void CompositeModel::validate() const {
    const double sum = shares[0] + shares[1] + shares[2];
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("model code weights must sum to 1");
    for (std::size_t c = 0; c < 3; ++c) {
        if (family == Family::pi) {
            pi_under[c].validate();
            pi_over[c].validate();
        } else {
            dera[c].validate();
        }
    }
}

CompositePrediction composite_predict(const CompositeModel& model, std::span<const double> v_ss, double dt) {
    CompositePrediction out;
    for (std::size_t c = 0; c < 3; ++c) {
        if (model.family == Family::pi) {
            auto under = pi_simulate(model.pi_under[c], PiState{}, v_ss, dt);
            const auto over = pi_simulate(model.pi_over[c], PiState{}, v_ss, dt);
            for (std::size_t k = 0; k < under.size(); ++k) under[k] *= over[k];
            out.per_code[c] = std::move(under);
        } else {
            out.per_code[c] = dera_simulate(model.dera[c], DerAState{}, v_ss, dt);
        }
    }
    out.weighted.resize(v_ss.size());
    for (std::size_t k = 0; k < v_ss.size(); ++k)
        out.weighted[k] = weighted_fraction({out.per_code[0][k], out.per_code[1][k], out.per_code[2][k]},
                                            model.shares);
    return out;
}

CompositeModel with_filtered_input(CompositeModel model) {
    for (auto& p : model.pi_under) p.trv = 0.0;
    for (auto& p : model.pi_over) p.trv = 0.0;
    for (auto& p : model.dera) p.trv = 0.0;
    return model;
}

DefaultModels make_default_models() {
    DefaultModels m;

    DerAParams der_a; // struct defaults are the DER_A recommendations
    m.der_a.name = "DER_A";
    m.der_a.family = Family::dera;
    m.der_a.dera = {der_a, der_a, der_a};

    DerAParams aemo2005;
    aemo2005.v_l0 = 0.75;
    aemo2005.v_l1 = 0.9;
    aemo2005.v_h1 = 1.13;
    aemo2005.v_h0 = 1.18;
    aemo2005.v_r_frac = 0.625;
    aemo2005.t_vl0 = 1.58;
    aemo2005.t_vl1 = 0.027;
    aemo2005.t_vh0 = 0.88;
    aemo2005.t_vh1 = 1.94;

    DerAParams aemo2015;
    aemo2015.v_l0 = 0.5;
    aemo2015.v_l1 = 0.9;
    aemo2015.v_h1 = 1.13;
    aemo2015.v_h0 = 1.18;
    aemo2015.v_r_frac = 0.713;
    aemo2015.t_vl0 = 1.77;
    aemo2015.t_vl1 = 0.037;
    aemo2015.t_vh0 = 0.16;
    aemo2015.t_vh1 = 1.87;

    DerAParams aemo2020 = aemo2015;
    aemo2020.v_h1 = 1.19;
    aemo2020.v_h0 = 1.21;
    aemo2020.v_r_frac = 1.0;

    m.deraemo1.name = "DERAEMO1";
    m.deraemo1.family = Family::dera;
    m.deraemo1.dera = {aemo2005, aemo2015, aemo2020};
    return m;
}

std::vector<std::string> pi_parameter_names(Side side, bool reactivation) {
    std::vector<std::string> names =
        side == Side::under
            ? std::vector<std::string>{"v_l0_p", "v_l1_p", "v_l0_i_minus", "v_l1_i_minus", "T_l_i_minus"}
            : std::vector<std::string>{"v_h1_p", "v_h0_p", "v_h1_i_minus", "v_h0_i_minus", "T_h_i_minus"};
    if (reactivation) {
        if (side == Side::under) {
            names.insert(names.end(), {"v_l0_i_plus", "T_l_i_plus"});
        } else {
            names.insert(names.end(), {"v_h0_i_plus", "T_h_i_plus"});
        }
    }
    return names;
}

std::vector<double> pi_to_vector(const PiParams& p) {
    std::vector<double> x = p.side == Side::under
                                ? std::vector<double>{p.v0_prop, p.v1_prop, p.v0_int, p.v1_int, p.t_deact}
                                : std::vector<double>{p.v1_prop, p.v0_prop, p.v1_int, p.v0_int, p.t_deact};
    if (p.reactivation) x.insert(x.end(), {p.v0_rec, p.t_rec});
    return x;
}

PiParams pi_from_vector(Side side, std::span<const double> x, bool reactivation, double trv) {
    const std::size_t expected = reactivation ? 7 : 5;
    if (x.size() != expected)
        throw ConfigError("PI decision vector needs " + std::to_string(expected) + " entries");
    PiParams p;
    p.side = side;
    p.trv = trv;
    p.reactivation = reactivation;
    if (side == Side::under) {
        p.v0_prop = x[0];
        p.v1_prop = x[1];
        p.v0_int = x[2];
        p.v1_int = x[3];
    } else {
        p.v1_prop = x[0];
        p.v0_prop = x[1];
        p.v1_int = x[2];
        p.v0_int = x[3];
    }
    p.t_deact = x[4];
    if (reactivation) {
        p.v0_rec = x[5];
        p.t_rec = x[6];
    } else {
        p.v0_rec = side == Side::under ? std::numeric_limits<double>::infinity()
                                       : -std::numeric_limits<double>::infinity();
        p.t_rec = 1.0;
    }
    return p;
}

std::vector<std::string> dera_parameter_names() {
    return {"v_l0", "v_l1", "v_h1", "v_h0", "v_r_frac", "t_vl0", "t_vl1", "t_vh0", "t_vh1"};
}

std::vector<double> dera_to_vector(const DerAParams& p) {
    return {p.v_l0, p.v_l1, p.v_h1, p.v_h0, p.v_r_frac, p.t_vl0, p.t_vl1, p.t_vh0, p.t_vh1};
}

DerAParams dera_from_vector(std::span<const double> x, double trv) {
    if (x.size() != 9) throw ConfigError("DER_A decision vector needs 9 entries");
    DerAParams p;
    p.v_l0 = x[0];
    p.v_l1 = x[1];
    p.v_h1 = x[2];
    p.v_h0 = x[3];
    p.v_r_frac = x[4];
    p.t_vl0 = x[5];
    p.t_vl1 = x[6];
    p.t_vh0 = x[7];
    p.t_vh1 = x[8];
    p.trv = trv;
    return p;
}

nlohmann::json to_json(const PiParams& p) {
    nlohmann::json j;
    j["side"] = to_string(p.side);
    j["reactivation"] = p.reactivation;
    j["trv"] = p.trv;
    const auto names = pi_parameter_names(p.side, p.reactivation);
    const auto values = pi_to_vector(p);
    for (std::size_t k = 0; k < names.size(); ++k) j["params"][names[k]] = values[k];
    return j;
}

PiParams pi_from_json(const nlohmann::json& j) {
    try {
        const Side side = parse_side(j.at("side").get<std::string>());
        const bool reactivation = j.at("reactivation").get<bool>();
        std::vector<double> x;
        for (const auto& name : pi_parameter_names(side, reactivation)) x.push_back(j.at("params").at(name).get<double>());
        return pi_from_vector(side, x, reactivation, j.value("trv", 0.02));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed PI parameter record: ") + e.what());
    }
}

nlohmann::json to_json(const DerAParams& p) {
    nlohmann::json j;
    j["trv"] = p.trv;
    const auto names = dera_parameter_names();
    const auto values = dera_to_vector(p);
    for (std::size_t k = 0; k < names.size(); ++k) j["params"][names[k]] = values[k];
    return j;
}

DerAParams dera_from_json(const nlohmann::json& j) {
    try {
        std::vector<double> x;
        for (const auto& name : dera_parameter_names()) x.push_back(j.at("params").at(name).get<double>());
        return dera_from_vector(x, j.value("trv", 0.02));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed DER_A parameter record: ") + e.what());
    }
}

} // namespace gridtrip
