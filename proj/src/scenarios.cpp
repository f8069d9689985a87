#include "gridtrip/scenarios.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace gridtrip {

std::string to_string(SuiteKind k) { return k == SuiteKind::in_sample ? "in_sample" : "out_of_sample"; }

SuiteKind parse_suite(std::string_view s) {
    if (s == "in_sample" || s == "in-sample") return SuiteKind::in_sample;
    if (s == "out_of_sample" || s == "out-of-sample") return SuiteKind::out_of_sample;
    throw ConfigError("unknown suite kind '" + std::string(s) + "'");
}

void ScenarioSpec::validate() const {
    if (!(dt > 0.0)) throw ConfigError("scenario dt must be positive");
    if (n_dg < 1) throw ConfigError("scenario needs n_dg >= 1");
    if (disturbance) {
        disturbance->validate();
        const double end = disturbance->kind == DisturbanceEvent::Kind::fault ? disturbance->t_clear
                                                                               : disturbance->t_start;
        if (!(horizon > end)) throw ConfigError("scenario horizon must extend past the disturbance");
    } else if (!(horizon > 0.0)) {
        throw ConfigError("scenario horizon must be positive");
    }
}

CoSimSystem load_cosim_system(int n_dg, std::uint64_t seed, const std::filesystem::path& fixtures_dir) {
    CoSimSystem sys;
    sys.grid = assemble_test_system(n_dg, seed, fixtures_dir);
    sys.machines = load_machine_fixture(fixtures_dir / "machines_ieee9.json");
    sys.fleet = load_fleet_spec(fixtures_dir / "fleet_default.json");
    sys.fleet.seed = seed;
    sys.units = sample_fleet(sys.fleet, sys.grid.pv_nodes, seed);
    return sys;
}

namespace {

constexpr double kSystemMva = 100.0;
constexpr double kMeasurementTrv = 0.02;

struct MachineSlot {
    MachineParams params;
    std::size_t bus = 0;
    MachineState state;
    ExciterState exciter;
    double pm = 0.0;
};

struct Derivs {
    MachineDerivatives m;
    ExciterDerivatives e;
};

// Network with machines in Norton form. The stator injection of machine j is
// c_j + M_j [Re V, Im V]; the Norton admittance y_m is added to the matrix and
// the remainder (M_j + y_m) V_j is resolved exactly through a small real
// system over the machine buses.
class NetworkSolver {
public:
    NetworkSolver(const ComplexMatrix& y, const std::vector<MachineSlot>& machines) : machines_(machines) {
        ComplexMatrix y_dyn = y;
        for (const auto& m : machines) {
            const Complex ym = 1.0 / Complex{0.0, 0.5 * (m.params.xd_prime + m.params.xq_prime)};
            y_dyn(m.bus, m.bus) += ym;
            Eigen::Matrix2d ym_real;
            ym_real << ym.real(), -ym.imag(), ym.imag(), ym.real();
            norton_.push_back(ym_real);
        }
        lu_ = std::make_unique<FactorizedNetwork>(y_dyn);
        const std::size_t n = y.rows();
        z_cols_.resize(n, static_cast<Eigen::Index>(machines.size()));
        for (std::size_t j = 0; j < machines.size(); ++j) {
            ComplexVector e = ComplexVector::Zero(static_cast<Eigen::Index>(n));
            e(static_cast<Eigen::Index>(machines[j].bus)) = 1.0;
            z_cols_.col(static_cast<Eigen::Index>(j)) = lu_->solve(e);
        }
    }

    ComplexVector solve(const std::vector<MachineState>& states, const ComplexVector& other) const {
        const std::size_t nm = machines_.size();
        ComplexVector rhs = other;
        std::vector<Eigen::Matrix2d> m(nm);
        for (std::size_t j = 0; j < nm; ++j) {
            const auto a = stator_affine(states[j], machines_[j].params);
            rhs(static_cast<Eigen::Index>(machines_[j].bus)) += a.constant;
            m[j] = a.coupling + norton_[j];
        }
        ComplexVector v = lu_->solve(rhs);

        const Eigen::Index dim = static_cast<Eigen::Index>(2 * nm);
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(dim, dim);
        Eigen::VectorXd b(dim);
        for (std::size_t i = 0; i < nm; ++i) {
            const Complex v0 = v(static_cast<Eigen::Index>(machines_[i].bus));
            b(2 * i) = v0.real();
            b(2 * i + 1) = v0.imag();
            for (std::size_t j = 0; j < nm; ++j) {
                const Complex z = z_cols_(static_cast<Eigen::Index>(machines_[i].bus), static_cast<Eigen::Index>(j));
                Eigen::Matrix2d zr;
                zr << z.real(), -z.imag(), z.imag(), z.real();
                a.block<2, 2>(2 * i, 2 * j) -= zr * m[j];
            }
        }
        const Eigen::VectorXd u = a.partialPivLu().solve(b);
        for (std::size_t j = 0; j < nm; ++j) {
            const Eigen::Vector2d r = m[j] * u.segment<2>(2 * j);
            v += z_cols_.col(static_cast<Eigen::Index>(j)) * Complex{r(0), r(1)};
        }
        for (Eigen::Index k = 0; k < v.size(); ++k)
            if (!std::isfinite(v(k).real()) || !std::isfinite(v(k).imag()))
                throw NumericalError("network solution is not finite");
        return v;
    }

private:
    const std::vector<MachineSlot>& machines_;
    std::vector<Eigen::Matrix2d> norton_;
    std::unique_ptr<FactorizedNetwork> lu_;
    ComplexMatrix z_cols_;
};

Derivs derivatives(const MachineSlot& slot, const MachineState& s, const ExciterState& e, Complex v,
                   const ExciterParams& ex, double omega_s) {
    return {machine_derivatives(s, e, v, slot.pm, slot.params, omega_s), avr_derivatives(e, std::abs(v), ex)};
}

} // namespace

SimulationTrace run_cosimulation(const CoSimSystem& system, const ScenarioSpec& scenario, CoSimLog* log) {
    scenario.validate();
    const auto& grid = system.grid;
    const std::size_t n = grid.network.size();
    const double omega_s = 2.0 * std::numbers::pi * grid.frequency_hz;
    const auto& ex = system.machines.exciter;

    // Initialization: power flow with inverter output as PQ injections, then
    // settle the inverters at the solved voltages until their output agrees.
    std::vector<DerUnit> units = system.units;
    std::vector<Complex> s_der(n, Complex{});
    for (const auto& u : units) s_der[u.bus_index] += u.rating;

    PowerFlowResult pf;
    PowerFlowOptions pf_options;
    for (int pass = 0;; ++pass) {
        std::vector<BusSetpoint> sp = grid.setpoints;
        for (std::size_t k = 0; k < n; ++k) {
            if (grid.network.buses()[k].kind != BusKind::load) continue;
            sp[k].p = s_der[k].real() - grid.load_power[k].real();
            sp[k].q = s_der[k].imag() - grid.load_power[k].imag();
        }
        pf = solve_power_flow(grid.network, sp, pf_options);
        pf_options.initial = pf.voltages;

        std::vector<Complex> updated(n, Complex{});
        for (auto& u : units) {
            u.state = DerUnitState{};
            init_unit(u, pf.voltages(static_cast<Eigen::Index>(u.bus_index)));
            updated[u.bus_index] += unit_power(u, std::abs(pf.voltages(static_cast<Eigen::Index>(u.bus_index))));
        }
        double change = 0.0;
        for (std::size_t k = 0; k < n; ++k) change = std::max(change, std::abs(updated[k] - s_der[k]));
        s_der = std::move(updated);
        if (change <= 1e-12) break;
        if (pass >= 50) throw NumericalError("inverter initialization did not settle");
    }

    std::vector<Complex> y_load(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double vm = std::abs(pf.voltages(static_cast<Eigen::Index>(k)));
        y_load[k] = std::conj(grid.load_power[k]) / (vm * vm);
    }
    const PhasorNetwork loaded = grid.network.with_added_shunts(y_load);

    std::vector<MachineSlot> machines;
    for (const auto& mp : system.machines.machines) {
        MachineSlot slot;
        slot.params = mp.on_base(kSystemMva);
        slot.bus = grid.network.index_of(mp.bus);
        const auto k = static_cast<Eigen::Index>(slot.bus);
        const Complex s_gen = pf.injections(k) + grid.load_power[slot.bus] - s_der[slot.bus];
        const auto eq = init_equilibrium(pf.voltages(k), s_gen, slot.params, ex);
        slot.state = eq.machine;
        slot.exciter = eq.exciter;
        slot.pm = eq.pm;
        machines.push_back(slot);
    }
    const std::size_t nm = machines.size();

    const auto& event = scenario.disturbance;
    const bool has_fault = event && event->kind == DisturbanceEvent::Kind::fault;
    const bool has_step = event && event->kind == DisturbanceEvent::Kind::injection_step;
    const NetworkSolver base_solver(loaded.admittance(), machines);
    std::unique_ptr<NetworkSolver> fault_solver;
    if (has_fault) {
        const auto overlay = apply_disturbance(loaded, *event, event->t_start);
        fault_solver = std::make_unique<NetworkSolver>(overlay_admittance(loaded.admittance(), overlay), machines);
    }
    const auto solver_at = [&](double t) -> const NetworkSolver& {
        return has_fault && event->active_at(t) ? *fault_solver : base_solver;
    };
    const std::size_t step_bus = has_step ? grid.network.index_of(event->bus) : 0;

    ComplexVector i_der = ComplexVector::Zero(static_cast<Eigen::Index>(n));
    for (const auto& u : units) {
        const auto k = static_cast<Eigen::Index>(u.bus_index);
        i_der(k) += std::conj(unit_power(u, std::abs(pf.voltages(k))) / pf.voltages(k));
    }
    const auto other_currents = [&](double t, const ComplexVector& v_prev) {
        ComplexVector i = i_der;
        if (has_step && event->active_at(t)) {
            const auto k = static_cast<Eigen::Index>(step_bus);
            i(k) += std::conj(Complex{event->dp, event->dq} / v_prev(k));
        }
        return i;
    };

    std::vector<MachineState> x(nm);
    std::vector<ExciterState> e(nm);
    for (std::size_t j = 0; j < nm; ++j) {
        x[j] = machines[j].state;
        e[j] = machines[j].exciter;
    }

    SimulationTrace trace;
    trace.scenario = scenario;
    trace.shares = system.fleet.shares;
    trace.inverter_count = units.size();
    const auto steps = static_cast<std::size_t>(std::llround(scenario.horizon / scenario.dt));
    trace.t.reserve(steps + 1);
    trace.v_ss_filt.reserve(steps + 1);
    for (auto& f : trace.frac) f.reserve(steps + 1);
    trace.frac_weighted.reserve(steps + 1);

    const auto ss = static_cast<Eigen::Index>(grid.substation_index);
    double v_meas = std::abs(pf.voltages(ss));
    ComplexVector v_prev = pf.voltages;
    const double dt = scenario.dt;

    for (std::size_t step = 0;; ++step) {
        const double t = static_cast<double>(step) * dt;
        const ComplexVector v = solver_at(t).solve(x, other_currents(t, v_prev));

        i_der.setZero();
        for (auto& u : units) {
            const auto k = static_cast<Eigen::Index>(u.bus_index);
            i_der(k) += der_step(u, v(k), dt);
        }
        v_meas += (std::abs(v(ss)) - v_meas) * lag_factor(dt, kMeasurementTrv);

        std::array<double, 3> frac{};
        for (DerCode c : kAllCodes) frac[code_index(c)] = fleet_active_fraction(units, c);
        trace.t.push_back(t);
        trace.v_ss_filt.push_back(v_meas);
        for (std::size_t c = 0; c < 3; ++c) trace.frac[c].push_back(frac[c]);
        trace.frac_weighted.push_back(weighted_fraction(frac, trace.shares));
        if (log) {
            std::vector<double> mags(n);
            for (std::size_t k = 0; k < n; ++k) mags[k] = std::abs(v(static_cast<Eigen::Index>(k)));
            log->bus_voltage.push_back(std::move(mags));
        }
        if (step == steps) break;

        // Heun: predictor with the current voltages, corrector with the
        // voltages re-solved at the end of the step.
        std::vector<Derivs> f0(nm);
        std::vector<MachineState> xp(nm);
        std::vector<ExciterState> ep(nm);
        for (std::size_t j = 0; j < nm; ++j) {
            const auto k = static_cast<Eigen::Index>(machines[j].bus);
            f0[j] = derivatives(machines[j], x[j], e[j], v(k), ex, omega_s);
            xp[j] = x[j];
            xp[j].delta += dt * f0[j].m.delta;
            xp[j].d_omega += dt * f0[j].m.d_omega;
            xp[j].eq_prime += dt * f0[j].m.eq_prime;
            xp[j].ed_prime += dt * f0[j].m.ed_prime;
            ep[j] = e[j];
            ep[j].efd += dt * f0[j].e.efd;
            ep[j].vr = std::clamp(ep[j].vr + dt * f0[j].e.vr, ex.vr_min, ex.vr_max);
            ep[j].rf += dt * f0[j].e.rf;
        }
        const ComplexVector vp = solver_at(t + dt).solve(xp, other_currents(t + dt, v));
        for (std::size_t j = 0; j < nm; ++j) {
            const auto k = static_cast<Eigen::Index>(machines[j].bus);
            const auto f1 = derivatives(machines[j], xp[j], ep[j], vp(k), ex, omega_s);
            x[j].delta += 0.5 * dt * (f0[j].m.delta + f1.m.delta);
            x[j].d_omega += 0.5 * dt * (f0[j].m.d_omega + f1.m.d_omega);
            x[j].eq_prime += 0.5 * dt * (f0[j].m.eq_prime + f1.m.eq_prime);
            x[j].ed_prime += 0.5 * dt * (f0[j].m.ed_prime + f1.m.ed_prime);
            e[j].efd += 0.5 * dt * (f0[j].e.efd + f1.e.efd);
            e[j].vr = std::clamp(e[j].vr + 0.5 * dt * (f0[j].e.vr + f1.e.vr), ex.vr_min, ex.vr_max);
            e[j].rf += 0.5 * dt * (f0[j].e.rf + f1.e.rf);
            if (!std::isfinite(x[j].delta) || !std::isfinite(x[j].eq_prime) || !std::isfinite(e[j].efd))
                throw NumericalError("machine state became non-finite in " + scenario.name);
        }
        v_prev = v;
    }

    if (log) {
        log->trips.assign(3, 0);
        for (const auto& u : units)
            if (u.state.mode == DerMode::tripped) ++log->trips[code_index(u.code)];
    }
    return trace;
}

std::vector<ScenarioSpec> generate_suite(SuiteKind kind, const SuiteOptions& o) {
    const bool in = kind == SuiteKind::in_sample;
    const double ratio = in ? 2.0 : 0.8;
    const double fault_duration = in ? 0.060 : 0.120;
    const auto sweep = [](double lo, double hi, int count, int k) {
        return count <= 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
    };
    const auto base = [&](std::string name, Side side, DisturbanceEvent ev) {
        ScenarioSpec s;
        s.name = std::move(name);
        s.label = kind;
        s.side = side;
        s.disturbance = ev;
        s.horizon = o.horizon;
        s.dt = o.dt;
        s.n_dg = o.n_dg;
        s.seed = o.seed;
        return s;
    };
    const std::string prefix = in ? "in" : "out";
    char buf[64];
    std::vector<ScenarioSpec> out;
    for (int k = 0; k < o.steps_per_side; ++k) {
        const double ds = sweep(o.under_step_min, o.under_step_max, o.steps_per_side, k);
        const double dp = ds / std::sqrt(1.0 + ratio * ratio);
        std::snprintf(buf, sizeof buf, "%s_under_step_%02d", prefix.c_str(), k);
        out.push_back(base(buf, Side::under, DisturbanceEvent::injection_step(o.bus, -dp, -ratio * dp, o.t_start)));
    }
    for (int k = 0; k < o.faults; ++k) {
        // Geometric sweep of the fault conductance: mild to deep dips.
        const double g = o.faults <= 1 ? o.fault_g_min
                                       : o.fault_g_min * std::pow(o.fault_g_max / o.fault_g_min,
                                                                  static_cast<double>(k) / (o.faults - 1));
        std::snprintf(buf, sizeof buf, "%s_under_fault_%02d", prefix.c_str(), k);
        out.push_back(base(buf, Side::under, DisturbanceEvent::fault(o.bus, g, o.t_start, o.t_start + fault_duration)));
    }
    for (int k = 0; k < o.over_steps; ++k) {
        const double ds = sweep(o.over_step_min, o.over_step_max, o.over_steps, k);
        const double dp = ds / std::sqrt(1.0 + ratio * ratio);
        std::snprintf(buf, sizeof buf, "%s_over_step_%02d", prefix.c_str(), k);
        out.push_back(base(buf, Side::over, DisturbanceEvent::injection_step(o.bus, dp, ratio * dp, o.t_start)));
    }
    for (auto& s : out) s.validate();
    return out;
}

std::vector<SimulationTrace> run_suite(const CoSimSystem& system, const std::vector<ScenarioSpec>& scenarios) {
    std::vector<SimulationTrace> out(scenarios.size());
    parallel_for(scenarios.size(), [&](std::size_t i) { out[i] = run_cosimulation(system, scenarios[i]); });
    return out;
}

SuiteReport evaluate_models(const std::vector<SimulationTrace>& traces, const std::vector<NamedModel>& models) {
    for (const auto& tr : traces)
        if (std::abs(tr.dt() - traces.front().dt()) > 1e-15) throw ConfigError("traces differ in dt");
    SuiteReport report;
    for (const auto& m : models) {
        m.model.validate();
        report.models.push_back(m.name);
        const CompositeModel replay = with_filtered_input(m.model);
        std::array<double, 2> sum{0.0, 0.0};
        std::array<std::size_t, 2> count{0, 0};
        for (const auto& tr : traces) {
            const auto pred = composite_predict(replay, tr.v_ss_filt, tr.dt());
            const double err = mae(pred.weighted, tr.frac_weighted);
            const std::size_t s = tr.scenario.side == Side::under ? 0 : 1;
            sum[s] += err * static_cast<double>(tr.size());
            count[s] += tr.size();
            report.per_scenario.push_back({m.name, tr.scenario.name, tr.scenario.side, err});
        }
        std::array<double, 2> mae_side{};
        for (std::size_t s = 0; s < 2; ++s)
            mae_side[s] = count[s] ? sum[s] / static_cast<double>(count[s]) : std::numeric_limits<double>::quiet_NaN();
        report.mae.push_back(mae_side);
    }
    return report;
}

double SuiteReport::at(const std::string& model, Side side) const {
    for (std::size_t i = 0; i < models.size(); ++i)
        if (models[i] == model) return mae[i][side == Side::under ? 0 : 1];
    throw ConfigError("model '" + model + "' not in report");
}

nlohmann::json SuiteReport::to_json() const {
    const auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["models"] = models;
    j["mae_percent"] = nlohmann::json::object();
    for (std::size_t i = 0; i < models.size(); ++i)
        j["mae_percent"][models[i]] = {{"under", num(mae[i][0])}, {"over", num(mae[i][1])}};
    j["per_scenario"] = nlohmann::json::array();
    for (const auto& e : per_scenario)
        j["per_scenario"].push_back(
            {{"model", e.model}, {"scenario", e.scenario}, {"side", to_string(e.side)}, {"mae_percent", num(e.mae)}});
    j["config"] = config;
    return j;
}

std::string SuiteReport::table() const {
    std::ostringstream out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-24s %10s %10s\n", "model", "under [%]", "over [%]");
    out << buf;
    for (std::size_t i = 0; i < models.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%-24s %10.2f %10.2f\n", models[i].c_str(), mae[i][0], mae[i][1]);
        out << buf;
    }
    return out.str();
}

std::vector<FitTrace> fit_traces(const std::vector<SimulationTrace>& traces, DerCode code, std::optional<Side> side) {
    std::vector<FitTrace> out;
    for (const auto& tr : traces) {
        if (side && tr.scenario.side != *side) continue;
        out.push_back({tr.v_ss_filt, tr.frac[code_index(code)]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

const std::array<const char*, 6> kColumns{"t", "v_ss_filt", "frac_2005", "frac_2015", "frac_2020", "frac_weighted"};

nlohmann::json event_json(const DisturbanceEvent& e) {
    nlohmann::json j{{"bus", e.bus}, {"t_start", e.t_start}};
    if (e.kind == DisturbanceEvent::Kind::fault) {
        j["kind"] = "fault";
        j["g_sc"] = e.g_sc;
        j["t_clear"] = e.t_clear;
    } else {
        j["kind"] = "injection_step";
        j["dp"] = e.dp;
        j["dq"] = e.dq;
    }
    return j;
}

DisturbanceEvent event_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "fault")
        return DisturbanceEvent::fault(j.at("bus").get<int>(), j.at("g_sc").get<double>(),
                                       j.at("t_start").get<double>(), j.at("t_clear").get<double>());
    if (kind == "injection_step")
        return DisturbanceEvent::injection_step(j.at("bus").get<int>(), j.at("dp").get<double>(),
                                                j.at("dq").get<double>(), j.at("t_start").get<double>());
    throw ConfigError("unknown disturbance kind '" + kind + "'");
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed JSON " + path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace

nlohmann::json to_json(const ScenarioSpec& s) {
    nlohmann::json j{{"name", s.name},   {"label", to_string(s.label)}, {"side", to_string(s.side)},
                     {"horizon", s.horizon}, {"dt", s.dt},             {"n_dg", s.n_dg},
                     {"seed", s.seed}};
    j["disturbance"] = s.disturbance ? event_json(*s.disturbance) : nlohmann::json(nullptr);
    return j;
}

ScenarioSpec scenario_from_json(const nlohmann::json& j) {
    ScenarioSpec s;
    try {
        s.name = j.at("name").get<std::string>();
        s.label = parse_suite(j.at("label").get<std::string>());
        s.side = parse_side(j.at("side").get<std::string>());
        s.horizon = j.at("horizon").get<double>();
        s.dt = j.at("dt").get<double>();
        s.n_dg = j.at("n_dg").get<int>();
        s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("disturbance") && !j.at("disturbance").is_null())
            s.disturbance = event_from_json(j.at("disturbance"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed scenario metadata: ") + e.what());
    }
    return s;
}

void write_trace(const std::filesystem::path& dir, const SimulationTrace& tr) {
    std::string csv;
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        if (c) csv += ',';
        csv += kColumns[c];
    }
    csv += '\n';
    char buf[160];
    for (std::size_t k = 0; k < tr.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", tr.t[k], tr.v_ss_filt[k],
                      tr.frac[0][k], tr.frac[1][k], tr.frac[2][k], tr.frac_weighted[k]);
        csv += buf;
    }
    write_text(dir / (tr.scenario.name + ".csv"), csv);

    nlohmann::json meta;
    meta["scenario"] = to_json(tr.scenario);
    meta["shares"] = tr.shares;
    meta["inverter_count"] = tr.inverter_count;
    meta["samples"] = tr.size();
    meta["columns"] = kColumns;
    write_text(dir / (tr.scenario.name + ".json"), meta.dump(2) + "\n");
}

SimulationTrace read_trace(const std::filesystem::path& csv_path) {
    SimulationTrace tr;
    auto sidecar = csv_path;
    sidecar.replace_extension(".json");
    const auto meta = read_json(sidecar);
    try {
        tr.scenario = scenario_from_json(meta.at("scenario"));
        tr.shares = meta.at("shares").get<std::array<double, 3>>();
        tr.inverter_count = meta.value("inverter_count", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed trace metadata " + sidecar.string() + ": " + e.what());
    }

    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open " + csv_path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty trace file " + csv_path.string());
    {
        std::istringstream header(line);
        std::string col;
        std::size_t c = 0;
        while (std::getline(header, col, ',')) {
            if (c >= kColumns.size())
                throw IoError("trace header mismatch in " + csv_path.string() + ": unexpected column '" + col + "'");
            if (col != kColumns[c])
                throw IoError("trace header mismatch in " + csv_path.string() + ": column " + std::to_string(c) +
                              " expected '" + kColumns[c] + "', found '" + col + "'");
            ++c;
        }
        if (c != kColumns.size())
            throw IoError("trace header mismatch in " + csv_path.string() + ": missing column '" + kColumns[c] + "'");
    }
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::array<double, 6> vals{};
        const char* p = line.c_str();
        for (std::size_t c = 0; c < vals.size(); ++c) {
            char* end = nullptr;
            vals[c] = std::strtod(p, &end);
            if (end == p || (c + 1 < vals.size() && *end != ',') || (c + 1 == vals.size() && *end != '\0' && *end != '\r'))
                throw IoError("malformed value in " + csv_path.string() + " row " + std::to_string(row) + " column '" +
                              kColumns[c] + "'");
            p = end + 1;
        }
        tr.t.push_back(vals[0]);
        tr.v_ss_filt.push_back(vals[1]);
        for (std::size_t c = 0; c < 3; ++c) tr.frac[c].push_back(vals[2 + c]);
        tr.frac_weighted.push_back(vals[5]);
    }
    return tr;
}

void write_traces(const std::filesystem::path& dir, const std::vector<SimulationTrace>& traces,
                  const nlohmann::json& manifest_extra) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    nlohmann::json manifest = manifest_extra.is_object() ? manifest_extra : nlohmann::json::object();
    manifest["traces"] = nlohmann::json::array();
    for (const auto& tr : traces) {
        write_trace(dir, tr);
        manifest["traces"].push_back(tr.scenario.name);
    }
    if (!traces.empty()) manifest["inverter_count"] = traces.front().inverter_count;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

TraceSuite read_traces(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("trace directory " + dir.string() + " does not exist");
    TraceSuite suite;
    std::vector<std::filesystem::path> files;
    if (std::filesystem::exists(dir / "manifest.json")) {
        const auto manifest = read_json(dir / "manifest.json");
        try {
            for (const auto& name : manifest.at("traces")) files.push_back(dir / (name.get<std::string>() + ".csv"));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
        }
    } else {
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.path().extension() == ".csv") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
    }
    for (const auto& f : files) suite.traces.push_back(read_trace(f));
    if (suite.traces.empty()) suite.notice = "no traces found in " + dir.string();
    return suite;
}

} // namespace gridtrip

namespace gridtrip {

std::vector<FittedBlock> fit_blocks(const std::vector<SimulationTrace>& traces, Family family,
                                    std::span<const DerCode> codes, std::span<const Side> sides,
                                    const SwarmConfig& config) {
    if (traces.empty()) throw ConfigError("no traces to fit");
    const double dt = traces.front().dt();
    std::vector<FittedBlock> out;
    for (DerCode code : codes) {
        if (family == Family::dera) {
            const auto data = fit_traces(traces, code, std::nullopt);
            out.push_back({family, code, std::nullopt, fit_code(data, Side::under, code, family, config, dt)});
            continue;
        }
        for (Side side : sides) {
            const auto data = fit_traces(traces, code, side);
            if (data.empty()) throw ConfigError("no " + to_string(side) + "-voltage traces to fit " + to_string(code));
            out.push_back({family, code, side, fit_code(data, side, code, family, config, dt)});
        }
    }
    return out;
}

CompositeModel apply_fits(CompositeModel base, const std::vector<FittedBlock>& fits) {
    for (const auto& f : fits) {
        if (f.family != base.family) throw ConfigError("fitted block family differs from the composite");
        const std::size_t c = code_index(f.code);
        if (f.family == Family::dera) {
            base.dera[c] = dera_from_vector(f.result.best);
        } else {
            const Side side = f.side.value_or(Side::under);
            const auto p = pi_from_vector(side, f.result.best, has_reactivation(f.code));
            (side == Side::under ? base.pi_under : base.pi_over)[c] = p;
        }
    }
    return base;
}

std::string param_file_name(Family family, DerCode code, std::optional<Side> side) {
    return to_string(family) + "_" + to_string(code) + "_" + (side ? to_string(*side) : std::string("both")) + ".json";
}

nlohmann::json to_json(const FittedBlock& b) {
    nlohmann::json j;
    j["family"] = to_string(b.family);
    j["code"] = to_string(b.code);
    j["side"] = b.side ? to_string(*b.side) : std::string("both");
    if (b.family == Family::pi)
        j["model"] = to_json(pi_from_vector(b.side.value_or(Side::under), b.result.best, has_reactivation(b.code)));
    else
        j["model"] = to_json(dera_from_vector(b.result.best));
    j["fit"] = to_json(b.result);
    return j;
}

void write_fit(const std::filesystem::path& dir, const FittedBlock& b) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / param_file_name(b.family, b.code, b.side), to_json(b).dump(2) + "\n");
}

CompositeModel load_fitted_model(const std::filesystem::path& dir, Family family, const std::string& name) {
    CompositeModel m;
    m.name = name;
    m.family = family;
    for (DerCode code : kAllCodes) {
        const std::size_t c = code_index(code);
        if (family == Family::dera) {
            const auto path = dir / param_file_name(family, code, std::nullopt);
            if (!std::filesystem::exists(path)) throw IoError("missing parameter file " + path.string());
            m.dera[c] = dera_from_json(read_json(path).at("model"));
            continue;
        }
        for (Side side : {Side::under, Side::over}) {
            const auto path = dir / param_file_name(family, code, side);
            if (!std::filesystem::exists(path)) throw IoError("missing parameter file " + path.string());
            (side == Side::under ? m.pi_under : m.pi_over)[c] = pi_from_json(read_json(path).at("model"));
        }
    }
    m.validate();
    return m;
}

} // namespace gridtrip
