#include "gridtrip/network.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <unordered_set>

namespace gridtrip {

using json = nlohmann::json;

namespace {

void stamp_branch(ComplexMatrix& y, std::size_t f, std::size_t t, const Branch& br) {
    const Complex ys = 1.0 / br.series_impedance;
    const Complex half_charging{0.0, 0.5 * br.charging_susceptance};
    const double a = br.tap_ratio;
    y(f, f) += ys / (a * a) + half_charging;
    y(t, t) += ys + half_charging;
    y(f, t) -= ys / a;
    y(t, f) -= ys / a;
}

std::unordered_map<int, std::size_t> index_buses(std::span<const Bus> buses) {
    std::unordered_map<int, std::size_t> index;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (!index.emplace(buses[i].id, i).second)
            throw ConfigError("duplicate bus id " + std::to_string(buses[i].id));
        if (!(buses[i].base_kv > 0.0))
            throw ConfigError("bus " + std::to_string(buses[i].id) + " has non-positive base_kv");
    }
    return index;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fixture " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("malformed fixture " + path.string() + ": " + e.what());
    }
}

BusKind parse_kind(const std::string& s) {
    if (s == "slack") return BusKind::slack;
    if (s == "generator") return BusKind::generator;
    if (s == "load") return BusKind::load;
    throw ConfigError("unknown bus kind '" + s + "'");
}

} // namespace

ComplexMatrix build_admittance(std::span<const Bus> buses, std::span<const Branch> branches) {
    const auto index = index_buses(buses);
    const auto n = static_cast<Eigen::Index>(buses.size());
    ComplexMatrix y = ComplexMatrix::Zero(n, n);
    for (const auto& br : branches) {
        const auto f = index.find(br.from);
        const auto t = index.find(br.to);
        if (f == index.end() || t == index.end())
            throw ConfigError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                              " references an unknown bus");
        if (br.series_impedance == Complex{0.0, 0.0})
            throw ConfigError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                              " has zero series impedance");
        if (!(br.tap_ratio > 0.0)) throw ConfigError("tap ratio must be positive");
        stamp_branch(y, f->second, t->second, br);
    }
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        y(k, k) += buses[i].shunt_admittance;
    }
    return y;
}

PhasorNetwork::PhasorNetwork(std::vector<Bus> buses, std::vector<Branch> branches)
    : buses_(std::move(buses)), branches_(std::move(branches)) {
    index_ = index_buses(buses_);
    admittance_ = build_admittance(buses_, branches_);
}

std::size_t PhasorNetwork::index_of(int bus_id) const {
    const auto it = index_.find(bus_id);
    if (it == index_.end()) throw ConfigError("unknown bus " + std::to_string(bus_id));
    return it->second;
}

PhasorNetwork PhasorNetwork::with_added_shunts(std::span<const Complex> extra) const {
    if (extra.size() != buses_.size()) throw ConfigError("shunt vector size mismatch");
    auto buses = buses_;
    for (std::size_t i = 0; i < buses.size(); ++i) buses[i].shunt_admittance += extra[i];
    return PhasorNetwork(std::move(buses), branches_);
}

PowerFlowResult solve_power_flow(const PhasorNetwork& network, std::span<const BusSetpoint> setpoints,
                                 const PowerFlowOptions& options) {
    const std::size_t n = network.size();
    if (setpoints.size() != n) throw ConfigError("setpoint vector size mismatch");

    std::vector<Eigen::Index> pvpq;
    std::vector<Eigen::Index> pq;
    int slack_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& sp = setpoints[i];
        if (!std::isfinite(sp.p) || !std::isfinite(sp.q) || !std::isfinite(sp.v_set))
            throw ConfigError("non-finite power-flow setpoint");
        switch (network.buses()[i].kind) {
        case BusKind::slack: ++slack_count; break;
        case BusKind::generator: pvpq.push_back(static_cast<Eigen::Index>(i)); break;
        case BusKind::load:
            pvpq.push_back(static_cast<Eigen::Index>(i));
            pq.push_back(static_cast<Eigen::Index>(i));
            break;
        }
    }
    if (slack_count != 1) throw ConfigError("power flow needs exactly one slack bus");

    const ComplexMatrix& y = network.admittance();
    Eigen::VectorXd vm(n);
    Eigen::VectorXd va(n);
    double slack_angle = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (network.buses()[i].kind == BusKind::slack) slack_angle = setpoints[i].angle;
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (options.initial) {
            vm(k) = std::abs((*options.initial)(k));
            va(k) = std::arg((*options.initial)(k));
        } else {
            vm(k) = network.buses()[i].kind == BusKind::load ? 1.0 : setpoints[i].v_set;
            va(k) = slack_angle;
        }
        if (network.buses()[i].kind != BusKind::load) vm(k) = setpoints[i].v_set;
        if (network.buses()[i].kind == BusKind::slack) va(k) = setpoints[i].angle;
    }

    const auto npvpq = static_cast<Eigen::Index>(pvpq.size());
    const auto npq = static_cast<Eigen::Index>(pq.size());
    ComplexVector v(n);
    ComplexVector s(n);
    Eigen::VectorXd mismatch(npvpq + npq);

    auto evaluate = [&] {
        for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = std::polar(vm(i), va(i));
        const ComplexVector current = y * v;
        s = v.cwiseProduct(current.conjugate());
        for (Eigen::Index k = 0; k < npvpq; ++k)
            mismatch(k) = s(pvpq[k]).real() - setpoints[static_cast<std::size_t>(pvpq[k])].p;
        for (Eigen::Index k = 0; k < npq; ++k)
            mismatch(npvpq + k) = s(pq[k]).imag() - setpoints[static_cast<std::size_t>(pq[k])].q;
        return mismatch.size() ? mismatch.cwiseAbs().maxCoeff() : 0.0;
    };

    PowerFlowResult result;
    double worst = evaluate();
    int iter = 0;
    while (worst > options.tolerance) {
        if (iter >= options.max_iterations)
            throw NumericalError("power flow did not converge in " + std::to_string(options.max_iterations) +
                                 " iterations (mismatch " + std::to_string(worst) + ")");
        // Sensitivities dS/dVa and dS/dVm, polar form.
        const ComplexVector current = y * v;
        ComplexMatrix ds_dva = ComplexMatrix::Zero(n, n);
        ComplexMatrix ds_dvm = ComplexMatrix::Zero(n, n);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
            const Complex vn = v(i) / vm(i);
            for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(n); ++k) {
                ds_dva(k, i) = Complex{0.0, 1.0} * v(k) * std::conj(-y(k, i) * v(i));
                ds_dvm(k, i) = v(k) * std::conj(y(k, i) * vn);
            }
            ds_dva(i, i) += Complex{0.0, 1.0} * v(i) * std::conj(current(i));
            ds_dvm(i, i) += std::conj(current(i)) * vn;
        }
        Eigen::MatrixXd jac(npvpq + npq, npvpq + npq);
        for (Eigen::Index r = 0; r < npvpq; ++r) {
            for (Eigen::Index c = 0; c < npvpq; ++c) jac(r, c) = ds_dva(pvpq[r], pvpq[c]).real();
            for (Eigen::Index c = 0; c < npq; ++c) jac(r, npvpq + c) = ds_dvm(pvpq[r], pq[c]).real();
        }
        for (Eigen::Index r = 0; r < npq; ++r) {
            for (Eigen::Index c = 0; c < npvpq; ++c) jac(npvpq + r, c) = ds_dva(pq[r], pvpq[c]).imag();
            for (Eigen::Index c = 0; c < npq; ++c) jac(npvpq + r, npvpq + c) = ds_dvm(pq[r], pq[c]).imag();
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        if (!(lu.rcond() > 1e-14)) throw NumericalError("singular power-flow Jacobian");
        const Eigen::VectorXd dx = lu.solve(-mismatch);
        for (Eigen::Index k = 0; k < npvpq; ++k) va(pvpq[k]) += dx(k);
        for (Eigen::Index k = 0; k < npq; ++k) vm(pq[k]) += dx(npvpq + k);
        ++iter;
        worst = evaluate();
        if (!std::isfinite(worst)) throw NumericalError("power flow diverged");
    }
    result.voltages = v;
    result.injections = s;
    result.iterations = iter;
    result.max_mismatch = worst;
    return result;
}

DisturbanceEvent DisturbanceEvent::fault(int bus, double g_sc, double t_start, double t_clear) {
    DisturbanceEvent e;
    e.kind = Kind::fault;
    e.bus = bus;
    e.g_sc = g_sc;
    e.t_start = t_start;
    e.t_clear = t_clear;
    e.validate();
    return e;
}

DisturbanceEvent DisturbanceEvent::injection_step(int bus, double dp, double dq, double t_start) {
    DisturbanceEvent e;
    e.kind = Kind::injection_step;
    e.bus = bus;
    e.dp = dp;
    e.dq = dq;
    e.t_start = t_start;
    e.validate();
    return e;
}

bool DisturbanceEvent::active_at(double t) const {
    if (kind == Kind::fault) return t >= t_start && t < t_clear;
    return t >= t_start;
}

void DisturbanceEvent::validate() const {
    if (!(t_start >= 0.0)) throw ConfigError("disturbance start must be non-negative");
    if (kind == Kind::fault) {
        if (!(g_sc >= 0.0)) throw ConfigError("fault conductance must be non-negative");
        if (!(t_clear > t_start)) throw ConfigError("fault must clear after it starts");
    } else if (!std::isfinite(dp) || !std::isfinite(dq)) {
        throw ConfigError("non-finite injection step");
    }
}

NetworkOverlay apply_disturbance(const PhasorNetwork& network, const DisturbanceEvent& event, double t) {
    event.validate();
    if (!(t >= 0.0)) throw ConfigError("time must be non-negative");
    const std::size_t k = network.index_of(event.bus);
    NetworkOverlay overlay;
    if (!event.active_at(t)) return overlay;
    if (event.kind == DisturbanceEvent::Kind::fault)
        overlay.admittance.emplace_back(k, Complex{event.g_sc, 0.0});
    else
        overlay.injection.emplace_back(k, Complex{event.dp, event.dq});
    return overlay;
}

ComplexMatrix overlay_admittance(const ComplexMatrix& base, const NetworkOverlay& overlay) {
    ComplexMatrix y = base;
    for (const auto& [k, dy] : overlay.admittance) {
        const auto i = static_cast<Eigen::Index>(k);
        y(i, i) += dy;
    }
    return y;
}

FactorizedNetwork::FactorizedNetwork(const ComplexMatrix& admittance)
    : lu_(admittance), size_(static_cast<std::size_t>(admittance.rows())) {
    if (!(lu_.rcond() > 1e-13)) throw NumericalError("singular network admittance matrix");
}

ComplexVector FactorizedNetwork::solve(const ComplexVector& currents) const { return lu_.solve(currents); }

ComplexVector solve_network_step(const ComplexMatrix& admittance, const ComplexVector& currents) {
    if (admittance.rows() != currents.size()) throw ConfigError("current vector size mismatch");
    const FactorizedNetwork factorized(admittance);
    ComplexVector v = factorized.solve(currents);
    const double scale = std::max(1.0, currents.size() ? currents.cwiseAbs().maxCoeff() : 0.0);
    const double residual = (admittance * v - currents).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-10 * scale))
        throw NumericalError("network solve residual " + std::to_string(residual) + " exceeds tolerance");
    return v;
}

std::filesystem::path default_fixtures_dir() {
    if (const char* env = std::getenv("GRIDTRIP_DATA")) return env;
#ifdef GRIDTRIP_DATA_DIR
    return GRIDTRIP_DATA_DIR;
#else
    return "data";
#endif
}

TransmissionFixture load_transmission_fixture(const std::filesystem::path& path) {
    const json doc = read_json(path);
    TransmissionFixture fx;
    try {
        fx.frequency_hz = doc.value("frequency_hz", 60.0);
        for (const auto& b : doc.at("buses")) {
            Bus bus;
            bus.id = b.at("id").get<int>();
            bus.kind = parse_kind(b.at("kind").get<std::string>());
            bus.base_kv = b.at("base_kv").get<double>();
            bus.shunt_admittance = {b.value("g_shunt", 0.0), b.value("b_shunt", 0.0)};
            fx.buses.push_back(bus);
            BusSetpoint sp;
            sp.p = b.value("p_gen", 0.0);
            sp.v_set = b.value("v_set", 1.0);
            sp.angle = b.value("angle_deg", 0.0) * std::numbers::pi / 180.0;
            fx.setpoints[bus.id] = sp;
            const Complex load{b.value("p_load", 0.0), b.value("q_load", 0.0)};
            if (load != Complex{}) fx.loads[bus.id] = load;
        }
        for (const auto& br : doc.at("branches")) {
            Branch branch;
            branch.from = br.at("from").get<int>();
            branch.to = br.at("to").get<int>();
            branch.series_impedance = {br.at("r").get<double>(), br.at("x").get<double>()};
            branch.charging_susceptance = br.value("b", 0.0);
            branch.tap_ratio = br.value("tap", 1.0);
            fx.branches.push_back(branch);
        }
    } catch (const json::exception& e) {
        throw ConfigError("invalid transmission fixture " + path.string() + ": " + e.what());
    }
    return fx;
}

TestSystem assemble_test_system(int n_dg, std::uint64_t seed, const std::filesystem::path& fixtures_dir,
                                const SystemOptions& options) {
    if (n_dg < 1) throw ConfigError("n_dg must be at least 1");
    const auto tx = load_transmission_fixture(fixtures_dir / "ieee9.json");
    const json feeder = read_json(fixtures_dir / "cigre_lv_feeder.json");

    std::vector<Bus> buses = tx.buses;
    std::vector<Branch> branches = tx.branches;
    std::vector<std::pair<int, Complex>> loads(tx.loads.begin(), tx.loads.end());
    std::vector<std::pair<int, double>> pv_sites;

    bool has_substation = false;
    for (const auto& b : buses) has_substation |= b.id == options.substation_bus;
    if (!has_substation) throw ConfigError("substation bus missing from transmission fixture");

    std::mt19937_64 rng(seed);
    try {
        const double base_kv = feeder.at("base_kv").get<double>();
        const double feeder_mva = feeder.at("feeder_base_mva").get<double>();
        const double aggregation = feeder.at("aggregation").get<double>();
        const double z_base = base_kv * base_kv / 100.0;
        const auto& tr = feeder.at("transformer");
        const Complex z_tr = Complex{tr.at("r").get<double>(), tr.at("x").get<double>()} * (100.0 / feeder_mva);
        const auto& loading = feeder.at("loading");
        const auto pv_nodes = feeder.at("pv_nodes").get<std::vector<int>>();
        const double pv_per_node = loading.at("pv_mw_per_feeder").get<double>() / 100.0 /
                                   static_cast<double>(pv_nodes.size());
        const double load_per_node = loading.at("load_mw_per_feeder").get<double>() / 100.0 /
                                     static_cast<double>(pv_nodes.size());
        const double pf = loading.at("load_power_factor").get<double>();
        const double q_ratio = std::tan(std::acos(pf));
        std::normal_distribution<double> load_dist(load_per_node, options.load_std_fraction * load_per_node);

        for (int k = 0; k < n_dg; ++k) {
            const int offset = 1000 * (k + 1);
            for (int node : feeder.at("nodes").get<std::vector<int>>())
                buses.push_back(Bus{offset + node, BusKind::load, base_kv, {}});
            Branch trafo;
            trafo.from = options.substation_bus;
            trafo.to = offset + feeder.at("head").get<int>();
            trafo.series_impedance = z_tr;
            trafo.tap_ratio = tr.value("tap", 1.0);
            branches.push_back(trafo);
            for (const auto& line : feeder.at("lines")) {
                const auto& type = feeder.at("line_types").at(line.at("type").get<std::string>());
                const double km = line.at("length_m").get<double>() / 1000.0;
                const Complex z_ohm{type.at("r_ohm_per_km").get<double>() * km,
                                    type.at("x_ohm_per_km").get<double>() * km};
                Branch br;
                br.from = offset + line.at("from").get<int>();
                br.to = offset + line.at("to").get<int>();
                br.series_impedance = z_ohm / aggregation / z_base;
                branches.push_back(br);
            }
            for (int node : pv_nodes) {
                const double p = std::max(0.0, load_dist(rng));
                loads.emplace_back(offset + node, Complex{p, p * q_ratio});
                pv_sites.emplace_back(offset + node, pv_per_node);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid feeder fixture: ") + e.what());
    }

    TestSystem sys;
    sys.network = PhasorNetwork(std::move(buses), std::move(branches));
    const std::size_t n = sys.network.size();
    sys.setpoints.assign(n, BusSetpoint{});
    sys.load_power.assign(n, Complex{});
    for (const auto& [id, sp] : tx.setpoints) sys.setpoints[sys.network.index_of(id)] = sp;
    for (const auto& [id, s] : loads) sys.load_power[sys.network.index_of(id)] += s;
    for (const auto& b : sys.network.buses())
        if (b.kind != BusKind::load) sys.machine_buses.push_back(b.id);
    std::sort(sys.machine_buses.begin(), sys.machine_buses.end());
    for (const auto& [id, p] : pv_sites) {
        PvNode node;
        node.bus_id = id;
        node.bus_index = sys.network.index_of(id);
        node.feeder = id / 1000 - 1;
        node.node = id % 1000;
        node.pv_setpoint = p;
        sys.pv_nodes.push_back(node);
    }
    sys.substation_bus = options.substation_bus;
    sys.substation_index = sys.network.index_of(options.substation_bus);
    sys.n_dg = n_dg;
    sys.frequency_hz = tx.frequency_hz;
    return sys;
}

} // namespace gridtrip
