#include "gridtrip/calibrate.hpp"

#include <chrono>
#include <limits>
#include <random>

namespace gridtrip {

bool Bounds::contains(std::span<const double> x) const {
    if (x.size() != lower.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (!(x[k] >= lower[k] && x[k] <= upper[k])) return false;
    return true;
}

void Bounds::validate() const {
    if (lower.size() != upper.size() || lower.empty()) throw ConfigError("bounds must be non-empty and paired");
    for (std::size_t k = 0; k < lower.size(); ++k)
        if (!std::isfinite(lower[k]) || !std::isfinite(upper[k]) || lower[k] > upper[k])
            throw ConfigError("bounds must be finite with lower <= upper");
}

void SwarmConfig::validate() const {
    if (swarm_size < 2) throw ConfigError("swarm needs at least two particles");
    if (max_iters < 0) throw ConfigError("max_iters must be non-negative");
    if (!(omega > 0.0 && phi_p > 0.0 && phi_g > 0.0)) throw ConfigError("swarm coefficients must be positive");
}

FitResult pso_minimize(const Objective& objective, const Bounds& bounds, const SwarmConfig& config) {
    bounds.validate();
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = config.swarm_size;
    const std::size_t dim = bounds.size();

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<std::vector<double>> x(n, std::vector<double>(dim));
    std::vector<std::vector<double>> v(n, std::vector<double>(dim));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dim; ++k) {
            const double span = bounds.upper[k] - bounds.lower[k];
            x[i][k] = bounds.lower[k] + unit(rng) * span;
            v[i][k] = -span + unit(rng) * 2.0 * span;
        }

    std::vector<double> fx(n);
    auto evaluate_all = [&] {
        parallel_for(n, [&](std::size_t i) { fx[i] = objective(x[i]); });
    };
    evaluate_all();

    auto personal = x;
    auto f_personal = fx;
    std::size_t arg = static_cast<std::size_t>(std::min_element(f_personal.begin(), f_personal.end()) -
                                               f_personal.begin());
    std::vector<double> global = personal[arg];
    double f_global = f_personal[arg];

    FitResult result;
    result.history.push_back(f_global);
    result.termination = "max_iters";
    int iter = 0;
    while (iter < config.max_iters) {
        ++iter;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < dim; ++k) {
                const double rp = unit(rng);
                const double rg = unit(rng);
                v[i][k] = config.omega * v[i][k] + config.phi_p * rp * (personal[i][k] - x[i][k]) +
                          config.phi_g * rg * (global[k] - x[i][k]);
                x[i][k] = std::clamp(x[i][k] + v[i][k], bounds.lower[k], bounds.upper[k]);
            }
        evaluate_all();
        for (std::size_t i = 0; i < n; ++i)
            if (fx[i] < f_personal[i]) {
                personal[i] = x[i];
                f_personal[i] = fx[i];
            }
        arg = static_cast<std::size_t>(std::min_element(f_personal.begin(), f_personal.end()) - f_personal.begin());
        bool stop = false;
        if (f_personal[arg] < f_global) {
            double step = 0.0;
            for (std::size_t k = 0; k < dim; ++k) step += (global[k] - personal[arg][k]) * (global[k] - personal[arg][k]);
            step = std::sqrt(step);
            const double improvement = f_global - f_personal[arg];
            global = personal[arg];
            f_global = f_personal[arg];
            if (improvement <= config.min_func_delta) {
                result.termination = "min_func_delta";
                stop = true;
            } else if (step <= config.min_step) {
                result.termination = "min_step";
                stop = true;
            }
        }
        result.history.push_back(f_global);
        if (stop) break;
    }

    result.best = global;
    result.best_objective = f_global;
    result.iterations = iter;
    result.seed = config.seed;
    result.bounds = bounds;
    result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::size_t FitProblem::dimension() const {
    if (family == Family::dera) return 9;
    return reactivation ? 7 : 5;
}

std::size_t FitProblem::point_count() const {
    std::size_t total = 0;
    for (const auto& t : traces) total += t.target.size();
    return total;
}

void FitProblem::validate() const {
    if (traces.empty()) throw ConfigError("fit problem has no traces");
    if (!(dt > 0.0)) throw ConfigError("fit problem needs dt > 0");
    bounds.validate();
    if (bounds.size() != dimension()) throw ConfigError("bounds do not match the decision vector");
    for (const auto& t : traces) {
        if (t.voltage.size() != t.target.size() || t.voltage.empty())
            throw ConfigError("trace voltage and target lengths differ");
        if (t.voltage.size() != traces.front().voltage.size()) throw ConfigError("fit traces differ in length");
        for (double y : t.target)
            if (!(y >= 0.0 && y <= 1.0)) throw ConfigError("target fractions must lie in [0, 1]");
    }
}

double objective(std::span<const double> x, const FitProblem& problem) {
    const double points = static_cast<double>(problem.point_count());
    double sse = 0.0;
    if (problem.family == Family::pi) {
        const PiParams p = pi_from_vector(problem.side, x, problem.reactivation, problem.input_trv);
        if (!p.feasible()) {
            const double orient = problem.side == Side::under ? 1.0 : -1.0;
            const double violation = std::max(0.0, -orient * (p.v1_prop - p.v0_prop)) +
                                     std::max(0.0, -orient * (p.v1_int - p.v0_int));
            return points * (10.0 + violation);
        }
        for (const auto& t : problem.traces) {
            PiState state;
            for (std::size_t k = 0; k < t.voltage.size(); ++k) {
                const double e = pi_step(p, state, t.voltage[k], problem.dt) - t.target[k];
                sse += e * e;
            }
        }
    } else {
        const DerAParams p = dera_from_vector(x, problem.input_trv);
        if (!p.feasible()) {
            const double violation = std::max(0.0, p.v_l0 - p.v_l1) + std::max(0.0, p.v_h1 - p.v_h0);
            return points * (10.0 + violation);
        }
        for (const auto& t : problem.traces) {
            DerAState state;
            for (std::size_t k = 0; k < t.voltage.size(); ++k) {
                const double e = dera_step(p, state, t.voltage[k], problem.dt) - t.target[k];
                sse += e * e;
            }
        }
    }
    return sse;
}

Bounds default_bounds(Family family, Side side, bool reactivation) {
    Bounds b;
    auto add = [&b](double lo, double hi) {
        b.lower.push_back(lo);
        b.upper.push_back(hi);
    };
    if (family == Family::pi) {
        const double vlo = side == Side::under ? 0.0 : 1.0;
        const double vhi = side == Side::under ? 1.0 : 1.4;
        for (int k = 0; k < 4; ++k) add(vlo, vhi);
        add(0.01, 10.0);
        if (reactivation) {
            add(vlo, vhi);
            add(0.01, 10.0);
        }
    } else {
        add(0.0, 1.0); // v_l0
        add(0.0, 1.0); // v_l1
        add(1.0, 1.4); // v_h1
        add(1.0, 1.4); // v_h0
        add(0.0, 1.0); // v_r_frac
        for (int k = 0; k < 4; ++k) add(0.0, 10.0);
    }
    return b;
}

FitResult fit_code(std::span<const FitTrace> traces, Side side, DerCode code, Family family,
                   const SwarmConfig& config, double dt, const Bounds* bounds) {
    if (traces.empty()) throw ConfigError("no traces to fit " + to_string(code));
    FitProblem problem;
    problem.family = family;
    problem.side = side;
    problem.reactivation = family == Family::pi && has_reactivation(code);
    problem.traces.assign(traces.begin(), traces.end());
    problem.dt = dt;
    problem.bounds = bounds ? *bounds : default_bounds(family, side, problem.reactivation);
    problem.validate();

    auto result = pso_minimize([&problem](std::span<const double> x) { return objective(x, problem); },
                               problem.bounds, config);
    result.names = family == Family::pi ? pi_parameter_names(side, problem.reactivation) : dera_parameter_names();
    return result;
}

double mae(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size()) throw ConfigError("MAE inputs differ in length");
    if (predicted.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t k = 0; k < predicted.size(); ++k) sum += std::abs(predicted[k] - actual[k]);
    return 100.0 * sum / static_cast<double>(predicted.size());
}

nlohmann::json to_json(const FitResult& r) {
    nlohmann::json j;
    for (std::size_t k = 0; k < r.best.size(); ++k) j["params"][k < r.names.size() ? r.names[k] : std::to_string(k)] = r.best[k];
    j["names"] = r.names;
    j["best"] = r.best;
    j["objective"] = r.best_objective;
    j["history"] = r.history;
    j["iterations"] = r.iterations;
    j["termination"] = r.termination;
    j["wall_time_s"] = r.wall_time_s;
    j["seed"] = r.seed;
    j["bounds"] = {{"lower", r.bounds.lower}, {"upper", r.bounds.upper}};
    return j;
}

FitResult fit_result_from_json(const nlohmann::json& j) {
    FitResult r;
    try {
        r.names = j.at("names").get<std::vector<std::string>>();
        r.best = j.at("best").get<std::vector<double>>();
        r.best_objective = j.at("objective").get<double>();
        r.history = j.value("history", std::vector<double>{});
        r.iterations = j.value("iterations", 0);
        r.termination = j.value("termination", std::string{});
        r.wall_time_s = j.value("wall_time_s", 0.0);
        r.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("bounds")) {
            r.bounds.lower = j.at("bounds").at("lower").get<std::vector<double>>();
            r.bounds.upper = j.at("bounds").at("upper").get<std::vector<double>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed fit result: ") + e.what());
    }
    return r;
}

} // namespace gridtrip
