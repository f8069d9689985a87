#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

namespace gridtrip::cli {

namespace {

std::vector<DerCode> selected_codes(const std::string& s) {
    if (s == "all") return {kAllCodes.begin(), kAllCodes.end()};
    return {parse_code(s)};
}

std::vector<Side> selected_sides(const std::string& s) {
    if (s == "all") return {Side::under, Side::over};
    return {parse_side(s)};
}

std::vector<Family> selected_families(const std::string& s) {
    if (s == "all") return {Family::pi, Family::dera};
    return {parse_family(s)};
}

std::vector<SimulationTrace> load_traces(const RunConfig& cfg) {
    if (cfg.traces.empty()) throw ConfigError("--traces is required");
    auto suite = read_traces(cfg.traces);
    if (!suite.notice.empty()) std::cerr << "notice: " << suite.notice << "\n";
    if (suite.traces.empty()) throw IoError("no traces in " + cfg.traces.string());
    return std::move(suite.traces);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void make_dir(const std::filesystem::path& dir) {
    if (dir.empty()) throw ConfigError("--out is required");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<NamedModel> evaluation_models(const RunConfig& cfg) {
    const auto defaults = make_default_models();
    std::vector<NamedModel> models{{"DER_A default", defaults.der_a}, {"DERAEMO1 default", defaults.deraemo1}};
    if (cfg.params.empty()) throw ConfigError("--params is required");
    models.push_back({"DERAEMO1 fitted", load_fitted_model(cfg.params, Family::dera, "DERAEMO1 fitted")});
    models.push_back({"PI fitted", load_fitted_model(cfg.params, Family::pi, "PI fitted")});
    return models;
}

nlohmann::json config_echo(const RunConfig& cfg) {
    return {{"traces", cfg.traces.string()}, {"params", cfg.params.string()}, {"out", cfg.out.string()}};
}

} // namespace

void RunConfig::validate_selectors() const {
    selected_codes(code);
    selected_sides(side);
    selected_families(family);
    swarm.validate();
    if (n_dg < 1) throw ConfigError("--n-dg must be at least 1");
}

void merge_config(RunConfig& cfg, const nlohmann::json& doc) {
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "fixtures") cfg.fixtures = value.get<std::string>();
            else if (key == "out") cfg.out = value.get<std::string>();
            else if (key == "traces") cfg.traces = value.get<std::string>();
            else if (key == "params") cfg.params = value.get<std::string>();
            else if (key == "suite") cfg.suite = parse_suite(value.get<std::string>());
            else if (key == "n_dg") cfg.n_dg = value.get<int>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "family") cfg.family = value.get<std::string>();
            else if (key == "code") cfg.code = value.get<std::string>();
            else if (key == "side") cfg.side = value.get<std::string>();
            else if (key == "swarm") {
                auto& s = cfg.swarm;
                s.swarm_size = value.value("swarm_size", s.swarm_size);
                s.max_iters = value.value("max_iters", s.max_iters);
                s.omega = value.value("omega", s.omega);
                s.phi_p = value.value("phi_p", s.phi_p);
                s.phi_g = value.value("phi_g", s.phi_g);
                s.min_step = value.value("min_step", s.min_step);
                s.min_func_delta = value.value("min_func_delta", s.min_func_delta);
                s.seed = value.value("seed", s.seed);
            } else if (key == "suite_options") {
                auto& o = cfg.suite_options;
                o.steps_per_side = value.value("steps_per_side", o.steps_per_side);
                o.faults = value.value("faults", o.faults);
                o.over_steps = value.value("over_steps", o.over_steps);
                o.horizon = value.value("horizon", o.horizon);
                o.dt = value.value("dt", o.dt);
                o.t_start = value.value("t_start", o.t_start);
                o.under_step_min = value.value("under_step_min", o.under_step_min);
                o.under_step_max = value.value("under_step_max", o.under_step_max);
                o.over_step_min = value.value("over_step_min", o.over_step_min);
                o.over_step_max = value.value("over_step_max", o.over_step_max);
                o.fault_g_min = value.value("fault_g_min", o.fault_g_min);
                o.fault_g_max = value.value("fault_g_max", o.fault_g_max);
            } else {
                throw ConfigError("unknown config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

int cmd_simulate(const RunConfig& cfg) {
    make_dir(cfg.out);
    auto options = cfg.suite_options;
    options.n_dg = cfg.n_dg;
    options.seed = cfg.seed;
    const auto system = load_cosim_system(cfg.n_dg, cfg.seed, cfg.fixtures);
    const auto scenarios = generate_suite(cfg.suite, options);
    const auto traces = run_suite(system, scenarios);
    nlohmann::json manifest{{"suite", to_string(cfg.suite)}, {"n_dg", cfg.n_dg}, {"seed", cfg.seed},
                            {"shares", system.fleet.shares}};
    write_traces(cfg.out, traces, manifest);
    std::cout << "wrote " << traces.size() << " traces (" << system.units.size() << " inverters) to "
              << cfg.out.string() << "\n";
    return 0;
}

int cmd_fit(const RunConfig& cfg) {
    make_dir(cfg.out);
    const auto traces = load_traces(cfg);
    const auto codes = selected_codes(cfg.code);
    const auto sides = selected_sides(cfg.side);
    for (Family family : selected_families(cfg.family)) {
        for (DerCode code : codes) {
            const DerCode one[] = {code};
            for (const auto& block : fit_blocks(traces, family, one, sides, cfg.swarm)) {
                write_fit(cfg.out, block);
                std::printf("%-5s %-8s %-6s objective %.6g  %zu params  %.1f s\n", to_string(family).c_str(),
                            to_string(code).c_str(), block.side ? to_string(*block.side).c_str() : "both",
                            block.result.best_objective, block.result.best.size(), block.result.wall_time_s);
            }
        }
    }
    return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
    make_dir(cfg.out);
    const auto traces = load_traces(cfg);
    auto report = evaluate_models(traces, evaluation_models(cfg));
    report.config = config_echo(cfg);
    write_file(cfg.out / "suite_report.json", report.to_json().dump(2) + "\n");
    const auto table = report.table();
    write_file(cfg.out / "mae_table.txt", table);
    std::cout << table;
    return 0;
}

int cmd_report(const RunConfig& cfg) {
    make_dir(cfg.out);
    const auto traces = load_traces(cfg);
    const auto models = evaluation_models(cfg);
    for (const auto& tr : traces) {
        std::vector<CompositePrediction> preds;
        for (const auto& m : models) preds.push_back(composite_predict(with_filtered_input(m.model), tr.v_ss_filt, tr.dt()));
        std::string csv = "t,v_ss_filt,frac_2005,frac_2015,frac_2020,frac_weighted";
        for (const auto& m : models) {
            std::string col = m.name;
            std::replace(col.begin(), col.end(), ' ', '_');
            csv += ",pred_" + col;
        }
        csv += '\n';
        char buf[64];
        for (std::size_t k = 0; k < tr.size(); ++k) {
            for (double x : {tr.t[k], tr.v_ss_filt[k], tr.frac[0][k], tr.frac[1][k], tr.frac[2][k], tr.frac_weighted[k]}) {
                std::snprintf(buf, sizeof buf, "%.10g,", x);
                csv += buf;
            }
            for (const auto& p : preds) {
                std::snprintf(buf, sizeof buf, "%.10g,", p.weighted[k]);
                csv += buf;
            }
            csv.back() = '\n';
        }
        write_file(cfg.out / (tr.scenario.name + "_series.csv"), csv);
    }
    std::cout << "wrote " << traces.size() << " series to " << cfg.out.string() << "\n";
    return 0;
}

} // namespace gridtrip::cli
