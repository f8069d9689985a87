#include "commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kNumerical = 4 };

} // namespace

int main(int argc, char** argv) {
    using namespace gridtrip;
    CLI::App app{"Co-simulation and calibration of aggregate DER tripping models"};
    app.require_subcommand(1);

    cli::RunConfig cfg;
    cfg.fixtures = default_fixtures_dir();
    std::string config_path, suite, fixtures;
    std::optional<int> n_dg;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> family, code, side, out, traces, params;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--out", out, "output directory");
    };
    auto* sim = app.add_subcommand("simulate", "run a disturbance suite and write traces");
    add_common(sim);
    sim->add_option("--suite", suite, "in-sample | out-of-sample");
    sim->add_option("--n-dg", n_dg, "number of distribution feeders");
    sim->add_option("--seed", seed, "system and fleet seed");
    sim->add_option("--fixtures", fixtures, "fixture directory");

    auto* fit = app.add_subcommand("fit", "fit tripping blocks to traces");
    add_common(fit);
    fit->add_option("--traces", traces, "trace directory");
    fit->add_option("--family", family, "pi | dera | all");
    fit->add_option("--code", code, "2005 | 2015 | 2020 | all");
    fit->add_option("--side", side, "under | over | all");
    fit->add_option("--seed", seed, "swarm seed");

    auto* eval = app.add_subcommand("evaluate", "MAE table of default and fitted models");
    add_common(eval);
    eval->add_option("--traces", traces, "trace directory");
    eval->add_option("--params", params, "fitted parameter directory");

    auto* rep = app.add_subcommand("report", "per-scenario series of detailed and predicted fractions");
    add_common(rep);
    rep->add_option("--traces", traces, "trace directory");
    rep->add_option("--params", params, "fitted parameter directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw IoError("cannot open config " + config_path);
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("malformed config " + config_path + ": " + e.what());
            }
            cli::merge_config(cfg, doc);
        }
        if (!suite.empty()) cfg.suite = parse_suite(suite);
        if (!fixtures.empty()) cfg.fixtures = fixtures;
        if (n_dg) cfg.n_dg = *n_dg;
        if (family) cfg.family = *family;
        if (code) cfg.code = *code;
        if (side) cfg.side = *side;
        if (out) cfg.out = *out;
        if (traces) cfg.traces = *traces;
        if (params) cfg.params = *params;
        if (seed) {
            if (fit->parsed()) cfg.swarm.seed = *seed;
            else cfg.seed = *seed;
        }
        cfg.validate_selectors();

        if (sim->parsed()) return cli::cmd_simulate(cfg);
        if (fit->parsed()) return cli::cmd_fit(cfg);
        if (eval->parsed()) return cli::cmd_evaluate(cfg);
        return cli::cmd_report(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    }
}
