#pragma once

#include "gridtrip/scenarios.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace gridtrip::cli {

/// Options shared by the subcommands; flags override values from --config.
struct RunConfig {
    std::filesystem::path fixtures;
    std::filesystem::path out;
    std::filesystem::path traces;
    std::filesystem::path params;
    SuiteKind suite = SuiteKind::in_sample;
    int n_dg = 2;
    std::uint64_t seed = 7;
    std::string family = "all"; // pi | dera | all
    std::string code = "all";   // 2005 | 2015 | 2020 | all
    std::string side = "all";   // under | over | all
    SwarmConfig swarm;
    SuiteOptions suite_options;

    void validate_selectors() const;
};

/// Fills a RunConfig from a JSON document (unknown keys are rejected).
void merge_config(RunConfig& cfg, const nlohmann::json& doc);

int cmd_simulate(const RunConfig& cfg);
int cmd_fit(const RunConfig& cfg);
int cmd_evaluate(const RunConfig& cfg);
int cmd_report(const RunConfig& cfg);

} // namespace gridtrip::cli
