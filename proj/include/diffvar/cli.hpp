#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace diffvar {

struct AnalyzeConfig {
    std::string data_path;
    std::string outcome;
    std::string treatment;
    std::vector<std::string> covariates; // empty = every other column
    std::string estimand = "abs";        // abs | rel
    std::string method = "tmle";         // os | tmle | cfos | cftmle
    int k = 5;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    std::string propensity = "logit";
    std::string qbar = "ols";
    std::string qbar2 = "ols2";
    std::string tmle_tilt = "covariate"; // covariate | weighted
    std::string out_dir = ".";
};

struct SimulateConfig {
    int study = 1;
    std::string scenario;   // empty = all scenarios for the study
    std::string estimators; // comma list, empty = os,tmle,cfos,cftmle
    std::vector<int> ns;    // empty = desk-scale default
    int reps = 200;
    double m = 0.0;
    bool full = false; // full-scale grid: 500 reps, n up to 2000
    int threads = 1;
    std::uint64_t seed = 1;
    int k = 5;
    double alpha = 0.05;
    std::string out_dir = ".";
};

// Runs an analysis: writes <out>/report.json and prints a result table.
// Returns a process exit code (0 ok, 2 config/validation, 3 degenerate
// estimate, 4 numeric failure).
int cmd_analyze(const AnalyzeConfig& cfg, std::ostream& out, std::ostream& err);

// Runs a simulation grid: writes summary.csv, raw.csv and SVG plots.
int cmd_simulate(const SimulateConfig& cfg, std::ostream& out, std::ostream& err);

} // namespace diffvar
