// diffvar: differential-variance inference for two-arm studies.
//
//   diffvar analyze  --data data.csv --outcome y --treatment a ...
//   diffvar simulate --study 1|2|3 ...

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffvar/cli.hpp"
#include "diffvar/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Causal machine-learning inference about potential-outcome variance contrasts"};
    app.require_subcommand(1);

    diffvar::AnalyzeConfig acfg;
    std::string covariates_csv;
    auto* analyze = app.add_subcommand("analyze", "Estimate a variance contrast from a CSV file");
    analyze->set_config("--config");
    analyze->add_option("--data", acfg.data_path, "CSV path")->required();
    analyze->add_option("--outcome", acfg.outcome, "Outcome column")->required();
    analyze->add_option("--treatment", acfg.treatment, "Treatment column (values 0/1)")
        ->required();
    analyze->add_option("--covariates", covariates_csv,
                        "Comma-separated covariate columns (default: all others)");
    analyze->add_option("--estimand", acfg.estimand, "abs (difference of SDs) | rel (variance ratio)");
    analyze->add_option("--method", acfg.method, "os | tmle | cfos | cftmle");
    analyze->add_option("--k", acfg.k, "Folds for cross-fitted methods");
    analyze->add_option("--alpha", acfg.alpha, "Confidence level is 1 - alpha");
    analyze->add_option("--seed", acfg.seed, "RNG seed");
    analyze->add_option("--propensity", acfg.propensity,
                        "Propensity learner spec, or known:<p> for a known probability");
    analyze->add_option("--qbar", acfg.qbar, "Outcome-mean learner spec");
    analyze->add_option("--qbar2", acfg.qbar2, "Squared-outcome learner spec");
    analyze->add_option("--tmle-tilt", acfg.tmle_tilt, "covariate | weighted");
    analyze->add_option("--out", acfg.out_dir, "Output directory for report.json");

    diffvar::SimulateConfig scfg;
    std::string ns_csv;
    auto* simulate = app.add_subcommand("simulate", "Run a bundled simulation study");
    simulate->set_config("--config");
    simulate->add_option("--study", scfg.study, "1 | 2 | 3")->required();
    simulate->add_option("--scenario", scfg.scenario,
                         "Nuisance scenario (study 1: all_correct|g_only|q_only|none); default all");
    simulate->add_option("--estimators", scfg.estimators,
                         "Comma list of os,tmle,cfos,cftmle (default all)");
    simulate->add_option("--ns", ns_csv, "Comma list of sample sizes");
    simulate->add_option("--reps", scfg.reps, "Replicates per cell");
    simulate->add_option("--m", scfg.m, "Study-3 mismeasurement probability in [0,1]");
    simulate->add_flag("--full", scfg.full, "Full-scale grid: 500 reps, n up to 2000");
    simulate->add_option("--threads", scfg.threads, "Worker threads");
    simulate->add_option("--seed", scfg.seed, "RNG seed");
    simulate->add_option("--k", scfg.k, "Cross-fitting folds");
    simulate->add_option("--alpha", scfg.alpha, "Test level");
    simulate->add_option("--out", scfg.out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : diffvar::exit_config;
    }

    if (analyze->parsed()) {
        if (!covariates_csv.empty()) {
            std::string token;
            for (char c : covariates_csv + ",") {
                if (c == ',') {
                    if (!token.empty()) acfg.covariates.push_back(token);
                    token.clear();
                } else {
                    token += c;
                }
            }
        }
        return diffvar::cmd_analyze(acfg, std::cout, std::cerr);
    }

    if (!ns_csv.empty()) {
        std::string token;
        for (char c : ns_csv + ",") {
            if (c == ',') {
                if (!token.empty()) {
                    try {
                        scfg.ns.push_back(std::stoi(token));
                    } catch (const std::exception&) {
                        std::cerr << "error: bad sample size '" << token << "'\n";
                        return diffvar::exit_config;
                    }
                }
                token.clear();
            } else {
                token += c;
            }
        }
    }
    return diffvar::cmd_simulate(scfg, std::cout, std::cerr);
}
