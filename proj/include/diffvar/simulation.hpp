#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffvar/dataset.hpp"
#include "diffvar/estimators.hpp"

namespace diffvar {

// Bundled benchmark data-generating processes.
//   Study 1: observational design, treatment-dependent outcome noise and a
//            treatment-by-covariate interaction (variance-ratio target).
//   Study 2: observational design with no treatment effect heterogeneity
//            (difference-of-SDs target, truth 0).
//   Study 3: randomized design with a binary effect modifier observed
//            through a mismeasurement channel of probability m.
struct DgpSpec {
    int study = 1;
    int n = 0;
    double m = 0.0; // study 3 only: P(effect modifier replaced by noise)
    std::uint64_t seed = 1;
};

struct TruthValues {
    double lambda0 = 1.0;
    double psi0 = 0.0;
    std::string source; // "closed_form" or "monte_carlo(n,seed)"
};

Dataset draw(const DgpSpec& spec);
TruthValues truth(const DgpSpec& spec);

// Internal draw exposing the latent effect modifier path (tests only).
struct Study3Latents {
    std::vector<int> v, u, mflag;
};
Dataset draw_study3(const DgpSpec& spec, Study3Latents* latents);

struct SummaryRow {
    int study = 0;
    std::string scenario;
    Method method = Method::os;
    int n = 0;
    double truth = 0.0;
    double abs_bias = 0.0;
    double emp_variance = 0.0;
    double scaled_abs_bias = 0.0; // sqrt(n) * abs_bias
    double coverage = 0.0;
    double power = 0.0; // fraction of p < 0.05 against the estimand's null
    int n_reps = 0;
    int n_failures = 0;
};

struct RawRow {
    int study = 0;
    std::string scenario;
    Method method = Method::os;
    int n = 0;
    int rep = 0;
    bool failed = false;
    double estimate = 0.0, se = 0.0, ci_low = 0.0, ci_high = 0.0, p_value = 1.0;
    double truth = 0.0;
    bool covered = false;
    std::string error;
};

struct StudyResult {
    std::vector<SummaryRow> summary;
    std::vector<RawRow> raw;
};

struct RunConfig {
    int study = 1;
    std::vector<Method> estimators = {Method::os, Method::tmle, Method::cfos, Method::cftmle};
    std::vector<int> ns = {125, 250, 500, 1000};
    int reps = 200;
    // Empty = every scenario defined for the study. Study 1 defines
    // all_correct | g_only | q_only | none; studies 2 and 3 define default.
    std::vector<std::string> scenarios;
    double m = 0.0;
    std::uint64_t seed = 1;
    int threads = 1;
    int k = 5;
    double alpha = 0.05;
};

// Names of the nuisance scenarios defined for a study.
std::vector<std::string> study_scenarios(int study);

// The estimand each study targets (1 -> lambda, 2 and 3 -> psi).
Estimand study_estimand(int study);

// Nuisance configuration implementing a named scenario.
NuisanceConfig scenario_config(int study, const std::string& scenario);

// Runs the replication grid. Deterministic for a fixed seed regardless of
// thread count: replicate RNG streams are derived by counter-based
// splitting and aggregation is replicate-ordered.
StudyResult run_study(const RunConfig& cfg);

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);
void write_raw_csv(const std::string& path, const std::vector<RawRow>& rows);

// One SVG per metric (per scenario when several), series per estimator,
// dashed reference line at the idealized value.
void write_plots(const std::string& dir, const StudyResult& result);

} // namespace diffvar
