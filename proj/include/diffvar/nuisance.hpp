#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "diffvar/dataset.hpp"
#include "diffvar/learners.hpp"
#include "diffvar/matrix.hpp"

namespace diffvar {

// Propensity known a priori (RCT with constant assignment probability).
struct KnownPropensity {
    double value = 0.5;
};

// Known propensity function of covariates; used to inject oracle values.
using PropensityFn = std::function<std::vector<double>(const Matrix&)>;

struct NuisanceConfig {
    std::variant<KnownPropensity, PropensityFn, LearnerPtr> propensity = KnownPropensity{0.5};
    LearnerPtr outcome_mean;
    LearnerPtr outcome_sq;
    // Fallback: estimate Qbar^2 as Qbar^2 = Qbar*Qbar + arm residual variance
    // instead of a separate regression on y^2.
    bool derive_q2 = false;
    double clip_g = 0.01;

    // Spec strings echoed into reports.
    std::string propensity_spec = "known:0.5";
    std::string outcome_mean_spec;
    std::string outcome_sq_spec;

    void validate() const;
    bool propensity_is_known() const;
};

// Builds a config from spec strings; propensity additionally accepts
// "known:<p>".
NuisanceConfig make_nuisance_config(const std::string& propensity, const std::string& outcome_mean,
                                    const std::string& outcome_sq, double clip_g = 0.01);

// Per-observation nuisance values over an evaluation index set. Columns of
// q1/q2 are counterfactual arms: column 0 for a=0, column 1 for a=1.
struct NuisanceFit {
    std::vector<double> g; // P(A=1|W), clipped into [clip_g, 1-clip_g]
    Matrix q1;             // n_eval x 2
    Matrix q2;             // n_eval x 2
    double mu[2] = {0.0, 0.0};
    double clip_g = 0.01;
    // Diagnostic only: set when mean(q2 - q1^2) < 0 for that arm.
    bool q2_below_q1sq[2] = {false, false};
};

// Inverse-probability weight I(A=a) / P(A=a|W); zero off-arm, bounded by
// 1/clip_g on-arm.
struct CleverCovariate {
    Matrix h; // n x 2, column per arm
};

// Fits g, Qbar, Qbar^2 on train rows and evaluates them (plus the AIPW
// means) on eval rows. train == eval == all rows yields the non-cross-fit
// nuisance estimate.
NuisanceFit fit_nuisances(const Dataset& scaled, const NuisanceConfig& cfg,
                          std::span<const std::size_t> train_idx,
                          std::span<const std::size_t> eval_idx, std::uint64_t seed);

// Doubly robust (AIPW) estimate of the counterfactual mean E[Y^(a)] on the
// scaled-outcome scale, over the rows described by (y, a, g, q1_arm).
double aipw_mean(std::span<const double> y, std::span<const int> a, std::span<const double> g,
                 std::span<const double> q1_arm, int arm);

CleverCovariate clever_covariate(std::span<const int> a, std::span<const double> g);

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

} // namespace diffvar
