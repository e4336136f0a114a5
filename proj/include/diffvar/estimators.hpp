#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffvar/dataset.hpp"
#include "diffvar/eif.hpp"
#include "diffvar/nuisance.hpp"

namespace diffvar {

enum class Method { os, tmle, cfos, cftmle };
enum class Estimand { psi, lambda };
enum class TmleTilt { covariate, weighted };

std::string method_id(Method m);      // os | tmle | cfos | cftmle
std::string method_label(Method m);   // One-Step | TMLE | CF One-Step | CF TMLE
std::string estimand_id(Estimand e);  // psi | lambda
Method parse_method(const std::string& s);
Estimand parse_estimand(const std::string& s); // abs|psi -> psi, rel|lambda -> lambda

struct VarianceEstimate {
    int arm = 0;
    Method method = Method::os;
    double value_scaled = 0.0;
    double value_original = 0.0; // unscale_variance(max(value_scaled, 0))
    double se_original = 0.0;
    EifVector eif; // scaled scale, length n
    bool negative_flagged = false;
};

struct ContrastReport {
    Estimand estimand = Estimand::psi;
    Method method = Method::os;
    double estimate = 0.0; // psi in original outcome units, lambda unitless
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;
    double alpha = 0.05;
    double null_value = 0.0; // 0 for psi, 1 for lambda
    VarianceEstimate arm0;
    VarianceEstimate arm1;
    ScalingParams scaling;
    std::string config_fingerprint;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    int k = 0; // folds; 0 for non-cross-fit methods
    std::string propensity_spec, outcome_mean_spec, outcome_sq_spec;
    bool propensity_known = false;
};

struct EstimateOptions {
    double alpha = 0.05;
    int k = 5;
    std::uint64_t seed = 1;
    TmleTilt tilt = TmleTilt::covariate;
};

// One-step (= estimating equation) estimator of sigma^2(a) on the scaled
// outcome scale, over the full sample described by `nf`.
VarianceEstimate one_step_sigma2(const Dataset& scaled, const NuisanceFit& nf, int arm,
                                 const ScalingParams& sp);

// TMLE: tilts q1 and q2 through separate one-parameter offset-logistic
// fits, then plugs in E_n[q2*] - E_n[q1*]^2.
VarianceEstimate tmle_sigma2(const Dataset& scaled, const NuisanceFit& nf, int arm,
                             const ScalingParams& sp, TmleTilt tilt = TmleTilt::covariate);

// K-fold cross-fitted one-step or TMLE, per-arm. Nuisances for fold k are
// trained on its complement; fold estimates are combined with n_k/n
// weights and the SE pools squared influence values across folds.
std::pair<VarianceEstimate, VarianceEstimate>
cross_fit(const Dataset& scaled, const NuisanceConfig& cfg, int k, std::uint64_t seed,
          Method base, const ScalingParams& sp, TmleTilt tilt = TmleTilt::covariate);

// Same, with a caller-supplied fold assignment (test hook).
std::pair<VarianceEstimate, VarianceEstimate>
cross_fit_with_folds(const Dataset& scaled, const NuisanceConfig& cfg, const FoldAssignment& folds,
                     std::uint64_t seed, Method base, const ScalingParams& sp,
                     TmleTilt tilt = TmleTilt::covariate);

// Full pipeline on an original-units dataset: scale, estimate per arm,
// contrast, Wald inference.
ContrastReport estimate_contrast(const Dataset& d, const NuisanceConfig& cfg, Method method,
                                 Estimand estimand, const EstimateOptions& opt);

// Shares nuisance fits across the requested methods (one full-sample fit
// for os/tmle, one set of per-fold fits for cfos/cftmle). Per-method
// failures are reported, not thrown.
struct MethodResult {
    Method method = Method::os;
    std::optional<ContrastReport> report;
    std::string error;
    int error_code = 0;
};

std::vector<MethodResult> run_methods(const Dataset& d, const NuisanceConfig& cfg,
                                      std::span<const Method> methods, Estimand estimand,
                                      const EstimateOptions& opt);

// JSON document (schema "diffvar-report/1"); parse(emit(r)) == r.
std::string report_to_json(const ContrastReport& r);
ContrastReport report_from_json(const std::string& text);
bool operator==(const ContrastReport& a, const ContrastReport& b);

// Table row in the style: Estimator | Estimate | Standard Error |
// 95% Confidence Interval | P-Value.
std::string render_table(const ContrastReport& r);
std::string render_table_row(const std::string& estimator, double estimate, double se,
                             double ci_low, double ci_high, double p_value);

} // namespace diffvar
