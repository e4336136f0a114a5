#pragma once

#include <span>
#include <vector>

#include "diffvar/dataset.hpp"
#include "diffvar/nuisance.hpp"

namespace diffvar {

// Delta-method denominators at or below this floor are reported as
// degenerate rather than producing enormous standard errors.
inline constexpr double kVarianceFloor = 1e-10;

enum class EstimandTag { sigma2, psi, lambda };

struct EifVector {
    std::vector<double> values;
    EstimandTag tag = EstimandTag::sigma2;
    int arm = -1; // meaningful for sigma2 only

    std::size_t size() const { return values.size(); }
};

// Influence function of the counterfactual outcome variance sigma^2(a),
// evaluated per observation:
//   D_i = h_i(a) * (y_i^2 - q2_i + 2 mu (q1_i - y_i))
//         + q2_i - 2 q1_i mu + mu^2 - sigma2_hat
EifVector eif_sigma2(std::span<const double> y, std::span<const double> h_arm,
                     std::span<const double> q1_arm, std::span<const double> q2_arm, double mu,
                     double sigma2_hat, int arm);

// Convenience wrapper over a full NuisanceFit.
EifVector eif_sigma2(const Dataset& scaled, const NuisanceFit& nf, double sigma2_hat, int arm);

// Difference-of-standard-deviations contrast: D = D1/(2 sqrt(s1)) - D0/(2 sqrt(s0)).
EifVector eif_psi(const EifVector& eif1, const EifVector& eif0, double s2_1, double s2_0);

// Variance-ratio contrast: D = D1/s0 - s1 * D0 / s0^2.
EifVector eif_lambda(const EifVector& eif1, const EifVector& eif0, double s2_1, double s2_0);

// Wald standard error sqrt(mean(D^2) / n_total).
double eif_se(const EifVector& e, std::size_t n_total);

// Cross-fitted variant: pools squared values across folds and divides by
// total n (not fold n).
double cross_fit_se(std::span<const EifVector> per_fold, std::size_t n_total);

} // namespace diffvar
