#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "diffvar/matrix.hpp"

namespace diffvar {

// Clip for probability-type predictions (propensities).
inline constexpr double kEpsP = 1e-3;

class Model {
  public:
    virtual ~Model() = default;
    virtual std::vector<double> predict(const Matrix& x) const = 0;
};

using ModelPtr = std::shared_ptr<const Model>;

// A supervised learner: fit(features, targets, seed) -> Model. Fits are
// deterministic given the seed; deterministic learners ignore it.
class Learner {
  public:
    virtual ~Learner() = default;
    virtual ModelPtr fit(const Matrix& x, std::span<const double> t, std::uint64_t seed) const = 0;
    virtual std::string name() const = 0;
};

using LearnerPtr = std::shared_ptr<const Learner>;

// Predicts the training-sample mean everywhere.
LearnerPtr make_mean_learner();

// Least squares on an intercept + main terms design (degree 1) or with
// squares and pairwise interactions added (degree 2). Near-singular normal
// equations get a trace-scaled ridge; rows < columns is a hard error.
LearnerPtr make_ols_learner(int degree);

// Logistic regression via IRLS on the same designs as make_ols_learner.
// Accepts fractional targets in [0,1]. Separation is guarded by a
// coefficient cap; such fits are flagged but still predict (clipped).
LearnerPtr make_logistic_learner(int degree);

struct ForestParams {
    int trees = 200;
    int max_depth = 8;
    int min_leaf = 5;
    int mtry = 0; // 0 = ceil(p / 3)
};

// Bagged CART regression trees with variance-reduction splits.
LearnerPtr make_forest_learner(const ForestParams& params = {});

// Stacking ensemble: simplex weights minimizing K-fold cross-validated
// squared error, then base learners refit on the full sample. A failing
// base learner is dropped (recorded as a warning on the fitted model);
// if every base fails, fitting fails.
LearnerPtr make_stacking_learner(std::vector<LearnerPtr> base, int cv_folds = 5);

// Restricts a learner to a subset of feature columns.
LearnerPtr make_column_subset_learner(LearnerPtr inner, std::vector<std::size_t> cols);

// Introspection hooks used by tests and diagnostics.
struct StackingInfo {
    std::vector<double> weights; // one per base learner, simplex
    std::vector<std::string> base_names;
    std::vector<std::string> warnings; // dropped learners
};
const StackingInfo* stacking_info(const Model& m);
bool logistic_separation_flagged(const Model& m);

// Parses a learner spec string: mean | ols | ols2 | logit | logit2 |
// forest(trees=...,depth=...,min_leaf=...,mtry=...) | stack(spec,spec,...).
LearnerPtr parse_learner(const std::string& spec);

// One-parameter logistic tilt: maximizes the offset-logistic likelihood of
// targets t in [0,1] with linear predictor offset + eta * h (h >= 0).
struct OffsetLogisticFit {
    double eta = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline constexpr double kTiltScoreTol = 1e-8; // |score| <= tol * n at convergence
inline constexpr double kTiltEtaBound = 20.0; // bisection fallback range

OffsetLogisticFit fit_offset_logistic(std::span<const double> h, std::span<const double> offset,
                                      std::span<const double> targets);

// Weighted variant: intercept-only tilt, weights h, solving
// sum h * (t - expit(offset + eta)) = 0.
OffsetLogisticFit fit_offset_logistic_weighted(std::span<const double> h,
                                               std::span<const double> offset,
                                               std::span<const double> targets);

} // namespace diffvar
