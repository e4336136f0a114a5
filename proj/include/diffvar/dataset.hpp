#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffvar/matrix.hpp"

namespace diffvar {

// Scaled outcomes are clipped into [kEpsY, 1 - kEpsY] so that logits of
// fitted outcome regressions stay finite at the observed extremes.
inline constexpr double kEpsY = 1e-4;

// Observed data: covariates w (n x p), binary treatment a, continuous
// outcome y. Immutable after construction; validate() enforces the type
// invariants (n >= 2, both arms present, all values finite, a in {0,1}).
struct Dataset {
    Matrix w;
    std::vector<int> a;
    std::vector<double> y;

    std::size_t n() const { return y.size(); }
    std::size_t p() const { return w.cols; }

    std::size_t arm_count(int arm) const;
    void validate() const;
};

struct ScalingParams {
    double y_min = 0.0;
    double y_max = 1.0;

    double range() const { return y_max - y_min; }
    bool operator==(const ScalingParams&) const = default;
};

// Arm-stratified fold split; fold ids run 1..k.
struct FoldAssignment {
    int k = 0;
    std::vector<int> fold_of;

    std::vector<std::size_t> fold_indices(int fold) const;
    std::vector<std::size_t> complement_indices(int fold) const;
    std::size_t fold_size(int fold) const { return fold_indices(fold).size(); }
};

// Reads an RFC-4180-style CSV (header row required, '.' decimal separator)
// and validates it into a Dataset. Row numbers in error messages are
// 1-based data rows, excluding the header.
Dataset load_csv(const std::string& path, const std::string& outcome,
                 const std::string& treatment, const std::vector<std::string>& covariates);

// Min-max scales y to the unit interval and clips into (0, 1).
std::pair<Dataset, ScalingParams> scale_outcome(const Dataset& d);

// Maps a variance from the scaled scale back to original units squared.
double unscale_variance(double v, const ScalingParams& s);

FoldAssignment make_folds(const Dataset& d, int k, std::uint64_t seed);

} // namespace diffvar
