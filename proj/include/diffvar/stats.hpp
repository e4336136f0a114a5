#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace diffvar {

inline double expit(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clip(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Two-sided p-value for a standard-normal test statistic.
inline double two_sided_p(double z) { return std::erfc(std::fabs(z) * M_SQRT1_2); }

// Inverse standard-normal CDF: Acklam's rational approximation followed by
// one Halley step against erfc, good to ~1e-15 over (0, 1).
double normal_quantile(double p);

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Unbiased sample variance (n - 1 denominator).
inline double sample_variance(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

} // namespace diffvar
