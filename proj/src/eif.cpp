#include "diffvar/eif.hpp"

#include <cmath>

#include "diffvar/errors.hpp"

namespace diffvar {

EifVector eif_sigma2(std::span<const double> y, std::span<const double> h_arm,
                     std::span<const double> q1_arm, std::span<const double> q2_arm, double mu,
                     double sigma2_hat, int arm) {
    const std::size_t n = y.size();
    if (h_arm.size() != n || q1_arm.size() != n || q2_arm.size() != n)
        throw ContractError("eif_sigma2 inputs must have equal length");
    EifVector e;
    e.tag = EstimandTag::sigma2;
    e.arm = arm;
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double weighted =
            h_arm[i] * (y[i] * y[i] - q2_arm[i] + 2.0 * mu * (q1_arm[i] - y[i]));
        e.values[i] = weighted + q2_arm[i] - 2.0 * q1_arm[i] * mu + mu * mu - sigma2_hat;
        if (!std::isfinite(e.values[i])) throw NumericError("non-finite influence value");
    }
    return e;
}

EifVector eif_sigma2(const Dataset& scaled, const NuisanceFit& nf, double sigma2_hat, int arm) {
    const auto cc = clever_covariate(scaled.a, nf.g);
    const std::size_t n = scaled.n();
    std::vector<double> h(n), q1(n), q2(n);
    for (std::size_t i = 0; i < n; ++i) {
        h[i] = cc.h(i, static_cast<std::size_t>(arm));
        q1[i] = nf.q1(i, static_cast<std::size_t>(arm));
        q2[i] = nf.q2(i, static_cast<std::size_t>(arm));
    }
    return eif_sigma2(scaled.y, h, q1, q2, nf.mu[arm], sigma2_hat, arm);
}

EifVector eif_psi(const EifVector& eif1, const EifVector& eif0, double s2_1, double s2_0) {
    if (eif1.size() != eif0.size()) throw ContractError("eif_psi inputs must have equal length");
    if (s2_1 <= kVarianceFloor || s2_0 <= kVarianceFloor)
        throw DegenerateError(
            "degenerate variance in the absolute contrast denominator; report sigma^2 per arm "
            "instead");
    EifVector e;
    e.tag = EstimandTag::psi;
    e.values.resize(eif1.size());
    const double d1 = 2.0 * std::sqrt(s2_1), d0 = 2.0 * std::sqrt(s2_0);
    for (std::size_t i = 0; i < e.values.size(); ++i)
        e.values[i] = eif1.values[i] / d1 - eif0.values[i] / d0;
    return e;
}

EifVector eif_lambda(const EifVector& eif1, const EifVector& eif0, double s2_1, double s2_0) {
    if (eif1.size() != eif0.size()) throw ContractError("eif_lambda inputs must have equal length");
    if (s2_0 <= kVarianceFloor)
        throw DegenerateError(
            "degenerate control-arm variance in the ratio denominator; report sigma^2 per arm "
            "instead");
    EifVector e;
    e.tag = EstimandTag::lambda;
    e.values.resize(eif1.size());
    for (std::size_t i = 0; i < e.values.size(); ++i)
        e.values[i] = eif1.values[i] / s2_0 - s2_1 * eif0.values[i] / (s2_0 * s2_0);
    return e;
}

double eif_se(const EifVector& e, std::size_t n_total) {
    if (n_total < 2) throw ContractError("eif_se needs n_total >= 2");
    double ss = 0.0;
    for (double v : e.values) ss += v * v;
    const double mean_sq = e.values.empty() ? 0.0 : ss / static_cast<double>(e.values.size());
    return std::sqrt(mean_sq / static_cast<double>(n_total));
}

double cross_fit_se(std::span<const EifVector> per_fold, std::size_t n_total) {
    if (n_total < 2) throw ContractError("cross_fit_se needs n_total >= 2");
    double ss = 0.0;
    for (const auto& e : per_fold)
        for (double v : e.values) ss += v * v;
    const double nt = static_cast<double>(n_total);
    return std::sqrt(ss / nt / nt);
}

} // namespace diffvar
