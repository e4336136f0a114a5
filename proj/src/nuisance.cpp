#include "diffvar/nuisance.hpp"

#include <cmath>

#include "diffvar/errors.hpp"
#include "diffvar/rng.hpp"
#include "diffvar/stats.hpp"

namespace diffvar {

void NuisanceConfig::validate() const {
    if (!(clip_g > 0.0 && clip_g < 0.5)) throw ConfigError("clip_g must lie in (0, 0.5)");
    if (const auto* kp = std::get_if<KnownPropensity>(&propensity)) {
        if (!(kp->value > 0.0 && kp->value < 1.0))
            throw ConfigError("known propensity must lie strictly inside (0, 1)");
    }
    if (!outcome_mean) throw ConfigError("outcome_mean learner is not set");
    if (!outcome_sq && !derive_q2) throw ConfigError("outcome_sq learner is not set");
}

bool NuisanceConfig::propensity_is_known() const {
    return !std::holds_alternative<LearnerPtr>(propensity);
}

NuisanceConfig make_nuisance_config(const std::string& propensity, const std::string& outcome_mean,
                                    const std::string& outcome_sq, double clip_g) {
    NuisanceConfig cfg;
    cfg.clip_g = clip_g;
    cfg.propensity_spec = propensity;
    cfg.outcome_mean_spec = outcome_mean;
    cfg.outcome_sq_spec = outcome_sq;
    if (propensity.starts_with("known:")) {
        double p = 0.0;
        try {
            p = std::stod(propensity.substr(6));
        } catch (const std::exception&) {
            throw ConfigError("bad known propensity: " + propensity);
        }
        cfg.propensity = KnownPropensity{p};
    } else {
        cfg.propensity = parse_learner(propensity);
    }
    cfg.outcome_mean = parse_learner(outcome_mean);
    cfg.outcome_sq = parse_learner(outcome_sq);
    cfg.validate();
    return cfg;
}

double aipw_mean(std::span<const double> y, std::span<const int> a, std::span<const double> g,
                 std::span<const double> q1_arm, int arm) {
    const std::size_t n = y.size();
    if (a.size() != n || g.size() != n || q1_arm.size() != n)
        throw ContractError("aipw_mean inputs must have equal length");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p_arm = arm == 1 ? g[i] : 1.0 - g[i];
        const double ipw = a[i] == arm ? 1.0 / p_arm : 0.0;
        acc += ipw * (y[i] - q1_arm[i]) + q1_arm[i];
    }
    return acc / static_cast<double>(n);
}

CleverCovariate clever_covariate(std::span<const int> a, std::span<const double> g) {
    if (a.size() != g.size()) throw ContractError("clever_covariate inputs must match");
    CleverCovariate cc;
    cc.h = Matrix(a.size(), 2);
    for (std::size_t i = 0; i < a.size(); ++i) {
        cc.h(i, 0) = a[i] == 0 ? 1.0 / (1.0 - g[i]) : 0.0;
        cc.h(i, 1) = a[i] == 1 ? 1.0 / g[i] : 0.0;
    }
    return cc;
}

NuisanceFit fit_nuisances(const Dataset& scaled, const NuisanceConfig& cfg,
                          std::span<const std::size_t> train_idx,
                          std::span<const std::size_t> eval_idx, std::uint64_t seed) {
    cfg.validate();
    if (train_idx.empty() || eval_idx.empty())
        throw ContractError("train and eval index sets must be nonempty");

    const Matrix w_train = scaled.w.take_rows(train_idx);
    const Matrix w_eval = scaled.w.take_rows(eval_idx);
    const auto y_train = take(scaled.y, train_idx);
    const std::size_t n_eval = eval_idx.size();

    NuisanceFit nf;
    nf.clip_g = cfg.clip_g;

    // Propensity: known value, known function, or fit on the train rows.
    if (const auto* kp = std::get_if<KnownPropensity>(&cfg.propensity)) {
        nf.g.assign(n_eval, clip(kp->value, cfg.clip_g, 1.0 - cfg.clip_g));
    } else if (const auto* fn = std::get_if<PropensityFn>(&cfg.propensity)) {
        nf.g = (*fn)(w_eval);
        if (nf.g.size() != n_eval) throw ContractError("propensity function returned wrong size");
        for (auto& v : nf.g) v = clip(v, cfg.clip_g, 1.0 - cfg.clip_g);
    } else {
        std::vector<double> a_train(train_idx.size());
        for (std::size_t i = 0; i < train_idx.size(); ++i)
            a_train[i] = static_cast<double>(scaled.a[train_idx[i]]);
        const auto model = std::get<LearnerPtr>(cfg.propensity)
                               ->fit(w_train, a_train, derive_seed(seed, {0x67ULL}));
        nf.g = model->predict(w_eval);
        for (auto& v : nf.g) v = clip(v, cfg.clip_g, 1.0 - cfg.clip_g);
    }

    // Arm-specific outcome regressions evaluated at both counterfactual arms.
    nf.q1 = Matrix(n_eval, 2);
    nf.q2 = Matrix(n_eval, 2);
    for (int arm : {0, 1}) {
        std::vector<std::size_t> arm_rows;
        for (std::size_t i = 0; i < train_idx.size(); ++i)
            if (scaled.a[train_idx[i]] == arm) arm_rows.push_back(i);
        if (arm_rows.empty())
            throw DegenerateError("training rows contain no arm-" + std::to_string(arm) +
                                  " observations");
        const Matrix w_arm = w_train.take_rows(arm_rows);
        const auto y_arm = take(y_train, arm_rows);

        const auto m1 = cfg.outcome_mean->fit(
            w_arm, y_arm, derive_seed(seed, {0x7131ULL, static_cast<std::uint64_t>(arm)}));
        const auto p1 = m1->predict(w_eval);
        for (std::size_t i = 0; i < n_eval; ++i)
            nf.q1(i, static_cast<std::size_t>(arm)) = clip(p1[i], kEpsY, 1.0 - kEpsY);

        std::vector<double> p2;
        if (cfg.derive_q2) {
            // q2 = q1^2 + arm residual variance, on the training rows.
            const auto fit1 = m1->predict(w_arm);
            double rv = 0.0;
            for (std::size_t i = 0; i < arm_rows.size(); ++i) {
                const double r = y_arm[i] - fit1[i];
                rv += r * r;
            }
            rv /= static_cast<double>(arm_rows.size());
            p2.resize(n_eval);
            for (std::size_t i = 0; i < n_eval; ++i) p2[i] = p1[i] * p1[i] + rv;
        } else {
            std::vector<double> y2_arm(y_arm.size());
            for (std::size_t i = 0; i < y_arm.size(); ++i) y2_arm[i] = y_arm[i] * y_arm[i];
            const auto m2 = cfg.outcome_sq->fit(
                w_arm, y2_arm, derive_seed(seed, {0x7132ULL, static_cast<std::uint64_t>(arm)}));
            p2 = m2->predict(w_eval);
        }
        double gap = 0.0;
        for (std::size_t i = 0; i < n_eval; ++i) {
            const double q2v = clip(p2[i], kEpsY, 1.0 - kEpsY);
            nf.q2(i, static_cast<std::size_t>(arm)) = q2v;
            const double q1v = nf.q1(i, static_cast<std::size_t>(arm));
            gap += q2v - q1v * q1v;
        }
        nf.q2_below_q1sq[arm] = gap < 0.0;
    }

    const auto y_eval = take(scaled.y, eval_idx);
    std::vector<int> a_eval(n_eval);
    for (std::size_t i = 0; i < n_eval; ++i) a_eval[i] = scaled.a[eval_idx[i]];
    for (int arm : {0, 1}) {
        std::vector<double> q1_arm(n_eval);
        for (std::size_t i = 0; i < n_eval; ++i) q1_arm[i] = nf.q1(i, static_cast<std::size_t>(arm));
        nf.mu[arm] = aipw_mean(y_eval, a_eval, nf.g, q1_arm, arm);
    }

    for (double v : nf.g)
        if (!std::isfinite(v)) throw NumericError("non-finite propensity estimate");
    for (double v : nf.q1.data)
        if (!std::isfinite(v)) throw NumericError("non-finite outcome-mean estimate");
    for (double v : nf.q2.data)
        if (!std::isfinite(v)) throw NumericError("non-finite squared-outcome estimate");
    if (!std::isfinite(nf.mu[0]) || !std::isfinite(nf.mu[1]))
        throw NumericError("non-finite counterfactual mean estimate");
    return nf;
}

} // namespace diffvar
