#include "diffvar/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "diffvar/errors.hpp"
#include "diffvar/rng.hpp"
#include "diffvar/stats.hpp"

namespace diffvar {

std::string method_id(Method m) {
    switch (m) {
        case Method::os: return "os";
        case Method::tmle: return "tmle";
        case Method::cfos: return "cfos";
        case Method::cftmle: return "cftmle";
    }
    return "?";
}

std::string method_label(Method m) {
    switch (m) {
        case Method::os: return "One-Step";
        case Method::tmle: return "TMLE";
        case Method::cfos: return "CF One-Step";
        case Method::cftmle: return "CF TMLE";
    }
    return "?";
}

std::string estimand_id(Estimand e) { return e == Estimand::psi ? "psi" : "lambda"; }

Method parse_method(const std::string& s) {
    if (s == "os") return Method::os;
    if (s == "tmle") return Method::tmle;
    if (s == "cfos") return Method::cfos;
    if (s == "cftmle") return Method::cftmle;
    throw ConfigError("unknown method '" + s + "' (expected os|tmle|cfos|cftmle)");
}

Estimand parse_estimand(const std::string& s) {
    if (s == "abs" || s == "psi") return Estimand::psi;
    if (s == "rel" || s == "lambda") return Estimand::lambda;
    throw ConfigError("unknown estimand '" + s + "' (expected abs|rel)");
}

namespace {

bool is_cross_fit(Method m) { return m == Method::cfos || m == Method::cftmle; }
Method base_of(Method m) { return m == Method::cfos ? Method::os : Method::tmle; }

std::vector<double> arm_column(const Matrix& m, int arm) {
    std::vector<double> out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) out[i] = m(i, static_cast<std::size_t>(arm));
    return out;
}

void finish_estimate(VarianceEstimate& ve, const ScalingParams& sp, std::size_t n_total) {
    ve.negative_flagged = ve.value_scaled < 0.0;
    ve.value_original = unscale_variance(std::max(ve.value_scaled, 0.0), sp);
    ve.se_original = eif_se(ve.eif, n_total) * sp.range() * sp.range();
}

// Rethrows with the fold id prepended, keeping the error category (and
// therefore the CLI exit code) intact.
[[noreturn]] void rethrow_with_fold(int fold, const Error& e) {
    const std::string msg = "fold " + std::to_string(fold) + ": " + e.what();
    if (dynamic_cast<const DegenerateError*>(&e)) throw DegenerateError(msg);
    if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(msg);
    throw NumericError(msg);
}

} // namespace

VarianceEstimate one_step_sigma2(const Dataset& scaled, const NuisanceFit& nf, int arm,
                                 const ScalingParams& sp) {
    const std::size_t n = scaled.n();
    const auto cc = clever_covariate(scaled.a, nf.g);
    const double mu = nf.mu[arm];
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double h = cc.h(i, static_cast<std::size_t>(arm));
        const double q1 = nf.q1(i, static_cast<std::size_t>(arm));
        const double q2 = nf.q2(i, static_cast<std::size_t>(arm));
        const double y = scaled.y[i];
        acc += h * (y * y - q2 + 2.0 * mu * (q1 - y)) + q2 - 2.0 * q1 * mu;
    }
    VarianceEstimate ve;
    ve.arm = arm;
    ve.method = Method::os;
    ve.value_scaled = acc / static_cast<double>(n) + mu * mu;
    ve.eif = eif_sigma2(scaled, nf, ve.value_scaled, arm);
    finish_estimate(ve, sp, n);
    return ve;
}

VarianceEstimate tmle_sigma2(const Dataset& scaled, const NuisanceFit& nf, int arm,
                             const ScalingParams& sp, TmleTilt tilt) {
    const std::size_t n = scaled.n();
    const auto cc = clever_covariate(scaled.a, nf.g);
    std::vector<double> h = arm_column(cc.h, arm);
    std::vector<double> q1 = arm_column(nf.q1, arm);
    std::vector<double> q2 = arm_column(nf.q2, arm);
    std::vector<double> off1(n), off2(n), y2(n);
    for (std::size_t i = 0; i < n; ++i) {
        off1[i] = logit(q1[i]);
        off2[i] = logit(q2[i]);
        y2[i] = scaled.y[i] * scaled.y[i];
    }
    const auto solve = tilt == TmleTilt::covariate ? fit_offset_logistic
                                                   : fit_offset_logistic_weighted;
    const auto fit1 = solve(h, off1, scaled.y);
    if (!fit1.converged)
        throw NumericError("TMLE tilt for Qbar (arm " + std::to_string(arm) +
                           ") did not converge after " + std::to_string(fit1.iterations) +
                           " iterations (eta=" + std::to_string(fit1.eta) + ")");
    const auto fit2 = solve(h, off2, y2);
    if (!fit2.converged)
        throw NumericError("TMLE tilt for Qbar^2 (arm " + std::to_string(arm) +
                           ") did not converge after " + std::to_string(fit2.iterations) +
                           " iterations (eta=" + std::to_string(fit2.eta) + ")");

    std::vector<double> q1s(n), q2s(n);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        // The weighted tilt shifts every prediction by eta; the covariate
        // tilt shifts by eta*h, which vanishes off-arm.
        const double shift1 = tilt == TmleTilt::covariate ? fit1.eta * h[i] : fit1.eta;
        const double shift2 = tilt == TmleTilt::covariate ? fit2.eta * h[i] : fit2.eta;
        q1s[i] = expit(off1[i] + shift1);
        q2s[i] = expit(off2[i] + shift2);
        m1 += q1s[i];
        m2 += q2s[i];
    }
    m1 /= static_cast<double>(n);
    m2 /= static_cast<double>(n);

    VarianceEstimate ve;
    ve.arm = arm;
    ve.method = Method::tmle;
    ve.value_scaled = m2 - m1 * m1;
    if (!(ve.value_scaled >= -0.25 && ve.value_scaled <= 0.25))
        throw NumericError("TMLE variance outside the plug-in bound: " +
                           std::to_string(ve.value_scaled));
    ve.eif = eif_sigma2(scaled.y, h, q1s, q2s, m1, ve.value_scaled, arm);
    finish_estimate(ve, sp, n);
    return ve;
}

std::pair<VarianceEstimate, VarianceEstimate>
cross_fit_with_folds(const Dataset& scaled, const NuisanceConfig& cfg, const FoldAssignment& folds,
                     std::uint64_t seed, Method base, const ScalingParams& sp, TmleTilt tilt) {
    if (base != Method::os && base != Method::tmle)
        throw ConfigError("cross_fit base must be os or tmle");
    const std::size_t n = scaled.n();
    std::pair<VarianceEstimate, VarianceEstimate> out;
    for (int arm : {0, 1}) {
        auto& ve = arm == 0 ? out.first : out.second;
        ve.arm = arm;
        ve.method = base == Method::os ? Method::cfos : Method::cftmle;
        ve.eif.tag = EstimandTag::sigma2;
        ve.eif.arm = arm;
        ve.eif.values.assign(n, 0.0);
    }
    for (int f = 1; f <= folds.k; ++f) {
        const auto eval_idx = folds.fold_indices(f);
        const auto train_idx = folds.complement_indices(f);
        NuisanceFit nf;
        try {
            nf = fit_nuisances(scaled, cfg, train_idx, eval_idx,
                               derive_seed(seed, {static_cast<std::uint64_t>(f)}));
        } catch (const Error& e) {
            rethrow_with_fold(f, e);
        }
        Dataset sub;
        sub.w = scaled.w.take_rows(eval_idx);
        sub.y = take(scaled.y, eval_idx);
        sub.a.resize(eval_idx.size());
        for (std::size_t i = 0; i < eval_idx.size(); ++i) sub.a[i] = scaled.a[eval_idx[i]];

        const double weight = static_cast<double>(eval_idx.size()) / static_cast<double>(n);
        for (int arm : {0, 1}) {
            VarianceEstimate fold_est;
            try {
                fold_est = base == Method::os ? one_step_sigma2(sub, nf, arm, sp)
                                              : tmle_sigma2(sub, nf, arm, sp, tilt);
            } catch (const Error& e) {
                rethrow_with_fold(f, e);
            }
            auto& ve = arm == 0 ? out.first : out.second;
            ve.value_scaled += weight * fold_est.value_scaled;
            for (std::size_t i = 0; i < eval_idx.size(); ++i)
                ve.eif.values[eval_idx[i]] = fold_est.eif.values[i];
        }
    }
    for (int arm : {0, 1}) {
        auto& ve = arm == 0 ? out.first : out.second;
        finish_estimate(ve, sp, n);
    }
    return out;
}

std::pair<VarianceEstimate, VarianceEstimate>
cross_fit(const Dataset& scaled, const NuisanceConfig& cfg, int k, std::uint64_t seed, Method base,
          const ScalingParams& sp, TmleTilt tilt) {
    const auto folds = make_folds(scaled, k, derive_seed(seed, {0x666f6c6473ULL}));
    return cross_fit_with_folds(scaled, cfg, folds, seed, base, sp, tilt);
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fingerprint(const NuisanceConfig& cfg, Method method, Estimand estimand,
                        const EstimateOptions& opt) {
    std::ostringstream os;
    os << cfg.propensity_spec << '|' << cfg.outcome_mean_spec << '|' << cfg.outcome_sq_spec << '|'
       << cfg.clip_g << '|' << cfg.derive_q2 << '|' << method_id(method) << '|'
       << estimand_id(estimand) << '|' << opt.alpha << '|' << opt.k << '|'
       << (opt.tilt == TmleTilt::weighted ? "w" : "c");
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(os.str())));
    return buf;
}

// Lazily shared nuisance fits across methods operating on one dataset.
struct SharedFits {
    Dataset scaled;
    ScalingParams sp;
    std::optional<NuisanceFit> full;
    bool full_failed = false;
    std::string full_error;

    const NuisanceFit& full_fit(const NuisanceConfig& cfg, std::uint64_t seed) {
        if (full_failed) throw NumericError(full_error);
        if (!full) {
            const auto idx = all_indices(scaled.n());
            try {
                full = fit_nuisances(scaled, cfg, idx, idx, derive_seed(seed, {0x66756c6cULL}));
            } catch (const Error& e) {
                full_failed = true;
                full_error = e.what();
                throw;
            }
        }
        return *full;
    }
};

ContrastReport contrast_from(const VarianceEstimate& v0, const VarianceEstimate& v1,
                             Estimand estimand, Method method, const SharedFits& sf,
                             const NuisanceConfig& cfg, const EstimateOptions& opt) {
    ContrastReport r;
    r.estimand = estimand;
    r.method = method;
    r.alpha = opt.alpha;
    r.seed = opt.seed;
    r.n = sf.scaled.n();
    r.k = is_cross_fit(method) ? opt.k : 0;
    r.scaling = sf.sp;
    r.arm0 = v0;
    r.arm1 = v1;
    r.config_fingerprint = fingerprint(cfg, method, estimand, opt);
    r.propensity_spec = cfg.propensity_spec;
    r.outcome_mean_spec = cfg.outcome_mean_spec;
    r.outcome_sq_spec = cfg.outcome_sq_spec;
    r.propensity_known = cfg.propensity_is_known();

    const double s1 = v1.value_scaled, s0 = v0.value_scaled;
    const double range = sf.sp.range();
    if (estimand == Estimand::psi) {
        r.null_value = 0.0;
        if (v1.negative_flagged || v0.negative_flagged) {
            std::string hint = method == Method::os || method == Method::cfos
                                   ? "; the TMLE respects the parameter bounds (--method tmle)"
                                   : "";
            throw DegenerateError("negative variance estimate for arm " +
                                  std::to_string(v1.negative_flagged ? 1 : 0) +
                                  "; cannot take a square root for the absolute contrast" + hint);
        }
        const auto e = eif_psi(v1.eif, v0.eif, s1, s0);
        r.estimate = range * (std::sqrt(s1) - std::sqrt(s0));
        r.se = eif_se(e, r.n) * range;
    } else {
        r.null_value = 1.0;
        const auto e = eif_lambda(v1.eif, v0.eif, s1, s0);
        r.estimate = s1 / s0;
        r.se = eif_se(e, r.n); // scale-free
    }
    const double z = normal_quantile(1.0 - opt.alpha / 2.0);
    r.ci_low = r.estimate - z * r.se;
    r.ci_high = r.estimate + z * r.se;
    if (r.se > 0.0) {
        r.p_value = two_sided_p((r.estimate - r.null_value) / r.se);
    } else {
        r.p_value = r.estimate == r.null_value ? 1.0 : 0.0;
    }
    return r;
}

ContrastReport build_report(SharedFits& sf, const NuisanceConfig& cfg, Method method,
                            Estimand estimand, const EstimateOptions& opt,
                            std::optional<std::pair<VarianceEstimate, VarianceEstimate>>& cf_os,
                            std::optional<std::pair<VarianceEstimate, VarianceEstimate>>& cf_tmle) {
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (is_cross_fit(method) && opt.k < 2)
        throw ConfigError("cross-fitted methods need k >= 2 folds");

    VarianceEstimate v0, v1;
    if (!is_cross_fit(method)) {
        const auto& nf = sf.full_fit(cfg, opt.seed);
        if (method == Method::os) {
            v0 = one_step_sigma2(sf.scaled, nf, 0, sf.sp);
            v1 = one_step_sigma2(sf.scaled, nf, 1, sf.sp);
        } else {
            v0 = tmle_sigma2(sf.scaled, nf, 0, sf.sp, opt.tilt);
            v1 = tmle_sigma2(sf.scaled, nf, 1, sf.sp, opt.tilt);
        }
    } else {
        auto& cache = method == Method::cfos ? cf_os : cf_tmle;
        if (!cache)
            cache = cross_fit(sf.scaled, cfg, opt.k, opt.seed, base_of(method), sf.sp, opt.tilt);
        v0 = cache->first;
        v1 = cache->second;
    }
    return contrast_from(v0, v1, estimand, method, sf, cfg, opt);
}

} // namespace

std::vector<MethodResult> run_methods(const Dataset& d, const NuisanceConfig& cfg,
                                      std::span<const Method> methods, Estimand estimand,
                                      const EstimateOptions& opt) {
    d.validate();
    cfg.validate();
    SharedFits sf;
    {
        auto [scaled, sp] = scale_outcome(d);
        sf.scaled = std::move(scaled);
        sf.sp = sp;
    }
    std::optional<std::pair<VarianceEstimate, VarianceEstimate>> cf_os, cf_tmle;
    std::vector<MethodResult> out;
    for (Method m : methods) {
        MethodResult res;
        res.method = m;
        try {
            res.report = build_report(sf, cfg, m, estimand, opt, cf_os, cf_tmle);
        } catch (const Error& e) {
            res.error = e.what();
            res.error_code = e.exit_code();
        } catch (const std::exception& e) {
            res.error = e.what();
            res.error_code = exit_numeric;
        }
        out.push_back(std::move(res));
    }
    return out;
}

ContrastReport estimate_contrast(const Dataset& d, const NuisanceConfig& cfg, Method method,
                                 Estimand estimand, const EstimateOptions& opt) {
    d.validate();
    cfg.validate();
    SharedFits sf;
    {
        auto [scaled, sp] = scale_outcome(d);
        sf.scaled = std::move(scaled);
        sf.sp = sp;
    }
    std::optional<std::pair<VarianceEstimate, VarianceEstimate>> cf_os, cf_tmle;
    return build_report(sf, cfg, method, estimand, opt, cf_os, cf_tmle);
}

// ---------------------------------------------------------------------------
// JSON report (schema diffvar-report/1).

namespace {

using nlohmann::json;

json arm_to_json(const VarianceEstimate& v) {
    return json{{"arm", v.arm},
                {"method", method_id(v.method)},
                {"value_scaled", v.value_scaled},
                {"value_original", v.value_original},
                {"se_original", v.se_original},
                {"negative_flagged", v.negative_flagged},
                {"eif", v.eif.values}};
}

VarianceEstimate arm_from_json(const json& j, EstimandTag) {
    VarianceEstimate v;
    v.arm = j.at("arm").get<int>();
    v.method = parse_method(j.at("method").get<std::string>());
    v.value_scaled = j.at("value_scaled").get<double>();
    v.value_original = j.at("value_original").get<double>();
    v.se_original = j.at("se_original").get<double>();
    v.negative_flagged = j.at("negative_flagged").get<bool>();
    v.eif.values = j.at("eif").get<std::vector<double>>();
    v.eif.tag = EstimandTag::sigma2;
    v.eif.arm = v.arm;
    return v;
}

} // namespace

std::string report_to_json(const ContrastReport& r) {
    json j{{"schema", "diffvar-report/1"},
           {"estimand", estimand_id(r.estimand)},
           {"method", method_id(r.method)},
           {"estimate", r.estimate},
           {"se", r.se},
           {"ci_low", r.ci_low},
           {"ci_high", r.ci_high},
           {"p_value", r.p_value},
           {"alpha", r.alpha},
           {"null_value", r.null_value},
           {"n", r.n},
           {"k", r.k},
           {"seed", r.seed},
           {"scaling", {{"y_min", r.scaling.y_min}, {"y_max", r.scaling.y_max}}},
           {"config_fingerprint", r.config_fingerprint},
           {"propensity", r.propensity_spec},
           {"propensity_known", r.propensity_known},
           {"outcome_mean", r.outcome_mean_spec},
           {"outcome_sq", r.outcome_sq_spec},
           {"arms", json::array({arm_to_json(r.arm0), arm_to_json(r.arm1)})}};
    return j.dump(2);
}

ContrastReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw SchemaError(std::string("cannot parse report JSON: ") + e.what());
    }
    if (j.value("schema", "") != "diffvar-report/1")
        throw SchemaError("unsupported report schema: " + j.value("schema", "<missing>"));
    ContrastReport r;
    r.estimand = parse_estimand(j.at("estimand").get<std::string>());
    r.method = parse_method(j.at("method").get<std::string>());
    r.estimate = j.at("estimate").get<double>();
    r.se = j.at("se").get<double>();
    r.ci_low = j.at("ci_low").get<double>();
    r.ci_high = j.at("ci_high").get<double>();
    r.p_value = j.at("p_value").get<double>();
    r.alpha = j.at("alpha").get<double>();
    r.null_value = j.at("null_value").get<double>();
    r.n = j.at("n").get<std::size_t>();
    r.k = j.at("k").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.scaling.y_min = j.at("scaling").at("y_min").get<double>();
    r.scaling.y_max = j.at("scaling").at("y_max").get<double>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.propensity_spec = j.at("propensity").get<std::string>();
    r.propensity_known = j.at("propensity_known").get<bool>();
    r.outcome_mean_spec = j.at("outcome_mean").get<std::string>();
    r.outcome_sq_spec = j.at("outcome_sq").get<std::string>();
    const auto& arms = j.at("arms");
    r.arm0 = arm_from_json(arms.at(0), EstimandTag::sigma2);
    r.arm1 = arm_from_json(arms.at(1), EstimandTag::sigma2);
    return r;
}

bool operator==(const ContrastReport& a, const ContrastReport& b) {
    const auto arm_eq = [](const VarianceEstimate& x, const VarianceEstimate& y) {
        return x.arm == y.arm && x.method == y.method && x.value_scaled == y.value_scaled &&
               x.value_original == y.value_original && x.se_original == y.se_original &&
               x.negative_flagged == y.negative_flagged && x.eif.values == y.eif.values;
    };
    return a.estimand == b.estimand && a.method == b.method && a.estimate == b.estimate &&
           a.se == b.se && a.ci_low == b.ci_low && a.ci_high == b.ci_high &&
           a.p_value == b.p_value && a.alpha == b.alpha && a.null_value == b.null_value &&
           a.n == b.n && a.k == b.k && a.seed == b.seed && a.scaling == b.scaling &&
           a.config_fingerprint == b.config_fingerprint &&
           a.propensity_spec == b.propensity_spec && a.propensity_known == b.propensity_known &&
           a.outcome_mean_spec == b.outcome_mean_spec && a.outcome_sq_spec == b.outcome_sq_spec &&
           arm_eq(a.arm0, b.arm0) && arm_eq(a.arm1, b.arm1);
}

// ---------------------------------------------------------------------------
// Result table.

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    while (s.size() < width) s += ' ';
    return s;
}

} // namespace

std::string render_table_row(const std::string& estimator, double estimate, double se,
                             double ci_low, double ci_high, double p_value) {
    const std::string ci = "(" + fmt_g(ci_low) + ", " + fmt_g(ci_high) + ")";
    return pad(estimator, 14) + pad(fmt_g(estimate), 10) + pad(fmt_g(se), 16) + pad(ci, 25) +
           fmt_g(p_value);
}

std::string render_table(const ContrastReport& r) {
    const int level = static_cast<int>(std::lround((1.0 - r.alpha) * 100));
    std::string header = pad("Estimator", 14) + pad("Estimate", 10) + pad("Standard Error", 16) +
                         pad(std::to_string(level) + "% Confidence Interval", 25) + "P-Value";
    return header + "\n" +
           render_table_row(method_label(r.method), r.estimate, r.se, r.ci_low, r.ci_high,
                            r.p_value) +
           "\n";
}

} // namespace diffvar
