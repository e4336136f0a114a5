// Acceptance suite: one deterministic pass/fail line per criterion.
//
//   diffvar_acceptance            runs every criterion
//   diffvar_acceptance 3 5 8      runs a subset
//
// Exit code is the number of failed criteria.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "diffvar/estimators.hpp"
#include "diffvar/rng.hpp"
#include "diffvar/simulation.hpp"
#include "diffvar/stats.hpp"

using namespace diffvar;

namespace {

constexpr std::uint64_t kSeed = 20240808;

int hw_threads() {
    const unsigned h = std::thread::hardware_concurrency();
    return h == 0 ? 1 : static_cast<int>(h);
}

struct Check {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& msg) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += (ok ? "" : "FAILED ") + msg;
    }
};

const SummaryRow& find_row(const StudyResult& res, const std::string& scenario, Method method,
                           int n) {
    for (const auto& row : res.summary)
        if (row.scenario == scenario && row.method == method && row.n == n) return row;
    throw std::runtime_error("summary row not found");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// --- Criterion 1: double robustness of the variance-ratio estimators ------

Check criterion_double_robustness() {
    RunConfig cfg;
    cfg.study = 1;
    cfg.estimators = {Method::os, Method::tmle};
    cfg.ns = {2000};
    cfg.reps = 200;
    cfg.seed = kSeed;
    cfg.threads = hw_threads();
    const StudyResult res = run_study(cfg);

    Check c;
    for (Method m : cfg.estimators) {
        for (const std::string& scenario : {"all_correct", "g_only", "q_only"}) {
            const auto& row = find_row(res, scenario, m, 2000);
            c.require(row.abs_bias <= 0.15, method_id(m) + " " + scenario + " bias " +
                                                fmt(row.abs_bias) + " <= 0.15");
        }
        const auto& none = find_row(res, "none", m, 2000);
        c.require(none.abs_bias >= 0.3,
                  method_id(m) + " none bias " + fmt(none.abs_bias) + " >= 0.3");
    }
    return c;
}

// --- Criteria 2 and 4: asymptotic linearity and type-I error --------------

const StudyResult& study2_run(const std::vector<int>& ns) {
    static std::map<std::string, StudyResult> cache;
    std::string key;
    for (int n : ns) key += std::to_string(n) + ",";
    auto it = cache.find(key);
    if (it == cache.end()) {
        RunConfig cfg;
        cfg.study = 2;
        cfg.estimators = {Method::cfos, Method::cftmle};
        cfg.ns = ns;
        cfg.reps = 200;
        cfg.seed = kSeed;
        cfg.k = 5;
        cfg.threads = hw_threads();
        it = cache.emplace(key, run_study(cfg)).first;
    }
    return it->second;
}

Check criterion_asymptotic_linearity() {
    const StudyResult& res = study2_run({500, 1000});
    Check c;
    for (Method m : {Method::cfos, Method::cftmle}) {
        const auto& at500 = find_row(res, "default", m, 500);
        const auto& at1000 = find_row(res, "default", m, 1000);
        c.require(at1000.coverage >= 0.91 && at1000.coverage <= 0.98,
                  method_id(m) + " coverage(1000) " + fmt(at1000.coverage) + " in [0.91,0.98]");
        // Monte Carlo standard error of each scaled-bias estimate, for
        // context: the biases being compared are of this same order.
        const auto mc_se = [](const SummaryRow& row) {
            const int ok = row.n_reps - row.n_failures;
            return std::sqrt(row.emp_variance / std::max(ok, 1)) * std::sqrt(double(row.n));
        };
        c.require(at1000.scaled_abs_bias <= 1.25 * at500.scaled_abs_bias,
                  method_id(m) + " sqrt(n)-bias " + fmt(at500.scaled_abs_bias) + " (mc se " +
                      fmt(mc_se(at500)) + ") -> " + fmt(at1000.scaled_abs_bias) + " (mc se " +
                      fmt(mc_se(at1000)) + ") nonincreasing (25% slack)");
    }
    return c;
}

Check criterion_type_i_error() {
    const StudyResult& res = study2_run({500, 1000});
    Check c;
    for (Method m : {Method::cfos, Method::cftmle}) {
        const auto& row = find_row(res, "default", m, 1000);
        c.require(row.power >= 0.015 && row.power <= 0.105,
                  method_id(m) + " rejection rate " + fmt(row.power) + " in [0.015,0.105]");
    }
    return c;
}

// --- Criterion 3: power under total mismeasurement -------------------------

Check criterion_power() {
    RunConfig cfg;
    cfg.study = 3;
    cfg.estimators = {Method::os, Method::tmle};
    cfg.ns = {250};
    cfg.reps = 200;
    cfg.m = 1.0;
    cfg.seed = kSeed;
    cfg.threads = hw_threads();
    const StudyResult res = run_study(cfg);
    Check c;
    for (Method m : cfg.estimators) {
        const auto& row = find_row(res, "default", m, 250);
        c.require(row.power >= 0.80, method_id(m) + " power " + fmt(row.power) + " >= 0.80");
    }
    return c;
}

// --- Criterion 5: solved influence equation after tilting -------------------

Check criterion_solved_score() {
    NuisanceConfig ncfg = make_nuisance_config("logit", "ols", "ols2");
    Check c;
    double worst = 0.0;
    for (std::uint64_t i = 1; i <= 100; ++i) {
        const Dataset d = draw({2, 200, 0.0, derive_seed(kSeed, {5, i})});
        const auto [scaled, sp] = scale_outcome(d);
        const auto idx = all_indices(scaled.n());
        const NuisanceFit nf = fit_nuisances(scaled, ncfg, idx, idx, i);
        for (int arm : {0, 1}) {
            const auto ve = tmle_sigma2(scaled, nf, arm, sp);
            worst = std::max(worst, std::fabs(mean(ve.eif.values)));
        }
    }
    c.require(worst <= 1e-6, "max |E_n[D]| after tilt " + fmt(worst) + " <= 1e-6 over 100 fits");
    return c;
}

// --- Criterion 6: brute-force oracle for the one-step display ---------------

Check criterion_oracle_equivalence() {
    Dataset d;
    d.w = Matrix(8, 0);
    d.a = {1, 1, 1, 1, 0, 0, 0, 0};
    d.y = {0.9, 0.5, 0.3, 0.7, 0.2, 0.4, 0.8, 0.1};

    NuisanceConfig cfg;
    cfg.propensity = KnownPropensity{0.5};
    cfg.propensity_spec = "known:0.5";
    cfg.outcome_mean = make_mean_learner();
    cfg.outcome_sq = make_mean_learner();
    cfg.outcome_mean_spec = cfg.outcome_sq_spec = "mean";

    const auto idx = all_indices(8);
    const NuisanceFit nf = fit_nuisances(d, cfg, idx, idx, 1);

    Check c;
    for (int arm : {0, 1}) {
        // Independent scalar evaluation with saturated nuisances.
        double q1 = 0.0, q2 = 0.0;
        std::size_t n_arm = 0;
        for (std::size_t i = 0; i < 8; ++i) {
            if (d.a[i] != arm) continue;
            q1 += d.y[i];
            q2 += d.y[i] * d.y[i];
            ++n_arm;
        }
        q1 /= static_cast<double>(n_arm);
        q2 /= static_cast<double>(n_arm);
        double mu = 0.0;
        for (std::size_t i = 0; i < 8; ++i)
            mu += (d.a[i] == arm ? (d.y[i] - q1) / 0.5 : 0.0) + q1;
        mu /= 8.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            const double h = d.a[i] == arm ? 2.0 : 0.0;
            acc += h * (d.y[i] * d.y[i] - q2 + 2.0 * mu * (q1 - d.y[i])) + q2 - 2.0 * q1 * mu;
        }
        const double oracle = acc / 8.0 + mu * mu;

        const auto ve = one_step_sigma2(d, nf, arm, {0.0, 1.0});
        c.require(std::fabs(ve.value_scaled - oracle) <= 1e-12,
                  "arm " + std::to_string(arm) + " |estimate - oracle| = " +
                      fmt(std::fabs(ve.value_scaled - oracle)) + " <= 1e-12");
    }
    return c;
}

// --- Criterion 7: affine equivariance ---------------------------------------

Check criterion_equivariance() {
    // Bounded covariates with moderate slopes keep every regression fit
    // strictly inside the clipped unit interval, where the learner algebra
    // is exactly affine-equivariant.
    Rng rng(derive_seed(kSeed, {7}));
    const std::size_t n = 150;
    Dataset base;
    base.w = Matrix(n, 2);
    base.a.resize(n);
    base.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        base.w(i, 0) = rng.uniform(-1.0, 1.0);
        base.w(i, 1) = rng.uniform(-1.0, 1.0);
        base.a[i] = rng.bernoulli(0.5);
        base.y[i] = rng.normal(1.0 + 0.4 * base.w(i, 0) + base.a[i], base.a[i] ? 1.6 : 1.0);
    }

    Check c;
    const std::pair<double, double> transforms[] = {{3.0, 7.0}, {-2.0, 0.0}, {0.1, -5.0}};
    for (const std::string& learner : {std::string("ols"), std::string("mean")}) {
        NuisanceConfig cfg = make_nuisance_config("known:0.5", learner, learner);
        EstimateOptions opt;
        opt.seed = 13;
        const auto ref_psi = estimate_contrast(base, cfg, Method::os, Estimand::psi, opt);
        const auto ref_lam = estimate_contrast(base, cfg, Method::os, Estimand::lambda, opt);
        const auto ref_psi_t = estimate_contrast(base, cfg, Method::tmle, Estimand::psi, opt);
        const auto ref_lam_t = estimate_contrast(base, cfg, Method::tmle, Estimand::lambda, opt);

        for (const auto& [scale, shift] : transforms) {
            Dataset moved = base;
            for (auto& y : moved.y) y = scale * y + shift;
            const std::string tag = learner + " y -> " + fmt(scale) + "y+" + fmt(shift);

            const auto psi = estimate_contrast(moved, cfg, Method::os, Estimand::psi, opt);
            const auto lam = estimate_contrast(moved, cfg, Method::os, Estimand::lambda, opt);
            c.require(std::fabs(psi.estimate - std::fabs(scale) * ref_psi.estimate) <=
                          1e-8 * std::fabs(ref_psi.estimate) * std::fabs(scale),
                      "os psi equivariant, " + tag);
            c.require(std::fabs(lam.estimate - ref_lam.estimate) <= 1e-8 * ref_lam.estimate,
                      "os lambda invariant, " + tag);

            // Positive rescalings leave the scaled outcomes untouched, so the
            // TMLE is exactly equivariant there as well.
            if (scale > 0) {
                const auto psi_t = estimate_contrast(moved, cfg, Method::tmle, Estimand::psi, opt);
                const auto lam_t =
                    estimate_contrast(moved, cfg, Method::tmle, Estimand::lambda, opt);
                c.require(std::fabs(psi_t.estimate - scale * ref_psi_t.estimate) <=
                              1e-8 * std::fabs(ref_psi_t.estimate) * scale,
                          "tmle psi equivariant, " + tag);
                c.require(std::fabs(lam_t.estimate - ref_lam_t.estimate) <= 1e-8 * ref_lam_t.estimate,
                          "tmle lambda invariant, " + tag);
            }
        }
    }
    return c;
}

// --- Criterion 8: EIF is mean-zero at the oracle ----------------------------

Check criterion_eif_mean_zero() {
    const std::size_t n = 5000;
    int good = 0;
    for (std::uint64_t s = 1; s <= 50; ++s) {
        Rng rng(derive_seed(kSeed, {8, s}));
        std::vector<double> y(n), g(n);
        std::vector<int> a(n);
        Matrix w(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            w(i, 0) = rng.normal();
            w(i, 1) = rng.normal();
            g[i] = expit((1.0 + w(i, 0) + w(i, 1)) / 4.0);
            a[i] = rng.bernoulli(g[i]);
            y[i] = 1.0 - 2.0 * a[i] + w(i, 0) * w(i, 0) + 2.0 * (w(i, 1) < 0 ? 1.0 : 0.0) +
                   rng.normal();
        }
        bool seed_ok = true;
        for (int arm : {0, 1}) {
            std::vector<double> h(n), q1(n), q2(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double qbar =
                    1.0 - 2.0 * arm + w(i, 0) * w(i, 0) + 2.0 * (w(i, 1) < 0 ? 1.0 : 0.0);
                q1[i] = qbar;
                q2[i] = qbar * qbar + 1.0;
                h[i] = a[i] == arm ? 1.0 / (arm == 1 ? g[i] : 1.0 - g[i]) : 0.0;
            }
            const double mu = 3.0 - 2.0 * arm;
            const auto e = eif_sigma2(y, h, q1, q2, mu, 4.0, arm);
            const double se = eif_se(e, n);
            seed_ok = seed_ok && std::fabs(mean(e.values)) <= 4.0 * se;
        }
        good += seed_ok ? 1 : 0;
    }
    Check c;
    c.require(good >= 45, "oracle-EIF mean within 4 SE of zero in " + std::to_string(good) +
                              "/50 seeds (need >= 45)");
    return c;
}

} // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        Check (*run)();
    };
    const Criterion all[] = {
        {1, "double robustness (study 1, n=2000)", criterion_double_robustness},
        {2, "asymptotic linearity (study 2, n in {500,1000})", criterion_asymptotic_linearity},
        {3, "power under total mismeasurement (study 3, m=1, n=250)", criterion_power},
        {4, "type-I error (study 2, n=1000)", criterion_type_i_error},
        {5, "TMLE solved influence equation", criterion_solved_score},
        {6, "one-step oracle equivalence", criterion_oracle_equivalence},
        {7, "affine equivariance suite", criterion_equivariance},
        {8, "oracle EIF mean-zero", criterion_eif_mean_zero},
    };

    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& criterion : all) {
        if (!wanted.empty() &&
            std::find(wanted.begin(), wanted.end(), criterion.id) == wanted.end())
            continue;
        Check c;
        try {
            c = criterion.run();
        } catch (const std::exception& e) {
            c.pass = false;
            c.detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %d [%s]: %s (%s)\n", criterion.id, criterion.name,
                    c.pass ? "PASS" : "FAIL", c.detail.c_str());
        std::fflush(stdout);
        failures += c.pass ? 0 : 1;
    }
    return failures;
}
