#include "diffvar/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>

#include "diffvar/errors.hpp"
#include "diffvar/rng.hpp"
#include "diffvar/stats.hpp"
#include "diffvar/svg.hpp"
#include "diffvar/threading.hpp"

namespace diffvar {

namespace {

Dataset draw_study1(const DgpSpec& spec) {
    Rng rng(derive_seed(spec.seed, {1}));
    Dataset d;
    d.w = Matrix(static_cast<std::size_t>(spec.n), 2);
    d.a.resize(static_cast<std::size_t>(spec.n));
    d.y.resize(static_cast<std::size_t>(spec.n));
    for (std::size_t i = 0; i < static_cast<std::size_t>(spec.n); ++i) {
        const double w1 = rng.bernoulli(0.3);
        const double w2 = rng.normal();
        const int a = rng.bernoulli(expit((1.0 + w1 + w2) / 4.0));
        const double mean = 1.0 + a + w1 + w2 + a * w2 + w1 * w2;
        const double sd = std::sqrt(1.0 + a); // conditional variance 1 + A
        d.w(i, 0) = w1;
        d.w(i, 1) = w2;
        d.a[i] = a;
        d.y[i] = rng.normal(mean, sd);
    }
    return d;
}

Dataset draw_study2(const DgpSpec& spec) {
    Rng rng(derive_seed(spec.seed, {2}));
    Dataset d;
    d.w = Matrix(static_cast<std::size_t>(spec.n), 2);
    d.a.resize(static_cast<std::size_t>(spec.n));
    d.y.resize(static_cast<std::size_t>(spec.n));
    for (std::size_t i = 0; i < static_cast<std::size_t>(spec.n); ++i) {
        const double w1 = rng.normal();
        const double w2 = rng.normal();
        const int a = rng.bernoulli(expit((1.0 + w1 + w2) / 4.0));
        const double mean = 1.0 - 2.0 * a + w1 * w1 + 2.0 * (w2 < 0.0 ? 1.0 : 0.0);
        d.w(i, 0) = w1;
        d.w(i, 1) = w2;
        d.a[i] = a;
        d.y[i] = rng.normal(mean, 1.0);
    }
    return d;
}

} // namespace

Dataset draw_study3(const DgpSpec& spec, Study3Latents* latents) {
    Rng rng(derive_seed(spec.seed, {3}));
    Dataset d;
    d.w = Matrix(static_cast<std::size_t>(spec.n), 3);
    d.a.resize(static_cast<std::size_t>(spec.n));
    d.y.resize(static_cast<std::size_t>(spec.n));
    if (latents) {
        latents->v.resize(static_cast<std::size_t>(spec.n));
        latents->u.resize(static_cast<std::size_t>(spec.n));
        latents->mflag.resize(static_cast<std::size_t>(spec.n));
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(spec.n); ++i) {
        const double w1 = rng.normal();
        const double w2 = rng.normal();
        const int v = rng.bernoulli(0.5);
        const int mflag = rng.bernoulli(spec.m);
        const int u = rng.bernoulli(0.2);
        const int v_obs = mflag ? u : v; // observed effect modifier
        const int a = rng.bernoulli(0.5);
        const double mean =
            1.0 - 2.0 * a + w1 * w1 + 2.0 * (w2 < 0.0 ? 1.0 : 0.0) + 4.0 * a * v;
        d.w(i, 0) = w1;
        d.w(i, 1) = w2;
        d.w(i, 2) = v_obs;
        d.a[i] = a;
        d.y[i] = rng.normal(mean, 1.0);
        if (latents) {
            latents->v[i] = v;
            latents->u[i] = u;
            latents->mflag[i] = mflag;
        }
    }
    return d;
}

Dataset draw(const DgpSpec& spec) {
    if (spec.n < 1) throw ConfigError("dgp n must be positive");
    if (!(spec.m >= 0.0 && spec.m <= 1.0)) throw ConfigError("dgp m must lie in [0, 1]");
    switch (spec.study) {
        case 1: return draw_study1(spec);
        case 2: return draw_study2(spec);
        case 3: return draw_study3(spec, nullptr);
        default: throw ConfigError("unknown study " + std::to_string(spec.study));
    }
}

namespace {

// Potential-outcome variances of the study-3 DGP by Monte Carlo; the
// mismeasurement probability affects only the observed data, not the truth.
TruthValues study3_truth_mc() {
    constexpr std::size_t n_oracle = 10'000'000;
    constexpr std::uint64_t oracle_seed = 0xD1FF0A12ULL; // fixed oracle stream
    Rng rng(derive_seed(oracle_seed, {3, 0x7472757468ULL}));
    double s0 = 0.0, ss0 = 0.0, s1 = 0.0, ss1 = 0.0;
    for (std::size_t i = 0; i < n_oracle; ++i) {
        const double w1 = rng.normal();
        const double w2 = rng.normal();
        const int v = rng.bernoulli(0.5);
        const double base = w1 * w1 + 2.0 * (w2 < 0.0 ? 1.0 : 0.0);
        const double y0 = 1.0 + base + rng.normal();
        const double y1 = -1.0 + base + 4.0 * v + rng.normal();
        s0 += y0;
        ss0 += y0 * y0;
        s1 += y1;
        ss1 += y1 * y1;
    }
    const double n = static_cast<double>(n_oracle);
    const double var0 = ss0 / n - (s0 / n) * (s0 / n);
    const double var1 = ss1 / n - (s1 / n) * (s1 / n);
    TruthValues tv;
    tv.lambda0 = var1 / var0;
    tv.psi0 = std::sqrt(var1) - std::sqrt(var0);
    tv.source = "monte_carlo(10000000,fixed)";
    return tv;
}

} // namespace

TruthValues truth(const DgpSpec& spec) {
    switch (spec.study) {
        case 1: {
            // Var(Y^(1)) = 0.21 + E[(2+W1)^2] + 2 = 7.71,
            // Var(Y^(0)) = 0.21 + E[(1+W1)^2] + 1 = 3.11 with W1 ~ Bern(0.3).
            const double var1 = 7.71, var0 = 3.11;
            return {var1 / var0, std::sqrt(var1) - std::sqrt(var0), "closed_form"};
        }
        case 2:
            // Var(W1^2) + 4 Var(I(W2<0)) + 1 = 4 in both arms.
            return {1.0, 0.0, "closed_form"};
        case 3: {
            static TruthValues cached;
            static std::once_flag once;
            std::call_once(once, [] { cached = study3_truth_mc(); });
            return cached;
        }
        default: throw ConfigError("unknown study " + std::to_string(spec.study));
    }
}

std::vector<std::string> study_scenarios(int study) {
    switch (study) {
        case 1: return {"all_correct", "g_only", "q_only", "none"};
        case 2:
        case 3: return {"default"};
        default: throw ConfigError("unknown study " + std::to_string(study));
    }
}

Estimand study_estimand(int study) {
    if (study == 1) return Estimand::lambda;
    if (study == 2 || study == 3) return Estimand::psi;
    throw ConfigError("unknown study " + std::to_string(study));
}

NuisanceConfig scenario_config(int study, const std::string& scenario) {
    NuisanceConfig cfg;
    const auto forest = make_forest_learner({});
    if (study == 1) {
        const bool g_ok = scenario == "all_correct" || scenario == "g_only";
        const bool q_ok = scenario == "all_correct" || scenario == "q_only";
        if (!g_ok && !q_ok && scenario != "none")
            throw ConfigError("unknown study-1 scenario '" + scenario + "'");
        if (g_ok) {
            cfg.propensity = make_logistic_learner(1);
            cfg.propensity_spec = "logit";
        } else {
            // Misspecified propensity: conditions on the second covariate only.
            cfg.propensity = make_column_subset_learner(make_logistic_learner(1), {1});
            cfg.propensity_spec = "logit[w2]";
        }
        if (q_ok) {
            cfg.outcome_mean = forest;
            cfg.outcome_sq = forest;
            cfg.outcome_mean_spec = cfg.outcome_sq_spec = "forest";
        } else {
            cfg.outcome_mean = make_mean_learner();
            cfg.outcome_sq = make_mean_learner();
            cfg.outcome_mean_spec = cfg.outcome_sq_spec = "mean";
        }
        return cfg;
    }
    if (study == 2) {
        if (scenario != "default") throw ConfigError("unknown study-2 scenario '" + scenario + "'");
        cfg.propensity = make_stacking_learner(
            {make_logistic_learner(1), make_logistic_learner(2), forest});
        cfg.propensity_spec = "stack(logit,logit2,forest)";
        cfg.outcome_mean =
            make_stacking_learner({make_ols_learner(1), make_ols_learner(2), forest});
        cfg.outcome_mean_spec = "stack(ols,ols2,forest)";
        cfg.outcome_sq = make_stacking_learner({make_ols_learner(2), forest});
        cfg.outcome_sq_spec = "stack(ols2,forest)";
        return cfg;
    }
    if (study == 3) {
        if (scenario != "default") throw ConfigError("unknown study-3 scenario '" + scenario + "'");
        cfg.propensity = KnownPropensity{0.5};
        cfg.propensity_spec = "known:0.5";
        cfg.outcome_mean = make_ols_learner(1);
        cfg.outcome_sq = make_ols_learner(1);
        cfg.outcome_mean_spec = cfg.outcome_sq_spec = "ols";
        return cfg;
    }
    throw ConfigError("unknown study " + std::to_string(study));
}

StudyResult run_study(const RunConfig& cfg) {
    if (cfg.reps < 1) throw ConfigError("reps must be at least 1");
    if (cfg.estimators.empty()) throw ConfigError("no estimators requested");
    const auto known = study_scenarios(cfg.study);
    std::vector<std::string> scenarios = cfg.scenarios.empty() ? known : cfg.scenarios;
    for (const auto& s : scenarios)
        if (std::find(known.begin(), known.end(), s) == known.end())
            throw ConfigError("unknown scenario '" + s + "' for study " +
                              std::to_string(cfg.study));

    const Estimand estimand = study_estimand(cfg.study);
    const TruthValues tv = truth({cfg.study, 1, cfg.m, 0});
    const double target = estimand == Estimand::lambda ? tv.lambda0 : tv.psi0;

    StudyResult result;
    for (std::size_t si = 0; si < scenarios.size(); ++si) {
        const NuisanceConfig ncfg = scenario_config(cfg.study, scenarios[si]);
        for (int n : cfg.ns) {
            std::vector<std::vector<MethodResult>> reps(static_cast<std::size_t>(cfg.reps));
            parallel_for(0, cfg.reps, cfg.threads, [&](int rep) {
                DgpSpec spec;
                spec.study = cfg.study;
                spec.n = n;
                spec.m = cfg.m;
                // Scenarios share datasets; only estimation streams differ.
                spec.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(cfg.study),
                                                   static_cast<std::uint64_t>(n),
                                                   static_cast<std::uint64_t>(rep), 0xdULL});
                EstimateOptions opt;
                opt.alpha = cfg.alpha;
                opt.k = cfg.k;
                opt.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(cfg.study), si,
                                                  static_cast<std::uint64_t>(n),
                                                  static_cast<std::uint64_t>(rep), 0xeULL});
                try {
                    const Dataset d = draw(spec);
                    reps[static_cast<std::size_t>(rep)] =
                        run_methods(d, ncfg, cfg.estimators, estimand, opt);
                } catch (const std::exception& e) {
                    // Draw-level failure: report it against every estimator.
                    std::vector<MethodResult> fail;
                    for (Method m : cfg.estimators)
                        fail.push_back({m, std::nullopt, e.what(), exit_numeric});
                    reps[static_cast<std::size_t>(rep)] = std::move(fail);
                }
            });

            for (std::size_t mi = 0; mi < cfg.estimators.size(); ++mi) {
                const Method method = cfg.estimators[mi];
                std::vector<double> estimates;
                int covered = 0, rejected = 0, failures = 0;
                for (int rep = 0; rep < cfg.reps; ++rep) {
                    const auto& mr = reps[static_cast<std::size_t>(rep)][mi];
                    RawRow row;
                    row.study = cfg.study;
                    row.scenario = scenarios[si];
                    row.method = method;
                    row.n = n;
                    row.rep = rep;
                    row.truth = target;
                    if (mr.report) {
                        const auto& r = *mr.report;
                        row.estimate = r.estimate;
                        row.se = r.se;
                        row.ci_low = r.ci_low;
                        row.ci_high = r.ci_high;
                        row.p_value = r.p_value;
                        row.covered = r.ci_low <= target && target <= r.ci_high;
                        estimates.push_back(r.estimate);
                        covered += row.covered ? 1 : 0;
                        rejected += r.p_value < cfg.alpha ? 1 : 0;
                    } else {
                        row.failed = true;
                        row.error = mr.error;
                        ++failures;
                    }
                    result.raw.push_back(std::move(row));
                }
                SummaryRow s;
                s.study = cfg.study;
                s.scenario = scenarios[si];
                s.method = method;
                s.n = n;
                s.truth = target;
                s.n_reps = cfg.reps;
                s.n_failures = failures;
                const int ok = cfg.reps - failures;
                if (ok > 0) {
                    s.abs_bias = std::fabs(mean(estimates) - target);
                    s.emp_variance = sample_variance(estimates);
                    s.scaled_abs_bias = std::sqrt(static_cast<double>(n)) * s.abs_bias;
                    s.coverage = static_cast<double>(covered) / ok;
                    s.power = static_cast<double>(rejected) / ok;
                }
                result.summary.push_back(std::move(s));
            }
        }
    }
    return result;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "study,scenario,estimator,n,truth,abs_bias,emp_variance,scaled_abs_bias,coverage,"
           "power,n_reps,n_failures\n";
    for (const auto& r : rows)
        out << r.study << ',' << csv_quote(r.scenario) << ',' << method_id(r.method) << ',' << r.n
            << ',' << fmt(r.truth) << ',' << fmt(r.abs_bias) << ',' << fmt(r.emp_variance) << ','
            << fmt(r.scaled_abs_bias) << ',' << fmt(r.coverage) << ',' << fmt(r.power) << ','
            << r.n_reps << ',' << r.n_failures << '\n';
}

void write_raw_csv(const std::string& path, const std::vector<RawRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "study,scenario,estimator,n,rep,failed,estimate,se,ci_low,ci_high,p_value,truth,"
           "covered,error\n";
    for (const auto& r : rows) {
        out << r.study << ',' << csv_quote(r.scenario) << ',' << method_id(r.method) << ',' << r.n
            << ',' << r.rep << ',' << (r.failed ? 1 : 0) << ',';
        if (r.failed)
            out << "nan,nan,nan,nan,nan";
        else
            out << fmt(r.estimate) << ',' << fmt(r.se) << ',' << fmt(r.ci_low) << ','
                << fmt(r.ci_high) << ',' << fmt(r.p_value);
        out << ',' << fmt(r.truth) << ',' << (r.covered ? 1 : 0) << ',' << csv_quote(r.error)
            << '\n';
    }
}

void write_plots(const std::string& dir, const StudyResult& result) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::vector<std::string> scenarios;
    for (const auto& row : result.summary)
        if (std::find(scenarios.begin(), scenarios.end(), row.scenario) == scenarios.end())
            scenarios.push_back(row.scenario);

    struct MetricDef {
        const char* name;
        double reference;
        double SummaryRow::* field;
    };
    const MetricDef metrics[] = {{"bias", 0.0, &SummaryRow::abs_bias},
                                 {"variance", 0.0, &SummaryRow::emp_variance},
                                 {"scaled_bias", 0.0, &SummaryRow::scaled_abs_bias},
                                 {"coverage", 0.95, &SummaryRow::coverage},
                                 {"power", 1.0, &SummaryRow::power}};

    for (const auto& scenario : scenarios) {
        for (const auto& metric : metrics) {
            std::vector<SvgSeries> series;
            for (const auto& row : result.summary) {
                if (row.scenario != scenario) continue;
                const std::string label = method_label(row.method);
                auto it = std::find_if(series.begin(), series.end(),
                                       [&](const SvgSeries& s) { return s.name == label; });
                if (it == series.end()) {
                    series.push_back({label, {}, {}});
                    it = series.end() - 1;
                }
                it->x.push_back(row.n);
                it->y.push_back(row.*metric.field);
            }
            if (series.empty()) continue;
            const std::string title = std::string(metric.name) + " (" + scenario + ")";
            const std::string svg =
                svg_line_chart(title, "n", metric.name, series, metric.reference);
            const std::string fname = scenarios.size() > 1
                                          ? std::string(metric.name) + "_" + scenario + ".svg"
                                          : std::string(metric.name) + ".svg";
            std::ofstream out(fs::path(dir) / fname);
            out << svg;
        }
    }
}

} // namespace diffvar
