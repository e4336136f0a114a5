#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "diffvar/errors.hpp"
#include "diffvar/learners.hpp"
#include "diffvar/rng.hpp"
#include "diffvar/stats.hpp"

using namespace diffvar;

namespace {

Matrix column(const std::vector<double>& v) {
    Matrix m(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
    return m;
}

} // namespace

TEST_CASE("mean learner predicts the sample mean everywhere") {
    const auto learner = make_mean_learner();
    const Matrix x = column({10.0, 20.0, 30.0});
    auto model = learner->fit(x, std::vector<double>{1.0, 2.0, 3.0}, 0);
    for (double p : model->predict(x)) CHECK(p == doctest::Approx(2.0));

    model = learner->fit(column({0.0}), std::vector<double>{5.0}, 0);
    CHECK(model->predict(column({42.0}))[0] == doctest::Approx(5.0));

    model = learner->fit(column({0.0, 1.0}), std::vector<double>{0.2, 0.4}, 0);
    CHECK(model->predict(column({7.0}))[0] == doctest::Approx(0.3));

    CHECK_THROWS_AS(learner->fit(Matrix(0, 1), std::vector<double>{}, 0), ContractError);
}

TEST_CASE("ols degree 1 recovers an exact line") {
    const auto model =
        make_ols_learner(1)->fit(column({0.0, 1.0, 2.0}), std::vector<double>{1.0, 3.0, 5.0}, 0);
    CHECK(model->predict(column({3.0}))[0] == doctest::Approx(7.0).epsilon(1e-10));
}

TEST_CASE("ols degree 2 recovers an exact parabola") {
    const auto model =
        make_ols_learner(2)->fit(column({-1.0, 0.0, 1.0}), std::vector<double>{1.0, 0.0, 1.0}, 0);
    CHECK(model->predict(column({2.0}))[0] == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("ols fits a constant target exactly") {
    const auto model = make_ols_learner(1)->fit(column({1.0, 2.0, 5.0}),
                                                std::vector<double>{4.0, 4.0, 4.0}, 0);
    CHECK(model->predict(column({-3.0}))[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("ols degree 1 is affine-equivariant in the targets") {
    Rng rng(11);
    Matrix x(30, 2);
    std::vector<double> t(30), t2(30);
    for (std::size_t i = 0; i < 30; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.uniform(-2, 2);
        t[i] = 1.5 * x(i, 0) - x(i, 1) + rng.normal(0, 0.3);
        t2[i] = -2.5 * t[i] + 0.7;
    }
    const auto base = make_ols_learner(1)->fit(x, t, 0)->predict(x);
    const auto shifted = make_ols_learner(1)->fit(x, t2, 0)->predict(x);
    for (std::size_t i = 0; i < 30; ++i)
        CHECK(shifted[i] == doctest::Approx(-2.5 * base[i] + 0.7).epsilon(1e-9));
}

TEST_CASE("ols rejects more expanded columns than rows") {
    Matrix x(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        x(i, 0) = static_cast<double>(i);
        x(i, 1) = static_cast<double>(i * i);
    }
    // Degree-2 expansion has 6 columns for p=2.
    CHECK_THROWS_WITH_AS(make_ols_learner(2)->fit(x, std::vector<double>{1, 2, 3, 4}, 0),
                         doctest::Contains("rank"), NumericError);
}

TEST_CASE("logistic regression on a constant feature returns the sample proportion") {
    const Matrix x = column({1.0, 1.0, 1.0, 1.0});
    const auto model = make_logistic_learner(1)->fit(x, std::vector<double>{1, 0, 1, 0}, 0);
    for (double p : model->predict(x)) CHECK(p == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("logistic regression accepts fractional pseudo-outcomes") {
    const Matrix x = column({-1.0, 0.0, 1.0});
    const auto model =
        make_logistic_learner(1)->fit(x, std::vector<double>{0.5, 0.5, 0.5}, 0);
    for (double p : model->predict(x)) CHECK(p == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("perfectly separated data is flagged and predictions stay clipped") {
    // A small-scale feature forces the diverging MLE past the coefficient cap.
    const Matrix x = column({-0.2, -0.1, 0.1, 0.2});
    const auto model = make_logistic_learner(1)->fit(x, std::vector<double>{0, 0, 1, 1}, 0);
    CHECK(logistic_separation_flagged(*model));
    for (double p : model->predict(column({-50.0, 50.0}))) {
        CHECK(p >= kEpsP);
        CHECK(p <= 1.0 - kEpsP);
    }
}

TEST_CASE("forest fits a constant target exactly") {
    Rng rng(5);
    Matrix x(24, 2);
    for (auto& v : x.data) v = rng.normal();
    const std::vector<double> t(24, 0.37);
    const auto model = make_forest_learner({20, 4, 2, 0})->fit(x, t, 123);
    for (double p : model->predict(x)) CHECK(p == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("a single depth-1 tree recovers a binary step") {
    Matrix x(20, 1);
    std::vector<double> t(20);
    for (std::size_t i = 0; i < 20; ++i) {
        x(i, 0) = static_cast<double>(i % 2);
        t[i] = x(i, 0);
    }
    const auto model = make_forest_learner({1, 1, 1, 1})->fit(x, t, 7);
    CHECK(model->predict(column({0.0}))[0] == doctest::Approx(0.0));
    CHECK(model->predict(column({1.0}))[0] == doctest::Approx(1.0));
}

TEST_CASE("forest beats the mean learner on a step-function signal") {
    Rng rng(2024);
    const std::size_t n_train = 500, n_test = 200;
    Matrix xtr(n_train, 1), xte(n_test, 1);
    std::vector<double> ttr(n_train), tte(n_test);
    const auto gen = [&](Matrix& x, std::vector<double>& t, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            x(i, 0) = rng.normal();
            t[i] = (x(i, 0) < 0.0 ? 2.0 : 0.0) + rng.normal(0, 0.3);
        }
    };
    gen(xtr, ttr, n_train);
    gen(xte, tte, n_test);

    const auto forest = make_forest_learner({100, 8, 5, 0})->fit(xtr, ttr, 9);
    const auto fallback = make_mean_learner()->fit(xtr, ttr, 9);
    const auto mse = [&](const Model& m) {
        const auto p = m.predict(xte);
        double acc = 0.0;
        for (std::size_t i = 0; i < n_test; ++i) acc += (p[i] - tte[i]) * (p[i] - tte[i]);
        return acc / static_cast<double>(n_test);
    };
    CHECK(mse(*forest) < mse(*fallback));
}

TEST_CASE("forest fits are bit-reproducible for a fixed seed") {
    Rng rng(31);
    Matrix x(120, 3);
    std::vector<double> t(120);
    for (std::size_t i = 0; i < 120; ++i) {
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.normal();
        t[i] = x(i, 0) + rng.normal();
    }
    const auto a = make_forest_learner({50, 6, 3, 2})->fit(x, t, 77)->predict(x);
    const auto b = make_forest_learner({50, 6, 3, 2})->fit(x, t, 77)->predict(x);
    CHECK(a == b);
}

TEST_CASE("stacking with a single base learner gets weight one") {
    Rng rng(8);
    Matrix x(40, 1);
    std::vector<double> t(40);
    for (std::size_t i = 0; i < 40; ++i) {
        x(i, 0) = rng.normal();
        t[i] = 2.0 * x(i, 0) + rng.normal(0, 0.1);
    }
    const auto model = make_stacking_learner({make_ols_learner(1)}, 5)->fit(x, t, 3);
    const auto* info = stacking_info(*model);
    REQUIRE(info != nullptr);
    CHECK(info->weights == std::vector<double>{1.0});
    const auto direct = make_ols_learner(1)->fit(x, t, 3)->predict(x);
    const auto stacked = model->predict(x);
    for (std::size_t i = 0; i < 40; ++i)
        CHECK(stacked[i] == doctest::Approx(direct[i]).epsilon(1e-10));
}

TEST_CASE("stacking puts full weight on ols for exactly linear data") {
    Matrix x(25, 1);
    std::vector<double> t(25);
    for (std::size_t i = 0; i < 25; ++i) {
        x(i, 0) = static_cast<double>(i) / 5.0;
        t[i] = 2.0 + 3.0 * x(i, 0);
    }
    const auto model =
        make_stacking_learner({make_mean_learner(), make_ols_learner(1)}, 5)->fit(x, t, 4);
    const auto* info = stacking_info(*model);
    REQUIRE(info != nullptr);
    CHECK(info->weights[0] == doctest::Approx(0.0));
    CHECK(info->weights[1] == doctest::Approx(1.0));
}

TEST_CASE("stacked held-out error is near the best base learner on a quadratic signal") {
    Rng rng(606);
    const std::size_t n = 300, n_test = 150;
    Matrix xtr(n, 1), xte(n_test, 1);
    std::vector<double> ttr(n), tte(n_test);
    const auto gen = [&](Matrix& x, std::vector<double>& t, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            x(i, 0) = rng.uniform(-2, 2);
            t[i] = x(i, 0) * x(i, 0) + rng.normal(0, 0.2);
        }
    };
    gen(xtr, ttr, n);
    gen(xte, tte, n_test);

    std::vector<LearnerPtr> base = {make_mean_learner(), make_ols_learner(1),
                                    make_forest_learner({100, 8, 5, 0})};
    const auto mse = [&](const Model& m) {
        const auto p = m.predict(xte);
        double acc = 0.0;
        for (std::size_t i = 0; i < n_test; ++i) acc += (p[i] - tte[i]) * (p[i] - tte[i]);
        return acc / static_cast<double>(n_test);
    };
    double best_base = 1e300;
    for (const auto& b : base) best_base = std::min(best_base, mse(*b->fit(xtr, ttr, 10)));
    const auto stacked = make_stacking_learner(base, 5)->fit(xtr, ttr, 10);
    CHECK(mse(*stacked) <= 1.05 * best_base);
}

TEST_CASE("a failing base learner is dropped with a warning") {
    Matrix x(4, 2);
    std::vector<double> t{1, 2, 3, 4};
    for (std::size_t i = 0; i < 4; ++i) {
        x(i, 0) = static_cast<double>(i);
        x(i, 1) = static_cast<double>(i) * 2.0;
    }
    // ols2 needs 6 expanded columns; only 3 rows remain in each CV train split.
    const auto model =
        make_stacking_learner({make_ols_learner(2), make_mean_learner()}, 2)->fit(x, t, 5);
    const auto* info = stacking_info(*model);
    REQUIRE(info != nullptr);
    CHECK(info->weights[0] == 0.0);
    CHECK(info->weights[1] == doctest::Approx(1.0));
    REQUIRE(info->warnings.size() == 1);
    CHECK(info->warnings[0].find("ols2") != std::string::npos);

    CHECK_THROWS_AS(make_stacking_learner({make_ols_learner(2)}, 2)->fit(x, t, 5), NumericError);
}

TEST_CASE("offset-logistic tilt finds the closed-form root") {
    const std::vector<double> h{2.0, 2.0}, offset{0.0, 0.0}, targets{0.8, 0.8};
    const auto fit = fit_offset_logistic(h, offset, targets);
    CHECK(fit.converged);
    CHECK(fit.eta == doctest::Approx(logit(0.8) / 2.0).epsilon(1e-8));
    CHECK(std::fabs(2.0 * (0.8 - expit(2.0 * fit.eta)) + 2.0 * (0.8 - expit(2.0 * fit.eta))) <=
          kTiltScoreTol * 2.0);
}

TEST_CASE("offset-logistic tilt is zero when targets equal the offset probabilities") {
    const std::vector<double> h{1.0, 3.0, 0.5};
    const std::vector<double> offset{-0.3, 0.7, 1.2};
    std::vector<double> targets(3);
    for (std::size_t i = 0; i < 3; ++i) targets[i] = expit(offset[i]);
    const auto fit = fit_offset_logistic(h, offset, targets);
    CHECK(fit.converged);
    CHECK(fit.eta == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("offset-logistic tilt with h identically zero returns the canonical root") {
    const std::vector<double> h{0.0, 0.0, 0.0};
    const std::vector<double> offset{0.1, -0.5, 2.0};
    const std::vector<double> targets{0.2, 0.9, 0.4};
    const auto fit = fit_offset_logistic(h, offset, targets);
    CHECK(fit.converged);
    CHECK(fit.eta == 0.0);
}

TEST_CASE("offset-logistic score is solved to tolerance on random inputs") {
    Rng rng(55);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 10 + rng.index(60);
        std::vector<double> h(n), offset(n), targets(n);
        for (std::size_t i = 0; i < n; ++i) {
            h[i] = rng.bernoulli(0.5) ? rng.uniform(0.5, 4.0) : 0.0;
            offset[i] = rng.normal(0, 1.5);
            targets[i] = rng.uniform(0.05, 0.95);
        }
        const auto fit = fit_offset_logistic(h, offset, targets);
        REQUIRE(fit.converged);
        double score = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            score += h[i] * (targets[i] - expit(offset[i] + fit.eta * h[i]));
        CHECK(std::fabs(score) <= kTiltScoreTol * static_cast<double>(n));
    }
}

TEST_CASE("offset-logistic rejects non-finite offsets") {
    const std::vector<double> h{1.0};
    const std::vector<double> offset{std::numeric_limits<double>::infinity()};
    const std::vector<double> targets{0.5};
    CHECK_THROWS_AS(fit_offset_logistic(h, offset, targets), ContractError);
}

TEST_CASE("targets pinned at one are solved to tolerance at a finite tilt") {
    const std::vector<double> h{1.0, 1.0, 1.0};
    const std::vector<double> offset{0.0, 0.0, 0.0};
    const std::vector<double> targets{1.0, 1.0, 1.0};
    const auto fit = fit_offset_logistic(h, offset, targets);
    CHECK(fit.converged);
    CHECK(fit.eta <= kTiltEtaBound);
    double score = 0.0;
    for (std::size_t i = 0; i < 3; ++i) score += 1.0 - expit(fit.eta);
    CHECK(std::fabs(score) <= kTiltScoreTol * 3.0);
}

TEST_CASE("a root outside the bracket stops at the boundary without convergence") {
    // The score root sits near logit(0.2) - 38, outside [-20, 20]; the
    // flat-curvature start also exercises the bisection fallback.
    const std::vector<double> h{1.0, 1.0};
    const std::vector<double> offset{38.0, 38.0};
    const std::vector<double> targets{0.2, 0.2};
    const auto fit = fit_offset_logistic(h, offset, targets);
    CHECK_FALSE(fit.converged);
    CHECK(std::fabs(fit.eta) == doctest::Approx(kTiltEtaBound));
}

TEST_CASE("weighted tilt solves the weighted score") {
    Rng rng(77);
    const std::size_t n = 40;
    std::vector<double> h(n), offset(n), targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        h[i] = rng.bernoulli(0.5) ? rng.uniform(0.5, 3.0) : 0.0;
        offset[i] = rng.normal();
        targets[i] = rng.uniform(0.1, 0.9);
    }
    const auto fit = fit_offset_logistic_weighted(h, offset, targets);
    REQUIRE(fit.converged);
    double score = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        score += h[i] * (targets[i] - expit(offset[i] + fit.eta));
    CHECK(std::fabs(score) <= kTiltScoreTol * static_cast<double>(n));
}

TEST_CASE("parse_learner handles the spec grammar") {
    CHECK(parse_learner("mean")->name() == "mean");
    CHECK(parse_learner("ols2")->name() == "ols2");
    CHECK(parse_learner("logit2")->name() == "logit2");
    CHECK(parse_learner("forest(trees=10,depth=3,min_leaf=2,mtry=1)")->name() ==
          "forest(trees=10,depth=3,min_leaf=2,mtry=1)");
    CHECK(parse_learner("stack(mean,ols)")->name() == "stack(mean,ols)");
    CHECK(parse_learner("stack(ols2,forest(trees=5),cv=3)")->name().find("forest") !=
          std::string::npos);
    CHECK_THROWS_AS(parse_learner("splinez"), ConfigError);
    CHECK_THROWS_AS(parse_learner("forest(bogus=1)"), ConfigError);
}

TEST_CASE("column subset learner restricts the visible features") {
    Rng rng(12);
    Matrix x(50, 2);
    std::vector<double> t(50);
    for (std::size_t i = 0; i < 50; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        t[i] = 3.0 * x(i, 1);
    }
    const auto sub = make_column_subset_learner(make_ols_learner(1), {1})->fit(x, t, 0);
    Matrix probe(1, 2);
    probe(0, 0) = 100.0; // ignored column
    probe(0, 1) = 2.0;
    CHECK(sub->predict(probe)[0] == doctest::Approx(6.0).epsilon(1e-8));
}
