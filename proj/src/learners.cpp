#include "diffvar/learners.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "diffvar/errors.hpp"
#include "diffvar/rng.hpp"
#include "diffvar/stats.hpp"

namespace diffvar {

namespace {

constexpr double kRidgeScale = 1e-8;
constexpr int kIrlsMaxIter = 100;
constexpr double kIrlsDevTol = 1e-10;
constexpr double kCoefCap = 30.0;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Intercept + main terms; degree 2 adds all squares and pairwise products.
Mat build_design(const Matrix& x, int degree) {
    const auto n = static_cast<Eigen::Index>(x.rows);
    const auto p = static_cast<Eigen::Index>(x.cols);
    Eigen::Index q = 1 + p;
    if (degree == 2) q += p * (p + 1) / 2;
    Mat d(n, q);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i, 0) = 1.0;
        for (Eigen::Index j = 0; j < p; ++j) d(i, 1 + j) = x(i, j);
        if (degree == 2) {
            Eigen::Index c = 1 + p;
            for (Eigen::Index j = 0; j < p; ++j)
                for (Eigen::Index l = j; l < p; ++l) d(i, c++) = x(i, j) * x(i, l);
        }
    }
    return d;
}

// Solves A beta = b with a trace-scaled ridge when A is numerically
// rank-deficient.
Vec solve_spd(Mat a, const Vec& b) {
    Eigen::LDLT<Mat> ldlt(a);
    bool degenerate = ldlt.info() != Eigen::Success;
    if (!degenerate) {
        const Vec d = ldlt.vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        degenerate = dmax <= 0.0 || d.minCoeff() < 1e-12 * dmax;
    }
    if (degenerate) {
        const double ridge =
            kRidgeScale * std::max(a.trace() / static_cast<double>(a.cols()), 1e-12);
        a.diagonal().array() += ridge;
        ldlt.compute(a);
        if (ldlt.info() != Eigen::Success)
            throw NumericError("normal equations not solvable even with ridge guard");
    }
    return ldlt.solve(b);
}

class MeanModel final : public Model {
  public:
    explicit MeanModel(double m) : mean_(m) {}
    std::vector<double> predict(const Matrix& x) const override {
        return std::vector<double>(x.rows, mean_);
    }

  private:
    double mean_;
};

class MeanLearner final : public Learner {
  public:
    ModelPtr fit(const Matrix&, std::span<const double> t, std::uint64_t) const override {
        if (t.empty()) throw ContractError("mean learner needs a nonempty target vector");
        return std::make_shared<MeanModel>(mean(t));
    }
    std::string name() const override { return "mean"; }
};

class LinearModel final : public Model {
  public:
    LinearModel(Vec beta, int degree) : beta_(std::move(beta)), degree_(degree) {}
    std::vector<double> predict(const Matrix& x) const override {
        const Mat d = build_design(x, degree_);
        if (d.cols() != beta_.size()) throw ContractError("feature count changed since fit");
        const Vec p = d * beta_;
        return {p.data(), p.data() + p.size()};
    }

  private:
    Vec beta_;
    int degree_;
};

class OlsLearner final : public Learner {
  public:
    explicit OlsLearner(int degree) : degree_(degree) {}
    ModelPtr fit(const Matrix& x, std::span<const double> t, std::uint64_t) const override {
        if (t.size() != x.rows) throw ContractError("target length != feature rows");
        const Mat d = build_design(x, degree_);
        if (d.rows() < d.cols())
            throw NumericError("rank error: " + std::to_string(d.rows()) + " rows for " +
                               std::to_string(d.cols()) + " expanded columns");
        const Eigen::Map<const Vec> tv(t.data(), static_cast<Eigen::Index>(t.size()));
        const Vec beta = solve_spd(d.transpose() * d, d.transpose() * tv);
        return std::make_shared<LinearModel>(beta, degree_);
    }
    std::string name() const override { return degree_ == 2 ? "ols2" : "ols"; }

  private:
    int degree_;
};

class LogisticModel final : public Model {
  public:
    LogisticModel(Vec beta, int degree, bool flagged)
        : beta_(std::move(beta)), degree_(degree), flagged_(flagged) {}
    std::vector<double> predict(const Matrix& x) const override {
        const Mat d = build_design(x, degree_);
        if (d.cols() != beta_.size()) throw ContractError("feature count changed since fit");
        std::vector<double> out(x.rows);
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            out[static_cast<std::size_t>(i)] = clip(expit(d.row(i).dot(beta_)), kEpsP, 1.0 - kEpsP);
        return out;
    }
    bool flagged() const { return flagged_; }

  private:
    Vec beta_;
    int degree_;
    bool flagged_;
};

double binomial_deviance(const Vec& eta, const Vec& t) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double p = clip(expit(eta(i)), 1e-12, 1.0 - 1e-12);
        dev -= 2.0 * (t(i) * std::log(p) + (1.0 - t(i)) * std::log(1.0 - p));
    }
    return dev;
}

class LogisticLearner final : public Learner {
  public:
    explicit LogisticLearner(int degree) : degree_(degree) {}
    ModelPtr fit(const Matrix& x, std::span<const double> t, std::uint64_t) const override {
        if (t.size() != x.rows) throw ContractError("target length != feature rows");
        for (double ti : t)
            if (!(ti >= 0.0 && ti <= 1.0))
                throw ContractError("logistic targets must lie in [0, 1]");
        const Mat d = build_design(x, degree_);
        if (d.rows() < d.cols())
            throw NumericError("rank error: " + std::to_string(d.rows()) + " rows for " +
                               std::to_string(d.cols()) + " expanded columns");
        const Eigen::Map<const Vec> tv(t.data(), static_cast<Eigen::Index>(t.size()));

        Vec beta = Vec::Zero(d.cols());
        Vec eta = Vec::Zero(d.rows());
        double dev = binomial_deviance(eta, tv);
        bool flagged = false;
        for (int iter = 0; iter < kIrlsMaxIter; ++iter) {
            Vec wdiag(d.rows()), z(d.rows());
            for (Eigen::Index i = 0; i < d.rows(); ++i) {
                const double p = expit(eta(i));
                const double wi = std::max(p * (1.0 - p), 1e-10);
                wdiag(i) = wi;
                z(i) = eta(i) + (tv(i) - p) / wi;
            }
            const Mat dw = d.transpose() * wdiag.asDiagonal();
            beta = solve_spd(dw * d, dw * z);
            if (beta.cwiseAbs().maxCoeff() > kCoefCap) {
                // Separation guard: bounded logits keep downstream terms finite.
                flagged = true;
                for (Eigen::Index j = 0; j < beta.size(); ++j)
                    beta(j) = clip(beta(j), -kCoefCap, kCoefCap);
                break;
            }
            eta = d * beta;
            const double new_dev = binomial_deviance(eta, tv);
            const bool done = std::fabs(new_dev - dev) < kIrlsDevTol;
            dev = new_dev;
            if (done) break;
        }
        return std::make_shared<LogisticModel>(beta, degree_, flagged);
    }
    std::string name() const override { return degree_ == 2 ? "logit2" : "logit"; }

  private:
    int degree_;
};

// ---------------------------------------------------------------------------
// Random forest: bagged CART regression trees, variance-reduction splits.

struct TreeNode {
    int feature = -1; // -1 = leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict_row(std::span<const double> x) const {
        int id = 0;
        while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
            const auto& nd = nodes[static_cast<std::size_t>(id)];
            id = x[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(id)].value;
    }
};

class TreeBuilder {
  public:
    TreeBuilder(const Matrix& x, std::span<const double> t, const ForestParams& p, Rng& rng)
        : x_(x), t_(t), params_(p), rng_(rng) {
        features_.resize(x.cols);
        std::iota(features_.begin(), features_.end(), 0u);
        scratch_.resize(x.rows);
    }

    Tree build() {
        const std::size_t n = x_.rows;
        idx_.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx_[i] = rng_.index(n); // bootstrap
        Tree tree;
        grow(tree, 0, n, 0);
        return tree;
    }

  private:
    struct Sums {
        double s = 0.0, ss = 0.0;
    };

    Sums node_sums(std::size_t begin, std::size_t end) const {
        Sums acc;
        for (std::size_t i = begin; i < end; ++i) {
            const double v = t_[idx_[i]];
            acc.s += v;
            acc.ss += v * v;
        }
        return acc;
    }

    int grow(Tree& tree, std::size_t begin, std::size_t end, int depth) {
        const auto count = static_cast<double>(end - begin);
        const Sums acc = node_sums(begin, end);
        const double sse = acc.ss - acc.s * acc.s / count;
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({-1, 0.0, -1, -1, acc.s / count});
        if (depth >= params_.max_depth || end - begin < 2 * static_cast<std::size_t>(params_.min_leaf) ||
            sse <= 1e-12)
            return id;

        const std::size_t mtry = effective_mtry();
        double best_gain = 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;
        // Partial Fisher-Yates over the feature list.
        for (std::size_t m = 0; m < mtry; ++m) {
            std::swap(features_[m], features_[m + rng_.index(features_.size() - m)]);
            const std::size_t f = features_[m];
            if (end - begin <= 64)
                scan_sorted(f, begin, end, acc, sse, best_gain, best_feature, best_threshold);
            else
                scan_bucketed(f, begin, end, acc, sse, best_gain, best_feature, best_threshold);
        }
        if (best_feature < 0) return id;

        const auto mid_it =
            std::partition(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                           idx_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t i) {
                               return x_(i, static_cast<std::size_t>(best_feature)) <
                                      best_threshold;
                           });
        const auto mid = static_cast<std::size_t>(mid_it - idx_.begin());
        tree.nodes[static_cast<std::size_t>(id)].feature = best_feature;
        tree.nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
        const int left = grow(tree, begin, mid, depth + 1);
        const int right = grow(tree, mid, end, depth + 1);
        tree.nodes[static_cast<std::size_t>(id)].left = left;
        tree.nodes[static_cast<std::size_t>(id)].right = right;
        return id;
    }

    // Exact split search over a sorted copy of the node rows.
    void scan_sorted(std::size_t f, std::size_t begin, std::size_t end, const Sums& acc,
                     double sse, double& best_gain, int& best_feature, double& best_threshold) {
        auto* pairs = scratch_.data();
        std::size_t cnt = 0;
        for (std::size_t i = begin; i < end; ++i)
            pairs[cnt++] = {x_(idx_[i], f), t_[idx_[i]]};
        std::sort(pairs, pairs + cnt,
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        double ls = 0.0, lss = 0.0;
        for (std::size_t s = 1; s < cnt; ++s) {
            const double v = pairs[s - 1].second;
            ls += v;
            lss += v * v;
            if (pairs[s - 1].first == pairs[s].first) continue;
            if (s < static_cast<std::size_t>(params_.min_leaf) ||
                cnt - s < static_cast<std::size_t>(params_.min_leaf))
                continue;
            const double rs = acc.s - ls, rss = acc.ss - lss;
            const double lsse = lss - ls * ls / static_cast<double>(s);
            const double rsse = rss - rs * rs / static_cast<double>(cnt - s);
            const double gain = sse - lsse - rsse;
            if (gain > best_gain) {
                best_gain = gain;
                best_feature = static_cast<int>(f);
                best_threshold = 0.5 * (pairs[s - 1].first + pairs[s].first);
            }
        }
    }

    // Large nodes: cumulative statistics over value buckets; candidate
    // thresholds are bucket edges. Counts and sums stay exact, only the
    // threshold grid is coarsened.
    void scan_bucketed(std::size_t f, std::size_t begin, std::size_t end, const Sums& acc,
                       double sse, double& best_gain, int& best_feature, double& best_threshold) {
        constexpr std::size_t kBuckets = 32;
        double lo = x_(idx_[begin], f), hi = lo;
        for (std::size_t i = begin + 1; i < end; ++i) {
            const double v = x_(idx_[i], f);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi <= lo) return;
        const double width = (hi - lo) / static_cast<double>(kBuckets);
        double bsum[kBuckets] = {0}, bss[kBuckets] = {0};
        std::size_t bcount[kBuckets] = {0};
        for (std::size_t i = begin; i < end; ++i) {
            const double v = x_(idx_[i], f);
            auto b = static_cast<std::size_t>((v - lo) / width);
            if (b >= kBuckets) b = kBuckets - 1;
            const double ti = t_[idx_[i]];
            bsum[b] += ti;
            bss[b] += ti * ti;
            ++bcount[b];
        }
        const auto cnt = end - begin;
        double ls = 0.0, lss = 0.0;
        std::size_t lc = 0;
        for (std::size_t b = 0; b + 1 < kBuckets; ++b) {
            ls += bsum[b];
            lss += bss[b];
            lc += bcount[b];
            if (bcount[b] == 0) continue; // same split as the previous edge
            if (lc < static_cast<std::size_t>(params_.min_leaf) ||
                cnt - lc < static_cast<std::size_t>(params_.min_leaf))
                continue;
            const double rs = acc.s - ls, rss = acc.ss - lss;
            const double lsse = lss - ls * ls / static_cast<double>(lc);
            const double rsse = rss - rs * rs / static_cast<double>(cnt - lc);
            const double gain = sse - lsse - rsse;
            if (gain > best_gain) {
                best_gain = gain;
                best_feature = static_cast<int>(f);
                best_threshold = lo + width * static_cast<double>(b + 1);
            }
        }
    }

    std::size_t effective_mtry() const {
        if (params_.mtry > 0) return std::min<std::size_t>(x_.cols, params_.mtry);
        return std::max<std::size_t>(1, (x_.cols + 2) / 3); // ceil(p/3)
    }

    const Matrix& x_;
    std::span<const double> t_;
    const ForestParams& params_;
    Rng& rng_;
    std::vector<std::size_t> idx_;
    std::vector<std::size_t> features_;
    std::vector<std::pair<double, double>> scratch_;
};

class ForestModel final : public Model {
  public:
    explicit ForestModel(std::vector<Tree> trees) : trees_(std::move(trees)) {}
    std::vector<double> predict(const Matrix& x) const override {
        std::vector<double> out(x.rows, 0.0);
        for (const auto& tree : trees_)
            for (std::size_t i = 0; i < x.rows; ++i) out[i] += tree.predict_row(x.row(i));
        const double inv = 1.0 / static_cast<double>(trees_.size());
        for (auto& v : out) v *= inv;
        return out;
    }

  private:
    std::vector<Tree> trees_;
};

class ForestLearner final : public Learner {
  public:
    explicit ForestLearner(ForestParams p) : params_(p) {}
    ModelPtr fit(const Matrix& x, std::span<const double> t, std::uint64_t seed) const override {
        if (t.size() != x.rows) throw ContractError("target length != feature rows");
        if (x.cols == 0) throw ContractError("forest learner needs at least one feature");
        if (x.rows < 2 * static_cast<std::size_t>(params_.min_leaf))
            throw ContractError("forest needs n >= 2 * min_leaf");
        std::vector<Tree> trees;
        trees.reserve(static_cast<std::size_t>(params_.trees));
        for (int b = 0; b < params_.trees; ++b) {
            Rng rng(derive_seed(seed, {0x74726565ULL, static_cast<std::uint64_t>(b)}));
            trees.push_back(TreeBuilder(x, t, params_, rng).build());
        }
        return std::make_shared<ForestModel>(std::move(trees));
    }
    std::string name() const override {
        return "forest(trees=" + std::to_string(params_.trees) +
               ",depth=" + std::to_string(params_.max_depth) +
               ",min_leaf=" + std::to_string(params_.min_leaf) +
               ",mtry=" + std::to_string(params_.mtry) + ")";
    }

  private:
    ForestParams params_;
};

// ---------------------------------------------------------------------------
// Stacking ensemble.

class StackingModel final : public Model {
  public:
    StackingModel(std::vector<ModelPtr> models, StackingInfo info)
        : models_(std::move(models)), info_(std::move(info)) {}

    std::vector<double> predict(const Matrix& x) const override {
        std::vector<double> out(x.rows, 0.0);
        for (std::size_t l = 0; l < models_.size(); ++l) {
            if (!models_[l] || info_.weights[l] == 0.0) continue;
            const auto p = models_[l]->predict(x);
            for (std::size_t i = 0; i < x.rows; ++i) out[i] += info_.weights[l] * p[i];
        }
        return out;
    }

    const StackingInfo& info() const { return info_; }

  private:
    std::vector<ModelPtr> models_;
    StackingInfo info_;
};

// All simplex grid points with coordinates that are multiples of `step`.
void enumerate_simplex(std::size_t dims, int ticks, std::vector<int>& cur,
                       std::vector<std::vector<int>>& out) {
    if (cur.size() + 1 == dims) {
        int used = 0;
        for (int v : cur) used += v;
        cur.push_back(ticks - used);
        out.push_back(cur);
        cur.pop_back();
        return;
    }
    int used = 0;
    for (int v : cur) used += v;
    for (int v = 0; v <= ticks - used; ++v) {
        cur.push_back(v);
        enumerate_simplex(dims, ticks, cur, out);
        cur.pop_back();
    }
}

std::vector<double> simplex_grid_argmin(const Mat& gram, const Vec& cross, double t_sq_mean,
                                        std::size_t n) {
    const auto dims = static_cast<std::size_t>(gram.rows());
    constexpr int ticks = 20; // resolution 0.05
    std::vector<std::vector<int>> grid;
    std::vector<int> cur;
    enumerate_simplex(dims, ticks, cur, grid);
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_w(dims, 0.0);
    Vec w(dims);
    for (const auto& point : grid) {
        for (std::size_t j = 0; j < dims; ++j) w(static_cast<Eigen::Index>(j)) = point[j] / 20.0;
        const double mse =
            (w.dot(gram * w) - 2.0 * w.dot(cross)) / static_cast<double>(n) + t_sq_mean;
        if (mse < best) {
            best = mse;
            for (std::size_t j = 0; j < dims; ++j) best_w[j] = w(static_cast<Eigen::Index>(j));
        }
    }
    return best_w;
}

std::vector<double> simplex_projected_gradient(const Mat& gram, const Vec& cross, std::size_t n) {
    const auto dims = gram.rows();
    Vec w = Vec::Constant(dims, 1.0 / static_cast<double>(dims));
    const double lr = 0.5 / std::max(gram.diagonal().maxCoeff() / static_cast<double>(n), 1e-12);
    for (int iter = 0; iter < 500; ++iter) {
        const Vec grad = 2.0 * (gram * w - cross) / static_cast<double>(n);
        Vec v = w - lr * grad;
        // Euclidean projection onto the simplex.
        Vec sorted = v;
        std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<double>());
        double cum = 0.0, tau = 0.0;
        int rho = 0;
        for (Eigen::Index j = 0; j < sorted.size(); ++j) {
            cum += sorted(j);
            const double cand = (cum - 1.0) / static_cast<double>(j + 1);
            if (sorted(j) - cand > 0) {
                rho = static_cast<int>(j + 1);
                tau = cand;
            }
        }
        (void)rho;
        for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = std::max(v(j) - tau, 0.0);
        if ((v - w).cwiseAbs().maxCoeff() < 1e-12) break;
        w = v;
    }
    return {w.data(), w.data() + w.size()};
}

class StackingLearner final : public Learner {
  public:
    StackingLearner(std::vector<LearnerPtr> base, int cv_folds)
        : base_(std::move(base)), cv_folds_(cv_folds) {
        if (base_.empty()) throw ConfigError("stacking needs at least one base learner");
        if (cv_folds_ < 2) throw ConfigError("stacking needs cv_folds >= 2");
    }

    ModelPtr fit(const Matrix& x, std::span<const double> t, std::uint64_t seed) const override {
        const std::size_t n = x.rows;
        if (t.size() != n) throw ContractError("target length != feature rows");
        if (n < static_cast<std::size_t>(cv_folds_))
            throw ConfigError("stacking needs n >= cv_folds");
        const std::size_t nl = base_.size();

        std::vector<int> fold_of(n);
        {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0u);
            Rng rng(derive_seed(seed, {0x73746b63ULL}));
            for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
            for (std::size_t i = 0; i < n; ++i)
                fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(cv_folds_));
        }

        Mat z = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nl));
        std::vector<bool> alive(nl, true);
        std::vector<std::string> warnings;
        for (std::size_t l = 0; l < nl; ++l) {
            try {
                for (int f = 0; f < cv_folds_; ++f) {
                    std::vector<std::size_t> train, test;
                    for (std::size_t i = 0; i < n; ++i)
                        (fold_of[i] == f ? test : train).push_back(i);
                    const Matrix xtr = x.take_rows(train);
                    const auto ttr = take(t, train);
                    const auto model = base_[l]->fit(
                        xtr, ttr,
                        derive_seed(seed, {static_cast<std::uint64_t>(l),
                                           static_cast<std::uint64_t>(f)}));
                    const auto pred = model->predict(x.take_rows(test));
                    for (std::size_t i = 0; i < test.size(); ++i)
                        z(static_cast<Eigen::Index>(test[i]), static_cast<Eigen::Index>(l)) =
                            pred[i];
                }
            } catch (const std::exception& e) {
                alive[l] = false;
                warnings.push_back("dropped " + base_[l]->name() + ": " + e.what());
            }
        }

        std::vector<std::size_t> kept;
        for (std::size_t l = 0; l < nl; ++l)
            if (alive[l]) kept.push_back(l);
        if (kept.empty()) {
            std::string detail;
            for (const auto& w : warnings) detail += "; " + w;
            throw NumericError("all stacking base learners failed" + detail);
        }

        Mat zk(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kept.size()));
        for (std::size_t j = 0; j < kept.size(); ++j)
            zk.col(static_cast<Eigen::Index>(j)) = z.col(static_cast<Eigen::Index>(kept[j]));
        const Eigen::Map<const Vec> tv(t.data(), static_cast<Eigen::Index>(n));
        const Mat gram = zk.transpose() * zk;
        const Vec cross = zk.transpose() * tv;
        const double t_sq_mean = tv.squaredNorm() / static_cast<double>(n);

        const std::vector<double> wk =
            kept.size() <= 4 ? simplex_grid_argmin(gram, cross, t_sq_mean, n)
                             : simplex_projected_gradient(gram, cross, n);

        StackingInfo info;
        info.weights.assign(nl, 0.0);
        for (std::size_t j = 0; j < kept.size(); ++j) info.weights[kept[j]] = wk[j];
        for (const auto& b : base_) info.base_names.push_back(b->name());
        info.warnings = warnings;

        std::vector<ModelPtr> models(nl);
        for (std::size_t l : kept)
            models[l] = base_[l]->fit(
                x, t, derive_seed(seed, {static_cast<std::uint64_t>(l), 0xf1a7ULL}));
        return std::make_shared<StackingModel>(std::move(models), std::move(info));
    }

    std::string name() const override {
        std::string s = "stack(";
        for (std::size_t l = 0; l < base_.size(); ++l)
            s += (l ? "," : "") + base_[l]->name();
        return s + ")";
    }

  private:
    std::vector<LearnerPtr> base_;
    int cv_folds_;
};

class ColumnSubsetModel final : public Model {
  public:
    ColumnSubsetModel(ModelPtr inner, std::vector<std::size_t> cols)
        : inner_(std::move(inner)), cols_(std::move(cols)) {}
    std::vector<double> predict(const Matrix& x) const override {
        return inner_->predict(x.take_cols(cols_));
    }

  private:
    ModelPtr inner_;
    std::vector<std::size_t> cols_;
};

class ColumnSubsetLearner final : public Learner {
  public:
    ColumnSubsetLearner(LearnerPtr inner, std::vector<std::size_t> cols)
        : inner_(std::move(inner)), cols_(std::move(cols)) {}
    ModelPtr fit(const Matrix& x, std::span<const double> t, std::uint64_t seed) const override {
        for (std::size_t c : cols_)
            if (c >= x.cols) throw ContractError("column subset index out of range");
        return std::make_shared<ColumnSubsetModel>(inner_->fit(x.take_cols(cols_), t, seed),
                                                   cols_);
    }
    std::string name() const override {
        std::string s = inner_->name() + "[";
        for (std::size_t i = 0; i < cols_.size(); ++i)
            s += (i ? "," : "") + std::to_string(cols_[i]);
        return s + "]";
    }

  private:
    LearnerPtr inner_;
    std::vector<std::size_t> cols_;
};

} // namespace

LearnerPtr make_mean_learner() { return std::make_shared<MeanLearner>(); }
LearnerPtr make_ols_learner(int degree) { return std::make_shared<OlsLearner>(degree); }
LearnerPtr make_logistic_learner(int degree) { return std::make_shared<LogisticLearner>(degree); }
LearnerPtr make_forest_learner(const ForestParams& params) {
    return std::make_shared<ForestLearner>(params);
}
LearnerPtr make_stacking_learner(std::vector<LearnerPtr> base, int cv_folds) {
    return std::make_shared<StackingLearner>(std::move(base), cv_folds);
}
LearnerPtr make_column_subset_learner(LearnerPtr inner, std::vector<std::size_t> cols) {
    return std::make_shared<ColumnSubsetLearner>(std::move(inner), std::move(cols));
}

const StackingInfo* stacking_info(const Model& m) {
    if (const auto* sm = dynamic_cast<const StackingModel*>(&m)) return &sm->info();
    return nullptr;
}

bool logistic_separation_flagged(const Model& m) {
    if (const auto* lm = dynamic_cast<const LogisticModel*>(&m)) return lm->flagged();
    return false;
}

namespace {

std::string strip(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Splits on commas that sit outside parentheses.
std::vector<std::string> split_top_level(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    int depth = 0;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' && depth == 0) {
            parts.push_back(strip(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!strip(cur).empty()) parts.push_back(strip(cur));
    return parts;
}

} // namespace

LearnerPtr parse_learner(const std::string& raw) {
    const std::string spec = strip(raw);
    if (spec == "mean") return make_mean_learner();
    if (spec == "ols") return make_ols_learner(1);
    if (spec == "ols2") return make_ols_learner(2);
    if (spec == "logit") return make_logistic_learner(1);
    if (spec == "logit2") return make_logistic_learner(2);
    if (spec == "forest") return make_forest_learner({});
    if (spec.starts_with("forest(") && spec.ends_with(")")) {
        ForestParams p;
        for (const auto& kv : split_top_level(spec.substr(7, spec.size() - 8))) {
            if (kv.empty()) continue;
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("forest option must look like key=value: " + kv);
            const std::string key = strip(kv.substr(0, eq));
            int value = 0;
            try {
                value = std::stoi(strip(kv.substr(eq + 1)));
            } catch (const std::exception&) {
                throw ConfigError("bad forest option value: " + kv);
            }
            if (key == "trees")
                p.trees = value;
            else if (key == "depth")
                p.max_depth = value;
            else if (key == "min_leaf")
                p.min_leaf = value;
            else if (key == "mtry")
                p.mtry = value;
            else
                throw ConfigError("unknown forest option: " + key);
        }
        if (p.trees < 1 || p.max_depth < 1 || p.min_leaf < 1)
            throw ConfigError("forest options must be positive");
        return make_forest_learner(p);
    }
    if (spec.starts_with("stack(") && spec.ends_with(")")) {
        std::vector<LearnerPtr> base;
        int cv = 5;
        for (const auto& part : split_top_level(spec.substr(6, spec.size() - 7))) {
            if (part.starts_with("cv=")) {
                try {
                    cv = std::stoi(part.substr(3));
                } catch (const std::exception&) {
                    throw ConfigError("bad stack cv option: " + part);
                }
            } else {
                base.push_back(parse_learner(part));
            }
        }
        return make_stacking_learner(std::move(base), cv);
    }
    throw ConfigError("unknown learner spec: '" + spec + "'");
}

// ---------------------------------------------------------------------------
// One-parameter offset-logistic tilt.

namespace {

OffsetLogisticFit fit_tilt(std::span<const double> h, std::span<const double> offset,
                           std::span<const double> targets, bool weighted) {
    const std::size_t n = h.size();
    if (offset.size() != n || targets.size() != n)
        throw ContractError("offset-logistic inputs must have equal length");
    bool any_h = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(offset[i])) throw ContractError("non-finite offset in logistic tilt");
        if (!(h[i] >= 0.0)) throw ContractError("clever covariate must be nonnegative");
        if (!(targets[i] >= 0.0 && targets[i] <= 1.0))
            throw ContractError("tilt targets must lie in [0, 1]");
        any_h = any_h || h[i] > 0.0;
    }
    if (!any_h) return {0.0, 0, true}; // flat likelihood; canonical root

    const double tol = kTiltScoreTol * static_cast<double>(n);
    // Linear predictor is offset + eta*h (covariate tilt) or offset + eta
    // with weights h (weighted tilt); both have score sum h*(t - p).
    const auto prob = [&](double eta, std::size_t i) {
        return expit(offset[i] + (weighted ? eta : eta * h[i]));
    };
    const auto score = [&](double eta) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += h[i] * (targets[i] - prob(eta, i));
        return s;
    };
    const auto curvature = [&](double eta) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = prob(eta, i);
            const double slope = weighted ? h[i] : h[i] * h[i];
            c += slope * p * (1.0 - p);
        }
        return c;
    };
    const auto nll = [&](double eta) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = clip(prob(eta, i), 1e-14, 1.0 - 1e-14);
            const double w = weighted ? h[i] : 1.0;
            v -= w * (targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p));
        }
        return v;
    };

    OffsetLogisticFit fit;
    double eta = 0.0;
    bool newton_ok = true;
    for (int iter = 0; iter < 50; ++iter) {
        fit.iterations = iter + 1;
        const double s = score(eta);
        if (std::fabs(s) <= tol) {
            fit.eta = eta;
            fit.converged = true;
            return fit;
        }
        const double c = curvature(eta);
        if (!(c > 1e-300)) {
            newton_ok = false;
            break;
        }
        double step = s / c;
        if (!std::isfinite(step)) {
            newton_ok = false;
            break;
        }
        const double base_nll = nll(eta);
        double cand = eta + step;
        int halvings = 0;
        while (halvings < 40 && (!std::isfinite(nll(cand)) || nll(cand) > base_nll + 1e-12)) {
            step *= 0.5;
            cand = eta + step;
            ++halvings;
        }
        if (halvings == 40) {
            newton_ok = false;
            break;
        }
        eta = cand;
    }
    if (newton_ok && std::fabs(score(eta)) <= tol) {
        fit.eta = eta;
        fit.converged = true;
        return fit;
    }

    // Bisection fallback on the (monotone decreasing) score.
    double lo = -kTiltEtaBound, hi = kTiltEtaBound;
    double s_lo = score(lo), s_hi = score(hi);
    if (s_lo < 0.0 || s_hi > 0.0) {
        // No sign change inside the bracket; report the better boundary.
        const bool take_lo = std::fabs(s_lo) < std::fabs(s_hi);
        fit.eta = take_lo ? lo : hi;
        fit.converged = std::fabs(take_lo ? s_lo : s_hi) <= tol;
        return fit;
    }
    for (int iter = 0; iter < 200; ++iter) {
        ++fit.iterations;
        const double mid = 0.5 * (lo + hi);
        const double s = score(mid);
        if (std::fabs(s) <= tol) {
            fit.eta = mid;
            fit.converged = true;
            return fit;
        }
        (s > 0.0 ? lo : hi) = mid;
    }
    fit.eta = 0.5 * (lo + hi);
    fit.converged = std::fabs(score(fit.eta)) <= tol;
    return fit;
}

} // namespace

OffsetLogisticFit fit_offset_logistic(std::span<const double> h, std::span<const double> offset,
                                      std::span<const double> targets) {
    return fit_tilt(h, offset, targets, false);
}

OffsetLogisticFit fit_offset_logistic_weighted(std::span<const double> h,
                                               std::span<const double> offset,
                                               std::span<const double> targets) {
    return fit_tilt(h, offset, targets, true);
}

} // namespace diffvar
