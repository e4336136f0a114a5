#include "diffvar/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "diffvar/errors.hpp"
#include "diffvar/rng.hpp"
#include "diffvar/stats.hpp"

namespace diffvar {

std::size_t Dataset::arm_count(int arm) const {
    std::size_t c = 0;
    for (int ai : a)
        if (ai == arm) ++c;
    return c;
}

void Dataset::validate() const {
    const std::size_t nn = n();
    if (nn < 2) throw ValidationError("dataset needs at least 2 rows, got " + std::to_string(nn));
    if (a.size() != nn || w.rows != nn)
        throw ValidationError("covariate, treatment and outcome lengths disagree");
    for (std::size_t i = 0; i < nn; ++i) {
        if (a[i] != 0 && a[i] != 1)
            throw ValidationError("treatment outside {0,1} at row " + std::to_string(i + 1));
        if (!std::isfinite(y[i]))
            throw ValidationError("non-finite outcome at row " + std::to_string(i + 1));
        for (std::size_t j = 0; j < w.cols; ++j)
            if (!std::isfinite(w(i, j)))
                throw ValidationError("non-finite covariate at row " + std::to_string(i + 1) +
                                      ", column " + std::to_string(j + 1));
    }
    if (arm_count(1) == 0 || arm_count(0) == 0)
        throw DegenerateError("degenerate design: one treatment arm is empty");
}

std::vector<std::size_t> FoldAssignment::fold_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldAssignment::complement_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] != fold) out.push_back(i);
    return out;
}

namespace {

// RFC-4180-style field split; quoted fields may contain commas and
// doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& col) {
    const std::string s = trim(raw);
    const auto fail = [&] {
        throw ValidationError("cannot parse value '" + s + "' at row " + std::to_string(row) +
                              ", column '" + col + "'");
    };
    if (s.empty()) fail();
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        fail();
    }
    if (pos != s.size()) fail();
    if (!std::isfinite(v))
        throw ValidationError("non-finite value at row " + std::to_string(row) + ", column '" +
                              col + "'");
    return v;
}

} // namespace

Dataset load_csv(const std::string& path, const std::string& outcome, const std::string& treatment,
                 const std::vector<std::string>& covariates) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw SchemaError("empty file: " + path);
    const auto names = split_csv_line(header);
    std::unordered_map<std::string, std::size_t> col_of;
    for (std::size_t j = 0; j < names.size(); ++j) col_of[trim(names[j])] = j;

    const auto need = [&](const std::string& name) {
        auto it = col_of.find(name);
        if (it == col_of.end()) throw SchemaError("missing column '" + name + "' in " + path);
        return it->second;
    };
    const std::size_t y_col = need(outcome);
    const std::size_t a_col = need(treatment);

    std::vector<std::string> cov_names = covariates;
    if (cov_names.empty()) {
        for (const auto& raw : names) {
            const std::string nm = trim(raw);
            if (nm != outcome && nm != treatment) cov_names.push_back(nm);
        }
    }
    std::vector<std::size_t> w_cols;
    for (const auto& c : cov_names) w_cols.push_back(need(c));

    std::vector<double> y;
    std::vector<int> a;
    std::vector<double> w_flat;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        const auto fields = split_csv_line(line);
        if (fields.size() != names.size())
            throw ValidationError("row " + std::to_string(row) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(names.size()));
        const double av = parse_cell(fields[a_col], row, treatment);
        if (av != 0.0 && av != 1.0)
            throw ValidationError("treatment value outside {0,1} at row " + std::to_string(row) +
                                  ", column '" + treatment + "'");
        a.push_back(static_cast<int>(av));
        y.push_back(parse_cell(fields[y_col], row, outcome));
        for (std::size_t j = 0; j < w_cols.size(); ++j)
            w_flat.push_back(parse_cell(fields[w_cols[j]], row, cov_names[j]));
    }

    Dataset d;
    d.y = std::move(y);
    d.a = std::move(a);
    d.w.rows = d.y.size();
    d.w.cols = w_cols.size();
    d.w.data = std::move(w_flat);
    d.validate();
    return d;
}

std::pair<Dataset, ScalingParams> scale_outcome(const Dataset& d) {
    const auto [lo, hi] = std::minmax_element(d.y.begin(), d.y.end());
    ScalingParams sp{*lo, *hi};
    if (!(sp.y_max > sp.y_min))
        throw DegenerateError("degenerate outcome: constant y (min == max)");
    Dataset out = d;
    const double r = sp.range();
    for (auto& v : out.y) v = clip((v - sp.y_min) / r, kEpsY, 1.0 - kEpsY);
    return {std::move(out), sp};
}

double unscale_variance(double v, const ScalingParams& s) {
    if (v < 0.0) throw ContractError("unscale_variance requires v >= 0");
    return v * s.range() * s.range();
}

FoldAssignment make_folds(const Dataset& d, int k, std::uint64_t seed) {
    if (k < 2) throw InfeasibleFoldError("fold count must be at least 2");
    for (int arm : {0, 1}) {
        const std::size_t na = d.arm_count(arm);
        if (na < static_cast<std::size_t>(k))
            throw InfeasibleFoldError("arm " + std::to_string(arm) + " has " + std::to_string(na) +
                                      " observations, fewer than k=" + std::to_string(k));
    }
    FoldAssignment fa;
    fa.k = k;
    fa.fold_of.assign(d.n(), 0);
    Rng rng(derive_seed(seed, {0x666f6c64ULL}));
    for (int arm : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < d.n(); ++i)
            if (d.a[i] == arm) idx.push_back(i);
        // Fisher-Yates, then round-robin deal within the arm.
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.index(i)]);
        for (std::size_t i = 0; i < idx.size(); ++i)
            fa.fold_of[idx[i]] = static_cast<int>(i % static_cast<std::size_t>(k)) + 1;
    }
    return fa;
}

} // namespace diffvar
