#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace diffvar {

// Dense row-major matrix. Small by design: covariate blocks and expanded
// regression designs, nothing that warrants a full linear-algebra type.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    // Row subset, preserving order of `idx`.
    Matrix take_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < cols; ++j) out(i, j) = (*this)(idx[i], j);
        return out;
    }

    Matrix take_cols(std::span<const std::size_t> keep) const {
        Matrix out(rows, keep.size());
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < keep.size(); ++j) out(i, j) = (*this)(i, keep[j]);
        return out;
    }

    bool operator==(const Matrix&) const = default;
};

inline std::vector<double> take(std::span<const double> v, std::span<const std::size_t> idx) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
    return out;
}

} // namespace diffvar
