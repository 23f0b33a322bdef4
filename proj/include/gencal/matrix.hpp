#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gencal/tensor.hpp"

namespace gencal {

using Rng = std::mt19937_64;

/// Independent, reproducible stream for (seed, stream id).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

/// Plain row-major value matrix for data that never enters a graph.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
        if (values.size() != r * c) throw std::invalid_argument("Matrix: value count does not match shape");
    }

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

    Tensor to_tensor(bool requires_grad = false) const {
        return Tensor::from_data({rows, cols}, values, requires_grad);
    }
    static Matrix from_tensor(const Tensor& t) {
        return Matrix(t.rows(), t.cols(), std::vector<double>(t.data().begin(), t.data().end()));
    }

    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto src = row(idx[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline Matrix standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : m.values) v = normal(rng);
    return m;
}

/// One-hot [labels.size(), k] tensor; labels must lie in [0, k).
inline Tensor one_hot(std::span<const int> labels, std::size_t k) {
    std::vector<double> v(labels.size() * k, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
            throw std::out_of_range("one_hot: label " + std::to_string(labels[i]) +
                                    " outside [0," + std::to_string(k) + ")");
        }
        v[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return Tensor::from_data({labels.size(), k}, std::move(v));
}

}  // namespace gencal
