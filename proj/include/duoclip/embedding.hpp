// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "duoclip/error.hpp"

namespace duoclip {

/// Dense row-major matrix.
template <class T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::span<T> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const T> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    Matrix transposed() const {
        Matrix t(cols, rows);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    bool operator==(const Matrix&) const = default;
};

/// Joint-space vectors, one row per item.
template <class T>
struct EmbeddingMatrix {
    Matrix<T> vectors;
    bool normalized = false;

    std::size_t rows() const { return vectors.rows; }
    std::size_t dim() const { return vectors.cols; }
    std::span<const T> row(std::size_t i) const { return vectors.row(i); }

    bool operator==(const EmbeddingMatrix&) const = default;
};

constexpr double kUnitNormTolerance = 1e-5;

/// Scales each row to unit Euclidean norm. Zero rows raise NumericError.
template <class T>
EmbeddingMatrix<T> normalize_rows(Matrix<T> m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        auto r = m.row(i);
        T ss = 0;
        for (T v : r) ss += v * v;
        const T norm = std::sqrt(ss);
        if (!(norm > T(0)) || !std::isfinite(norm))
            throw NumericError("cannot normalise row " + std::to_string(i) + " (norm " +
                               std::to_string(static_cast<double>(norm)) + ")");
        for (T& v : r) v /= norm;
    }
    return {std::move(m), true};
}

template <class T>
bool rows_have_unit_norm(const Matrix<T>& m, double tol = kUnitNormTolerance) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double ss = 0;
        for (T v : m.row(i)) ss += static_cast<double>(v) * static_cast<double>(v);
        if (std::abs(std::sqrt(ss) - 1.0) > tol) return false;
    }
    return true;
}

template <class U, class T>
EmbeddingMatrix<U> cast_embeddings(const EmbeddingMatrix<T>& e) {
    EmbeddingMatrix<U> out;
    out.normalized = e.normalized;
    out.vectors = Matrix<U>(e.vectors.rows, e.vectors.cols);
    for (std::size_t i = 0; i < e.vectors.data.size(); ++i)
        out.vectors.data[i] = static_cast<U>(e.vectors.data[i]);
    return out;
}

}  // namespace duoclip
