#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace infovgae {

// Row-major dense matrix of 64-bit reals.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Coordinate-format sparse matrix; entries sorted by (row, col), no duplicates.
struct SparseMatrix {
    struct Entry {
        std::size_t row;
        std::size_t col;
        double value;
    };

    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Entry> entries;

    SparseMatrix() = default;
    SparseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c) {}

    // Builds from triplets: sorts by (row, col) and sums duplicates.
    static SparseMatrix from_triplets(std::size_t r, std::size_t c, std::vector<Entry> trips) {
        std::sort(trips.begin(), trips.end(), [](const Entry& a, const Entry& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        SparseMatrix m(r, c);
        for (const Entry& e : trips) {
            if (e.row >= r || e.col >= c)
                throw DimensionError("sparse triplet out of bounds");
            if (!m.entries.empty() && m.entries.back().row == e.row && m.entries.back().col == e.col)
                m.entries.back().value += e.value;
            else
                m.entries.push_back(e);
        }
        for (const Entry& e : m.entries)
            if (!std::isfinite(e.value)) throw NumericError("non-finite sparse entry");
        return m;
    }

    std::size_t nnz() const { return entries.size(); }
};

inline DenseMatrix densify(const SparseMatrix& a) {
    DenseMatrix d(a.rows, a.cols);
    for (const auto& e : a.entries) d(e.row, e.col) = e.value;
    return d;
}

inline void check_finite(const DenseMatrix& m, const char* where) {
    if (!m.all_finite())
        throw NumericError(std::string("non-finite value produced by ") + where);
}

// Reshape to r x c reusing the existing allocation; contents unspecified.
inline void reshape(DenseMatrix& m, std::size_t r, std::size_t c) {
    m.rows = r;
    m.cols = c;
    m.data.resize(r * c);
}

// Reshape to r x c and zero-fill, reusing the existing allocation.
inline void reshape_zero(DenseMatrix& m, std::size_t r, std::size_t c) {
    m.rows = r;
    m.cols = c;
    m.data.assign(r * c, 0.0);
}

// c = a * b; c must not alias an operand. The k loop runs in ascending order
// so the accumulation order matches spmm on a densified operand bit for bit.
inline void matmul_into(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c) {
    if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
    reshape_zero(c, a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* ci = &c.data[i * c.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix c;
    matmul_into(a, b, c);
    return c;
}

// Sparse-dense product; c must not alias b. Entries are (row, col)-sorted so
// each output row accumulates contributions in ascending k, same as matmul.
inline void spmm_into(const SparseMatrix& a, const DenseMatrix& b, DenseMatrix& c) {
    if (a.cols != b.rows) throw DimensionError("spmm: inner dimensions differ");
    reshape_zero(c, a.rows, b.cols);
    for (const auto& e : a.entries) {
        double* ci = &c.data[e.row * c.cols];
        const double* bk = &b.data[e.col * b.cols];
        for (std::size_t j = 0; j < b.cols; ++j) ci[j] += e.value * bk[j];
    }
}

inline DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b) {
    DenseMatrix c;
    spmm_into(a, b, c);
    return c;
}

// c += a^T * b, used by spmm backward (a constant, gradient flows to b).
inline void spmm_transpose_accumulate(const SparseMatrix& a, const DenseMatrix& upstream,
                                      DenseMatrix& into) {
    for (const auto& e : a.entries) {
        const double* gi = &upstream.data[e.row * upstream.cols];
        double* tk = &into.data[e.col * into.cols];
        for (std::size_t j = 0; j < upstream.cols; ++j) tk[j] += e.value * gi[j];
    }
}

// t = a^T; t must not alias a.
inline void transpose_into(const DenseMatrix& a, DenseMatrix& t) {
    reshape(t, a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
}

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t;
    transpose_into(a, t);
    return t;
}

inline DenseMatrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    DenseMatrix w(rows, cols);
    for (double& v : w.data) v = rng.uniform(-limit, limit);
    return w;
}

} // namespace infovgae
