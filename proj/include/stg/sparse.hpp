#pragma once

// Compressed-row sparse matrices plus the linear-algebra kernels the
// diffusion operators are built from: sparse*dense and sparse*sparse
// products, transpose, Hadamard product, degree extraction and diagonal
// scaling. All element types are 64-bit reals.

#include <cstdint>
#include <span>
#include <vector>

namespace stg {

using Index = std::int64_t;

/// Dense row-major matrix of doubles.
struct DenseMatrix {
    Index n_rows = 0;
    Index n_cols = 0;
    std::vector<double> data;  // length n_rows * n_cols

    DenseMatrix() = default;
    DenseMatrix(Index rows, Index cols, double fill = 0.0);

    double& operator()(Index i, Index j) { return data[static_cast<std::size_t>(i * n_cols + j)]; }
    double operator()(Index i, Index j) const { return data[static_cast<std::size_t>(i * n_cols + j)]; }

    double* row(Index i) { return data.data() + i * n_cols; }
    const double* row(Index i) const { return data.data() + i * n_cols; }

    bool operator==(const DenseMatrix&) const = default;
};

/// True iff every value is finite.
bool all_finite(std::span<const double> values);

struct Triplet {
    Index row;
    Index col;
    double value;
};

/// CSR matrix. Column indices are strictly increasing within each row and
/// no stored value is exactly zero; from_coo collapses duplicates by
/// summing and prunes entries that sum to zero.
struct SparseMatrix {
    Index n_rows = 0;
    Index n_cols = 0;
    std::vector<Index> row_offsets;   // length n_rows + 1
    std::vector<Index> col_indices;
    std::vector<double> values;

    static SparseMatrix from_coo(Index n_rows, Index n_cols, std::vector<Triplet> entries);
    static SparseMatrix identity(Index n);

    Index nnz() const { return static_cast<Index>(values.size()); }

    /// Throws std::logic_error if any structural invariant is broken.
    void validate() const;

    bool operator==(const SparseMatrix&) const = default;
};

/// Count of stored entries per row (out-degree under the row = out-edges
/// convention used throughout).
using DegreeVector = std::vector<Index>;

/// result[i][j] = sum_k a[i][k] * x[k][j]. With n_threads > 1 the output
/// columns are split into contiguous blocks, one thread each; every output
/// element is accumulated in row-entry order by exactly one thread, so the
/// result is bit-identical to the single-threaded product.
DenseMatrix spmm_dense(const SparseMatrix& a, const DenseMatrix& x, int n_threads = 1);

/// Exact sparse product a * b (Gustavson row-wise; entries that cancel to
/// zero are pruned).
SparseMatrix spgemm(const SparseMatrix& a, const SparseMatrix& b);

SparseMatrix transpose(const SparseMatrix& a);

/// Elementwise product; the result pattern is the intersection of the
/// operand patterns.
SparseMatrix hadamard(const SparseMatrix& a, const SparseMatrix& b);

DegreeVector out_degrees(const SparseMatrix& a);

/// Multiply row i by d[i]. Entries scaled to exactly zero are pruned.
SparseMatrix scale_rows(const SparseMatrix& a, std::span<const double> d);

/// Multiply column j by d[j]. Entries scaled to exactly zero are pruned.
SparseMatrix scale_cols(const SparseMatrix& a, std::span<const double> d);

}  // namespace stg
