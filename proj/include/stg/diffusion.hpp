#pragma once

// Graph diffusion operators and feature precomputation. Four operators are
// supported: the GCN-normalized adjacency, the random-walk (column-
// stochastic) adjacency, personalized-PageRank diffusion approximated by
// power iteration, and the triangle adjacency counting directed triangles
// per edge. Feature blocks are produced by repeated sparse*dense products;
// operator powers are never materialized.

#include <string>
#include <vector>

#include "stg/sparse.hpp"

namespace stg {

struct PprParams {
    double alpha = 0.15;  // teleport probability, in (0, 1]
    double tol = 1e-8;    // max-abs convergence threshold
    int max_iter = 1000;

    void validate() const;
};

struct SignConfig {
    int s = 3;  // GCN-normalized powers
    int p = 0;  // PPR powers
    int t = 0;  // triangle powers
    PprParams ppr;

    void validate() const;
};

struct PprResult {
    std::vector<DenseMatrix> powers;  // Z_1 .. Z_n
    std::vector<int> iterations;      // iterations spent per power
    bool converged = true;            // every power reached tol within max_iter
};

/// Ordered feature blocks: raw X first, then GCN powers 1..s, PPR powers
/// 1..p, triangle powers 1..t.
struct DiffusedFeatures {
    struct Block {
        std::string label;
        DenseMatrix matrix;
    };
    std::vector<Block> blocks;
    Index n_nodes = 0;
    bool ppr_converged = true;

    /// Horizontal concatenation of all blocks, width = sum of block widths.
    DenseMatrix concat() const;
};

/// Elementwise max(a, a^T); pattern union of the matrix and its transpose.
SparseMatrix symmetrize(const SparseMatrix& a);

/// (D+I)^{-1/2} (A+I) (D+I)^{-1/2} with D the diagonal of weighted row
/// sums of a. Every row keeps at least its self-loop entry.
SparseMatrix gcn_normalize(const SparseMatrix& a);

/// Column-stochastic walk matrix: entry (i, j) is a[j][i] divided by the
/// weighted out-degree (row sum of row j) of the source node j. Columns
/// of sources with no out-edges stay zero.
SparseMatrix rw_normalize(const SparseMatrix& a);

/// Fixed-point iteration Z <- (1-alpha) * W * Z + alpha * S, run n_powers
/// times; the source term S of power m+1 is the converged Z of power m
/// (S = X for the first). Stops a power when the max-abs change is <= tol,
/// or flags non-convergence after max_iter.
PprResult ppr_diffuse(const SparseMatrix& a_rw, const DenseMatrix& x, const PprParams& params,
                      int n_powers, int n_threads = 1);

/// A_tri = A^T (.) A^2 over the binarized pattern of a; entry (i, j) counts
/// the directed triangles through the edge j -> i.
SparseMatrix triangle_adjacency(const SparseMatrix& a);

/// [op*x, op*(op*x), ...] of length k; each result reuses the previous one,
/// so only sparse*dense products are performed.
std::vector<DenseMatrix> apply_powers(const SparseMatrix& op, const DenseMatrix& x, int k,
                                      int n_threads = 1);

/// k-th power block of the GCN-normalized operator of a applied to x.
DenseMatrix simple_gcn_features(const SparseMatrix& a, const DenseMatrix& x, int k,
                                int n_threads = 1);

/// Assemble the block set [X, gcn^1..s, ppr^1..p, tri^1..t]. The GCN
/// operator is built from symmetrize(a) when symmetrize_gcn is set; PPR and
/// triangle operators always use a as given.
DiffusedFeatures build_sign_features(const SparseMatrix& a, const DenseMatrix& x,
                                     const SignConfig& cfg, bool symmetrize_gcn = true,
                                     int n_threads = 1);

}  // namespace stg
