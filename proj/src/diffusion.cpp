#include "stg/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace stg {

void PprParams::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("PprParams: alpha must be in (0, 1]");
    if (!(tol > 0.0)) throw std::invalid_argument("PprParams: tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("PprParams: max_iter must be >= 1");
}

void SignConfig::validate() const {
    if (s < 0 || p < 0 || t < 0) throw std::invalid_argument("SignConfig: negative power count");
    if (s + p + t < 1) throw std::invalid_argument("SignConfig: s + p + t must be >= 1");
    if (p > 0) ppr.validate();
}

DenseMatrix DiffusedFeatures::concat() const {
    Index width = 0;
    for (const Block& b : blocks) {
        if (b.matrix.n_rows != n_nodes)
            throw std::logic_error("DiffusedFeatures: block row count mismatch");
        width += b.matrix.n_cols;
    }
    DenseMatrix out(n_nodes, width);
    Index col0 = 0;
    for (const Block& b : blocks) {
        for (Index i = 0; i < n_nodes; ++i) {
            const double* src = b.matrix.row(i);
            double* dst = out.row(i) + col0;
            for (Index j = 0; j < b.matrix.n_cols; ++j) dst[j] = src[j];
        }
        col0 += b.matrix.n_cols;
    }
    return out;
}

SparseMatrix symmetrize(const SparseMatrix& a) {
    if (a.n_rows != a.n_cols) throw std::invalid_argument("symmetrize: matrix must be square");
    const SparseMatrix at = transpose(a);
    SparseMatrix out;
    out.n_rows = a.n_rows;
    out.n_cols = a.n_cols;
    out.row_offsets.assign(static_cast<std::size_t>(a.n_rows) + 1, 0);
    for (Index i = 0; i < a.n_rows; ++i) {
        Index ea = a.row_offsets[static_cast<std::size_t>(i)];
        Index eb = at.row_offsets[static_cast<std::size_t>(i)];
        const Index ea_end = a.row_offsets[static_cast<std::size_t>(i) + 1];
        const Index eb_end = at.row_offsets[static_cast<std::size_t>(i) + 1];
        auto push = [&](Index c, double v) {
            if (v != 0.0) {
                out.col_indices.push_back(c);
                out.values.push_back(v);
                ++out.row_offsets[static_cast<std::size_t>(i) + 1];
            }
        };
        while (ea < ea_end || eb < eb_end) {
            const Index ca = ea < ea_end ? a.col_indices[static_cast<std::size_t>(ea)] : a.n_cols;
            const Index cb = eb < eb_end ? at.col_indices[static_cast<std::size_t>(eb)] : a.n_cols;
            if (ca < cb) {
                push(ca, a.values[static_cast<std::size_t>(ea)]);
                ++ea;
            } else if (cb < ca) {
                push(cb, at.values[static_cast<std::size_t>(eb)]);
                ++eb;
            } else {
                push(ca, std::max(a.values[static_cast<std::size_t>(ea)],
                                  at.values[static_cast<std::size_t>(eb)]));
                ++ea;
                ++eb;
            }
        }
    }
    for (Index r = 0; r < out.n_rows; ++r)
        out.row_offsets[static_cast<std::size_t>(r) + 1] += out.row_offsets[static_cast<std::size_t>(r)];
    return out;
}

SparseMatrix gcn_normalize(const SparseMatrix& a) {
    if (a.n_rows != a.n_cols) throw std::invalid_argument("gcn_normalize: matrix must be square");
    const Index n = a.n_rows;

    std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
    for (Index i = 0; i < n; ++i)
        for (Index e = a.row_offsets[static_cast<std::size_t>(i)];
             e < a.row_offsets[static_cast<std::size_t>(i) + 1]; ++e)
            deg[static_cast<std::size_t>(i)] += a.values[static_cast<std::size_t>(e)];

    std::vector<Triplet> entries;
    entries.reserve(a.values.size() + static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        for (Index e = a.row_offsets[static_cast<std::size_t>(i)];
             e < a.row_offsets[static_cast<std::size_t>(i) + 1]; ++e)
            entries.push_back({i, a.col_indices[static_cast<std::size_t>(e)],
                               a.values[static_cast<std::size_t>(e)]});
    for (Index i = 0; i < n; ++i) entries.push_back({i, i, 1.0});
    const SparseMatrix a_plus_i = SparseMatrix::from_coo(n, n, std::move(entries));

    std::vector<double> inv_sqrt(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const double d = deg[static_cast<std::size_t>(i)] + 1.0;
        if (!(d > 0.0)) throw std::invalid_argument("gcn_normalize: nonpositive degree");
        inv_sqrt[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(d);
    }
    return scale_rows(scale_cols(a_plus_i, inv_sqrt), inv_sqrt);
}

SparseMatrix rw_normalize(const SparseMatrix& a) {
    if (a.n_rows != a.n_cols) throw std::invalid_argument("rw_normalize: matrix must be square");
    std::vector<double> deg(static_cast<std::size_t>(a.n_rows), 0.0);
    for (Index i = 0; i < a.n_rows; ++i)
        for (Index e = a.row_offsets[static_cast<std::size_t>(i)];
             e < a.row_offsets[static_cast<std::size_t>(i) + 1]; ++e)
            deg[static_cast<std::size_t>(i)] += a.values[static_cast<std::size_t>(e)];
    std::vector<double> inv(static_cast<std::size_t>(a.n_rows));
    for (Index i = 0; i < a.n_rows; ++i) {
        const double d = deg[static_cast<std::size_t>(i)];
        inv[static_cast<std::size_t>(i)] = d > 0.0 ? 1.0 / d : 0.0;
    }
    return scale_cols(transpose(a), inv);
}

PprResult ppr_diffuse(const SparseMatrix& a_rw, const DenseMatrix& x, const PprParams& params,
                      int n_powers, int n_threads) {
    params.validate();
    if (a_rw.n_rows != a_rw.n_cols) throw std::invalid_argument("ppr_diffuse: operator must be square");
    if (a_rw.n_cols != x.n_rows) throw std::invalid_argument("ppr_diffuse: dimension mismatch");
    if (n_powers < 1) throw std::invalid_argument("ppr_diffuse: n_powers must be >= 1");

    const double alpha = params.alpha;
    PprResult res;
    res.powers.reserve(static_cast<std::size_t>(n_powers));
    for (int m = 0; m < n_powers; ++m) {
        const DenseMatrix& source = m == 0 ? x : res.powers.back();
        DenseMatrix z = source;
        int it = 0;
        bool ok = false;
        while (it < params.max_iter) {
            DenseMatrix next = spmm_dense(a_rw, z, n_threads);
            ++it;
            double delta = 0.0;
            for (std::size_t idx = 0; idx < next.data.size(); ++idx) {
                const double v = (1.0 - alpha) * next.data[idx] + alpha * source.data[idx];
                const double d = std::fabs(v - z.data[idx]);
                if (d > delta) delta = d;
                next.data[idx] = v;
            }
            z = std::move(next);
            if (delta <= params.tol) {
                ok = true;
                break;
            }
        }
        res.iterations.push_back(it);
        res.converged = res.converged && ok;
        res.powers.push_back(std::move(z));
    }
    return res;
}

namespace {

SparseMatrix binarize(const SparseMatrix& a) {
    SparseMatrix out = a;
    for (double& v : out.values) v = 1.0;
    return out;
}

}  // namespace

SparseMatrix triangle_adjacency(const SparseMatrix& a) {
    if (a.n_rows != a.n_cols) throw std::invalid_argument("triangle_adjacency: matrix must be square");
    const SparseMatrix pattern = binarize(a);
    return hadamard(transpose(pattern), spgemm(pattern, pattern));
}

std::vector<DenseMatrix> apply_powers(const SparseMatrix& op, const DenseMatrix& x, int k,
                                      int n_threads) {
    if (op.n_rows != op.n_cols) throw std::invalid_argument("apply_powers: operator must be square");
    if (op.n_cols != x.n_rows) throw std::invalid_argument("apply_powers: dimension mismatch");
    if (k < 1) throw std::invalid_argument("apply_powers: k must be >= 1");
    std::vector<DenseMatrix> out;
    out.reserve(static_cast<std::size_t>(k));
    out.push_back(spmm_dense(op, x, n_threads));
    for (int m = 1; m < k; ++m) out.push_back(spmm_dense(op, out.back(), n_threads));
    return out;
}

DenseMatrix simple_gcn_features(const SparseMatrix& a, const DenseMatrix& x, int k, int n_threads) {
    return apply_powers(gcn_normalize(a), x, k, n_threads).back();
}

DiffusedFeatures build_sign_features(const SparseMatrix& a, const DenseMatrix& x,
                                     const SignConfig& cfg, bool symmetrize_gcn, int n_threads) {
    cfg.validate();
    if (a.n_rows != a.n_cols) throw std::invalid_argument("build_sign_features: matrix must be square");
    if (a.n_rows != x.n_rows) throw std::invalid_argument("build_sign_features: dimension mismatch");

    DiffusedFeatures out;
    out.n_nodes = x.n_rows;
    out.blocks.push_back({"x", x});

    if (cfg.s > 0) {
        const SparseMatrix a_hat = gcn_normalize(symmetrize_gcn ? symmetrize(a) : a);
        auto powers = apply_powers(a_hat, x, cfg.s, n_threads);
        for (int m = 0; m < cfg.s; ++m)
            out.blocks.push_back({"gcn" + std::to_string(m + 1), std::move(powers[static_cast<std::size_t>(m)])});
    }
    if (cfg.p > 0) {
        PprResult ppr = ppr_diffuse(rw_normalize(a), x, cfg.ppr, cfg.p, n_threads);
        out.ppr_converged = ppr.converged;
        for (int m = 0; m < cfg.p; ++m)
            out.blocks.push_back({"ppr" + std::to_string(m + 1), std::move(ppr.powers[static_cast<std::size_t>(m)])});
    }
    if (cfg.t > 0) {
        const SparseMatrix tri_hat = gcn_normalize(triangle_adjacency(a));
        auto powers = apply_powers(tri_hat, x, cfg.t, n_threads);
        for (int m = 0; m < cfg.t; ++m)
            out.blocks.push_back({"tri" + std::to_string(m + 1), std::move(powers[static_cast<std::size_t>(m)])});
    }
    return out;
}

}  // namespace stg
