#include "stg/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

namespace stg {

DenseMatrix::DenseMatrix(Index rows, Index cols, double fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("DenseMatrix: negative dimension");
    n_rows = rows;
    n_cols = cols;
    data.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
}

bool all_finite(std::span<const double> values) {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

SparseMatrix SparseMatrix::from_coo(Index n_rows, Index n_cols, std::vector<Triplet> entries) {
    if (n_rows < 0 || n_cols < 0) throw std::invalid_argument("SparseMatrix: negative dimension");
    for (const Triplet& t : entries) {
        if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols)
            throw std::invalid_argument("SparseMatrix: triplet index out of range");
        if (!std::isfinite(t.value))
            throw std::invalid_argument("SparseMatrix: non-finite triplet value");
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    SparseMatrix m;
    m.n_rows = n_rows;
    m.n_cols = n_cols;
    m.row_offsets.assign(static_cast<std::size_t>(n_rows) + 1, 0);

    std::size_t i = 0;
    while (i < entries.size()) {
        const Index r = entries[i].row;
        const Index c = entries[i].col;
        double sum = 0.0;
        while (i < entries.size() && entries[i].row == r && entries[i].col == c) {
            sum += entries[i].value;
            ++i;
        }
        if (sum != 0.0) {
            m.col_indices.push_back(c);
            m.values.push_back(sum);
            ++m.row_offsets[static_cast<std::size_t>(r) + 1];
        }
    }
    for (Index r = 0; r < n_rows; ++r)
        m.row_offsets[static_cast<std::size_t>(r) + 1] += m.row_offsets[static_cast<std::size_t>(r)];
    return m;
}

SparseMatrix SparseMatrix::identity(Index n) {
    SparseMatrix m;
    m.n_rows = n;
    m.n_cols = n;
    m.row_offsets.resize(static_cast<std::size_t>(n) + 1);
    m.col_indices.resize(static_cast<std::size_t>(n));
    m.values.assign(static_cast<std::size_t>(n), 1.0);
    for (Index i = 0; i <= n; ++i) m.row_offsets[static_cast<std::size_t>(i)] = i;
    for (Index i = 0; i < n; ++i) m.col_indices[static_cast<std::size_t>(i)] = i;
    return m;
}

void SparseMatrix::validate() const {
    auto fail = [](const std::string& what) { throw std::logic_error("SparseMatrix invariant: " + what); };
    if (n_rows < 0 || n_cols < 0) fail("negative dimension");
    if (row_offsets.size() != static_cast<std::size_t>(n_rows) + 1) fail("row_offsets length");
    if (row_offsets.front() != 0) fail("row_offsets[0] != 0");
    if (col_indices.size() != values.size()) fail("col_indices/values length mismatch");
    if (row_offsets.back() != static_cast<Index>(values.size())) fail("row_offsets[n_rows] != nnz");
    for (Index r = 0; r < n_rows; ++r) {
        const Index lo = row_offsets[static_cast<std::size_t>(r)];
        const Index hi = row_offsets[static_cast<std::size_t>(r) + 1];
        if (lo > hi) fail("row_offsets decreasing");
        for (Index e = lo; e < hi; ++e) {
            const Index c = col_indices[static_cast<std::size_t>(e)];
            if (c < 0 || c >= n_cols) fail("column index out of range");
            if (e > lo && col_indices[static_cast<std::size_t>(e) - 1] >= c)
                fail("column indices not strictly increasing");
            const double v = values[static_cast<std::size_t>(e)];
            if (v == 0.0) fail("stored zero");
            if (!std::isfinite(v)) fail("non-finite value");
        }
    }
}

DenseMatrix spmm_dense(const SparseMatrix& a, const DenseMatrix& x, int n_threads) {
    if (a.n_cols != x.n_rows) throw std::invalid_argument("spmm_dense: dimension mismatch");
    DenseMatrix out(a.n_rows, x.n_cols);

    auto run_cols = [&](Index c0, Index c1) {
        for (Index i = 0; i < a.n_rows; ++i) {
            double* out_row = out.row(i);
            const Index lo = a.row_offsets[static_cast<std::size_t>(i)];
            const Index hi = a.row_offsets[static_cast<std::size_t>(i) + 1];
            for (Index e = lo; e < hi; ++e) {
                const double v = a.values[static_cast<std::size_t>(e)];
                const double* x_row = x.row(a.col_indices[static_cast<std::size_t>(e)]);
                for (Index j = c0; j < c1; ++j) out_row[j] += v * x_row[j];
            }
        }
    };

    const Index nb = std::min<Index>(std::max(n_threads, 1), std::max<Index>(x.n_cols, 1));
    if (nb <= 1) {
        run_cols(0, x.n_cols);
        return out;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(nb));
    for (Index b = 0; b < nb; ++b) {
        const Index c0 = x.n_cols * b / nb;
        const Index c1 = x.n_cols * (b + 1) / nb;
        workers.emplace_back(run_cols, c0, c1);
    }
    for (auto& w : workers) w.join();
    return out;
}

SparseMatrix spgemm(const SparseMatrix& a, const SparseMatrix& b) {
    if (a.n_cols != b.n_rows) throw std::invalid_argument("spgemm: dimension mismatch");
    SparseMatrix out;
    out.n_rows = a.n_rows;
    out.n_cols = b.n_cols;
    out.row_offsets.assign(static_cast<std::size_t>(a.n_rows) + 1, 0);

    std::vector<double> acc(static_cast<std::size_t>(b.n_cols), 0.0);
    std::vector<Index> mark(static_cast<std::size_t>(b.n_cols), -1);
    std::vector<Index> touched;
    for (Index i = 0; i < a.n_rows; ++i) {
        touched.clear();
        for (Index ea = a.row_offsets[static_cast<std::size_t>(i)];
             ea < a.row_offsets[static_cast<std::size_t>(i) + 1]; ++ea) {
            const Index k = a.col_indices[static_cast<std::size_t>(ea)];
            const double va = a.values[static_cast<std::size_t>(ea)];
            for (Index eb = b.row_offsets[static_cast<std::size_t>(k)];
                 eb < b.row_offsets[static_cast<std::size_t>(k) + 1]; ++eb) {
                const Index j = b.col_indices[static_cast<std::size_t>(eb)];
                if (mark[static_cast<std::size_t>(j)] != i) {
                    mark[static_cast<std::size_t>(j)] = i;
                    acc[static_cast<std::size_t>(j)] = 0.0;
                    touched.push_back(j);
                }
                acc[static_cast<std::size_t>(j)] += va * b.values[static_cast<std::size_t>(eb)];
            }
        }
        std::sort(touched.begin(), touched.end());
        for (Index j : touched) {
            const double v = acc[static_cast<std::size_t>(j)];
            if (v != 0.0) {
                out.col_indices.push_back(j);
                out.values.push_back(v);
                ++out.row_offsets[static_cast<std::size_t>(i) + 1];
            }
        }
    }
    for (Index r = 0; r < out.n_rows; ++r)
        out.row_offsets[static_cast<std::size_t>(r) + 1] += out.row_offsets[static_cast<std::size_t>(r)];
    return out;
}

SparseMatrix transpose(const SparseMatrix& a) {
    SparseMatrix out;
    out.n_rows = a.n_cols;
    out.n_cols = a.n_rows;
    out.row_offsets.assign(static_cast<std::size_t>(a.n_cols) + 1, 0);
    out.col_indices.resize(a.values.size());
    out.values.resize(a.values.size());

    for (Index c : a.col_indices) ++out.row_offsets[static_cast<std::size_t>(c) + 1];
    for (Index r = 0; r < out.n_rows; ++r)
        out.row_offsets[static_cast<std::size_t>(r) + 1] += out.row_offsets[static_cast<std::size_t>(r)];

    std::vector<Index> cursor(out.row_offsets.begin(), out.row_offsets.end() - 1);
    for (Index i = 0; i < a.n_rows; ++i) {
        for (Index e = a.row_offsets[static_cast<std::size_t>(i)];
             e < a.row_offsets[static_cast<std::size_t>(i) + 1]; ++e) {
            const Index c = a.col_indices[static_cast<std::size_t>(e)];
            const Index pos = cursor[static_cast<std::size_t>(c)]++;
            out.col_indices[static_cast<std::size_t>(pos)] = i;
            out.values[static_cast<std::size_t>(pos)] = a.values[static_cast<std::size_t>(e)];
        }
    }
    return out;
}

SparseMatrix hadamard(const SparseMatrix& a, const SparseMatrix& b) {
    if (a.n_rows != b.n_rows || a.n_cols != b.n_cols)
        throw std::invalid_argument("hadamard: dimension mismatch");
    SparseMatrix out;
    out.n_rows = a.n_rows;
    out.n_cols = a.n_cols;
    out.row_offsets.assign(static_cast<std::size_t>(a.n_rows) + 1, 0);

    for (Index i = 0; i < a.n_rows; ++i) {
        Index ea = a.row_offsets[static_cast<std::size_t>(i)];
        Index eb = b.row_offsets[static_cast<std::size_t>(i)];
        const Index ea_end = a.row_offsets[static_cast<std::size_t>(i) + 1];
        const Index eb_end = b.row_offsets[static_cast<std::size_t>(i) + 1];
        while (ea < ea_end && eb < eb_end) {
            const Index ca = a.col_indices[static_cast<std::size_t>(ea)];
            const Index cb = b.col_indices[static_cast<std::size_t>(eb)];
            if (ca < cb) {
                ++ea;
            } else if (cb < ca) {
                ++eb;
            } else {
                const double v = a.values[static_cast<std::size_t>(ea)] * b.values[static_cast<std::size_t>(eb)];
                if (v != 0.0) {
                    out.col_indices.push_back(ca);
                    out.values.push_back(v);
                    ++out.row_offsets[static_cast<std::size_t>(i) + 1];
                }
                ++ea;
                ++eb;
            }
        }
    }
    for (Index r = 0; r < out.n_rows; ++r)
        out.row_offsets[static_cast<std::size_t>(r) + 1] += out.row_offsets[static_cast<std::size_t>(r)];
    return out;
}

DegreeVector out_degrees(const SparseMatrix& a) {
    DegreeVector deg(static_cast<std::size_t>(a.n_rows));
    for (Index i = 0; i < a.n_rows; ++i)
        deg[static_cast<std::size_t>(i)] =
            a.row_offsets[static_cast<std::size_t>(i) + 1] - a.row_offsets[static_cast<std::size_t>(i)];
    return deg;
}

namespace {

void check_scale(std::span<const double> d, Index expected, const char* who) {
    if (static_cast<Index>(d.size()) != expected)
        throw std::invalid_argument(std::string(who) + ": scale length mismatch");
    for (double v : d)
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite scale");
}

template <typename ScaleOf>
SparseMatrix scaled(const SparseMatrix& a, ScaleOf scale_of) {
    SparseMatrix out;
    out.n_rows = a.n_rows;
    out.n_cols = a.n_cols;
    out.row_offsets.assign(static_cast<std::size_t>(a.n_rows) + 1, 0);
    for (Index i = 0; i < a.n_rows; ++i) {
        for (Index e = a.row_offsets[static_cast<std::size_t>(i)];
             e < a.row_offsets[static_cast<std::size_t>(i) + 1]; ++e) {
            const Index c = a.col_indices[static_cast<std::size_t>(e)];
            const double v = a.values[static_cast<std::size_t>(e)] * scale_of(i, c);
            if (v != 0.0) {
                out.col_indices.push_back(c);
                out.values.push_back(v);
                ++out.row_offsets[static_cast<std::size_t>(i) + 1];
            }
        }
    }
    for (Index r = 0; r < out.n_rows; ++r)
        out.row_offsets[static_cast<std::size_t>(r) + 1] += out.row_offsets[static_cast<std::size_t>(r)];
    return out;
}

}  // namespace

SparseMatrix scale_rows(const SparseMatrix& a, std::span<const double> d) {
    check_scale(d, a.n_rows, "scale_rows");
    return scaled(a, [&](Index i, Index) { return d[static_cast<std::size_t>(i)]; });
}

SparseMatrix scale_cols(const SparseMatrix& a, std::span<const double> d) {
    check_scale(d, a.n_cols, "scale_cols");
    return scaled(a, [&](Index, Index j) { return d[static_cast<std::size_t>(j)]; });
}

}  // namespace stg
