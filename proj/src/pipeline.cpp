#include "stg/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "io_bytes.hpp"
#include "json.hpp"
#include "stg/rng.hpp"

namespace stg {

namespace {

using nlohmann::json;

constexpr std::uint64_t kSeedStride = 0x9E3779B97F4A7C15ULL;

/// Deterministic stream split: one base seed fans out into independent
/// substreams for layer init, dropout masks, and each head/grid point.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    return Rng(base + kSeedStride * (salt + 1)).next_u64();
}

/// Runs `fn`, tagging any escaping error with the pipeline stage name unless
/// an inner stage tagged it already.
template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        if (!msg.empty() && msg.front() == '[') throw;
        throw std::runtime_error("[" + std::string(name) + "] " + msg);
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os.good()) throw std::runtime_error("write failed for " + path);
}

/// Calls fn(line_number, begin, end) for every non-blank line.
template <typename F>
void for_each_line(const std::string& text, F&& fn) {
    std::size_t pos = 0;
    long line = 0;
    while (pos < text.size()) {
        ++line;
        std::size_t eol = text.find('\n', pos);
        const std::size_t next = eol == std::string::npos ? text.size() : eol + 1;
        std::size_t end = eol == std::string::npos ? text.size() : eol;
        if (end > pos && text[end - 1] == '\r') --end;
        if (end > pos) fn(line, text.data() + pos, text.data() + end);
        pos = next;
    }
}

[[noreturn]] void line_error(const std::string& path, long line, const std::string& msg) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

template <typename Int>
Int parse_int(const char*& p, const char* end, const std::string& path, long line) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    Int v{};
    const auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc()) line_error(path, line, "expected an integer");
    p = res.ptr;
    return v;
}

void expect_line_end(const char* p, const char* end, const std::string& path, long line) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    if (p != end) line_error(path, line, "unexpected trailing characters");
}

}  // namespace

void Dataset::validate() const {
    graph.validate();
    if (graph.n_rows != graph.n_cols) throw std::invalid_argument("Dataset: adjacency must be square");
    if (graph.n_rows != features.n_rows)
        throw std::invalid_argument("Dataset: adjacency and feature row counts differ");
    if (static_cast<Index>(labels.size()) != features.n_rows)
        throw std::invalid_argument("Dataset: label count does not match node count");
    if (n_classes < 1) throw std::invalid_argument("Dataset: n_classes must be >= 1");
    if (!all_finite(features.data)) throw std::invalid_argument("Dataset: non-finite feature value");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < -1 || labels[i] >= n_classes)
            throw std::invalid_argument("Dataset: label out of range at node " + std::to_string(i));

    const std::array<std::pair<const char*, const std::vector<Index>*>, 3> splits = {
        {{"train", &train_idx}, {"val", &val_idx}, {"test", &test_idx}}};
    std::unordered_set<Index> seen;
    for (const auto& [name, idx] : splits) {
        if (idx->empty())
            throw std::invalid_argument(std::string("Dataset: empty ") + name + " split");
        for (Index i : *idx) {
            if (i < 0 || i >= n_nodes())
                throw std::invalid_argument(std::string("Dataset: ") + name +
                                            " index out of range: " + std::to_string(i));
            if (labels[static_cast<std::size_t>(i)] == -1)
                throw std::invalid_argument(std::string("Dataset: ") + name +
                                            " split contains unlabeled node " + std::to_string(i));
            if (!seen.insert(i).second)
                throw std::invalid_argument("Dataset: splits overlap at node " + std::to_string(i));
        }
    }
}

std::string pipeline_head_name(PipelineHead head) {
    switch (head) {
        case PipelineHead::mlp: return "mlp";
        case PipelineHead::gcn: return "gcn";
        case PipelineHead::simple_gcn: return "simple_gcn";
        case PipelineHead::sign: return "sign";
    }
    throw std::logic_error("pipeline_head_name: unknown head");
}

PipelineHead pipeline_head_from_name(const std::string& name) {
    if (name == "mlp") return PipelineHead::mlp;
    if (name == "gcn") return PipelineHead::gcn;
    if (name == "simple_gcn") return PipelineHead::simple_gcn;
    if (name == "sign") return PipelineHead::sign;
    throw std::invalid_argument("unknown head: " + name);
}

bool RunConfig::has_head(PipelineHead head) const {
    return std::find(heads.begin(), heads.end(), head) != heads.end();
}

void RunConfig::validate() const {
    if (heads.empty()) throw std::invalid_argument("RunConfig: no heads enabled");
    for (std::size_t a = 0; a < heads.size(); ++a)
        for (std::size_t b = a + 1; b < heads.size(); ++b)
            if (heads[a] == heads[b])
                throw std::invalid_argument("RunConfig: duplicate head " + pipeline_head_name(heads[a]));
    if (has_head(PipelineHead::simple_gcn)) {
        if (simple_gcn_grid.empty()) throw std::invalid_argument("RunConfig: empty simple_gcn_grid");
        for (int k : simple_gcn_grid)
            if (k < 1) throw std::invalid_argument("RunConfig: simple_gcn k must be >= 1");
    }
    if (has_head(PipelineHead::sign)) {
        if (sign_grid.empty()) throw std::invalid_argument("RunConfig: empty sign_grid");
        for (const auto& [s, p, t] : sign_grid) {
            if (s < 0 || p < 0 || t < 0)
                throw std::invalid_argument("RunConfig: sign powers must be non-negative");
            if (s + p + t < 1) throw std::invalid_argument("RunConfig: sign tuple must have s+p+t >= 1");
        }
    }
    train.validate();
    ppr.validate();
    if (seeds.empty()) throw std::invalid_argument("RunConfig: no seeds");
    if (hidden_dim < 1) throw std::invalid_argument("RunConfig: hidden_dim must be >= 1");
    if (n_threads < 1) throw std::invalid_argument("RunConfig: n_threads must be >= 1");
}

namespace {

double config_double(const json& v, const std::string& name) {
    if (!v.is_number()) throw std::invalid_argument("config: " + name + " must be a number");
    return v.get<double>();
}

int config_int(const json& v, const std::string& name) {
    if (!v.is_number_integer()) throw std::invalid_argument("config: " + name + " must be an integer");
    return v.get<int>();
}

std::uint64_t config_u64(const json& v, const std::string& name) {
    if (!v.is_number_unsigned())
        throw std::invalid_argument("config: " + name + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

bool config_bool(const json& v, const std::string& name) {
    if (!v.is_boolean()) throw std::invalid_argument("config: " + name + " must be a boolean");
    return v.get<bool>();
}

TrainConfig parse_train_section(const json& section) {
    if (!section.is_object()) throw std::invalid_argument("config: train must be an object");
    TrainConfig tc;
    for (const auto& [key, val] : section.items()) {
        if (key == "learning_rate") tc.learning_rate = config_double(val, "train.learning_rate");
        else if (key == "weight_decay") tc.weight_decay = config_double(val, "train.weight_decay");
        else if (key == "max_epochs") tc.max_epochs = config_int(val, "train.max_epochs");
        else if (key == "patience") tc.patience = config_int(val, "train.patience");
        else if (key == "seed") tc.seed = config_u64(val, "train.seed");
        else if (key == "dropout_rate") tc.dropout_rate = config_double(val, "train.dropout_rate");
        else throw std::invalid_argument("config: unknown key 'train." + key + "'");
    }
    return tc;
}

PprParams parse_ppr_section(const json& section) {
    if (!section.is_object()) throw std::invalid_argument("config: ppr must be an object");
    PprParams ppr;
    for (const auto& [key, val] : section.items()) {
        if (key == "alpha") ppr.alpha = config_double(val, "ppr.alpha");
        else if (key == "tol") ppr.tol = config_double(val, "ppr.tol");
        else if (key == "max_iter") ppr.max_iter = config_int(val, "ppr.max_iter");
        else throw std::invalid_argument("config: unknown key 'ppr." + key + "'");
    }
    return ppr;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    if (!doc.is_object()) throw std::invalid_argument("config: top level must be an object");

    RunConfig cfg;
    for (const auto& [key, val] : doc.items()) {
        if (key == "heads") {
            if (!val.is_array()) throw std::invalid_argument("config: heads must be an array");
            cfg.heads.clear();
            for (const json& h : val) {
                if (!h.is_string()) throw std::invalid_argument("config: heads entries must be strings");
                cfg.heads.push_back(pipeline_head_from_name(h.get<std::string>()));
            }
        } else if (key == "simple_gcn_grid") {
            if (!val.is_array()) throw std::invalid_argument("config: simple_gcn_grid must be an array");
            cfg.simple_gcn_grid.clear();
            for (const json& k : val) cfg.simple_gcn_grid.push_back(config_int(k, "simple_gcn_grid entry"));
        } else if (key == "sign_grid") {
            if (!val.is_array()) throw std::invalid_argument("config: sign_grid must be an array");
            cfg.sign_grid.clear();
            for (const json& tuple : val) {
                if (!tuple.is_array() || tuple.size() != 3)
                    throw std::invalid_argument("config: sign_grid entries must be [s, p, t]");
                cfg.sign_grid.push_back({config_int(tuple[0], "sign s"), config_int(tuple[1], "sign p"),
                                         config_int(tuple[2], "sign t")});
            }
        } else if (key == "train") {
            cfg.train = parse_train_section(val);
        } else if (key == "ppr") {
            cfg.ppr = parse_ppr_section(val);
        } else if (key == "symmetrize") {
            cfg.symmetrize = config_bool(val, "symmetrize");
        } else if (key == "seeds") {
            if (!val.is_array()) throw std::invalid_argument("config: seeds must be an array");
            cfg.seeds.clear();
            for (const json& s : val) cfg.seeds.push_back(config_u64(s, "seeds entry"));
        } else if (key == "hidden_dim") {
            cfg.hidden_dim = config_int(val, "hidden_dim");
        } else if (key == "n_threads") {
            cfg.n_threads = config_int(val, "n_threads");
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

DenseMatrix load_feature_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "STGF")
        throw std::runtime_error(path + ": not a feature file (bad magic)");
    const std::uint32_t rows = detail::read_u32(is, "row count");
    const std::uint32_t cols = detail::read_u32(is, "column count");
    if (rows == 0 || cols == 0) throw std::runtime_error(path + ": empty feature matrix");

    DenseMatrix x(static_cast<Index>(rows), static_cast<Index>(cols));
    for (double& v : x.data) v = static_cast<double>(detail::read_f32(is, "feature value"));
    if (is.peek() != std::char_traits<char>::eof())
        throw std::runtime_error(path + ": trailing bytes after feature data");
    if (!all_finite(x.data)) throw std::runtime_error(path + ": non-finite feature value");
    return x;
}

void save_feature_file(const DenseMatrix& x, const std::string& path) {
    if (x.n_rows < 1 || x.n_cols < 1) throw std::invalid_argument("save_feature_file: empty matrix");
    if (x.n_rows > 0xffffffffLL || x.n_cols > 0xffffffffLL)
        throw std::invalid_argument("save_feature_file: dimensions exceed the format");
    if (!all_finite(x.data)) throw std::invalid_argument("save_feature_file: non-finite value");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write("STGF", 4);
    detail::write_u32(os, static_cast<std::uint32_t>(x.n_rows));
    detail::write_u32(os, static_cast<std::uint32_t>(x.n_cols));
    for (double v : x.data) detail::write_f32(os, static_cast<float>(v));
    if (!os.good()) throw std::runtime_error("write failed for " + path);
}

SparseMatrix load_edge_list(const std::string& path, Index n_nodes) {
    const std::string text = read_text_file(path);
    std::vector<Triplet> entries;
    for_each_line(text, [&](long line, const char* p, const char* end) {
        const Index u = parse_int<Index>(p, end, path, line);
        const Index v = parse_int<Index>(p, end, path, line);
        expect_line_end(p, end, path, line);
        if (u < 0 || u >= n_nodes || v < 0 || v >= n_nodes)
            line_error(path, line, "node id out of range for " + std::to_string(n_nodes) + " nodes");
        entries.push_back({u, v, 1.0});
    });
    return SparseMatrix::from_coo(n_nodes, n_nodes, std::move(entries));
}

std::vector<int> load_label_file(const std::string& path) {
    const std::string text = read_text_file(path);
    std::vector<int> labels;
    for_each_line(text, [&](long line, const char* p, const char* end) {
        const int y = parse_int<int>(p, end, path, line);
        expect_line_end(p, end, path, line);
        if (y < -1) line_error(path, line, "label must be a class id or -1");
        labels.push_back(y);
    });
    return labels;
}

std::vector<Index> load_index_file(const std::string& path, Index n_nodes) {
    const std::string text = read_text_file(path);
    std::vector<Index> idx;
    std::unordered_set<Index> seen;
    for_each_line(text, [&](long line, const char* p, const char* end) {
        const Index i = parse_int<Index>(p, end, path, line);
        expect_line_end(p, end, path, line);
        if (i < 0 || i >= n_nodes)
            line_error(path, line, "node index out of range for " + std::to_string(n_nodes) + " nodes");
        if (!seen.insert(i).second)
            line_error(path, line, "duplicate node index " + std::to_string(i));
        idx.push_back(i);
    });
    std::sort(idx.begin(), idx.end());
    return idx;
}

Dataset load_dataset(const std::string& edge_path, const std::string& feature_path,
                     const std::string& label_path, const std::array<std::string, 3>& split_paths) {
    Dataset ds;
    ds.features = load_feature_file(feature_path);
    ds.graph = load_edge_list(edge_path, ds.features.n_rows);
    ds.labels = load_label_file(label_path);
    if (static_cast<Index>(ds.labels.size()) != ds.features.n_rows)
        throw std::runtime_error(label_path + ": " + std::to_string(ds.labels.size()) +
                                 " labels for " + std::to_string(ds.features.n_rows) + " nodes");

    int max_label = -1;
    for (int y : ds.labels) max_label = std::max(max_label, y);
    if (max_label < 0) throw std::runtime_error(label_path + ": no labeled nodes");
    ds.n_classes = max_label + 1;

    ds.train_idx = load_index_file(split_paths[0], ds.n_nodes());
    ds.val_idx = load_index_file(split_paths[1], ds.n_nodes());
    ds.test_idx = load_index_file(split_paths[2], ds.n_nodes());

    std::unordered_set<Index> seen(ds.train_idx.begin(), ds.train_idx.end());
    for (std::size_t part = 1; part < 3; ++part) {
        const std::vector<Index>& idx = part == 1 ? ds.val_idx : ds.test_idx;
        for (Index i : idx)
            if (!seen.insert(i).second)
                throw std::runtime_error(split_paths[part] + ": index " + std::to_string(i) +
                                         " already belongs to another split");
    }
    ds.validate();
    return ds;
}

Splits make_splits(Index n, const std::vector<int>& labels,
                   const std::array<double, 3>& fractions, std::uint64_t seed) {
    if (static_cast<Index>(labels.size()) != n)
        throw std::invalid_argument("make_splits: label count does not match n");
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0) || !std::isfinite(f))
            throw std::invalid_argument("make_splits: fractions must be non-negative");
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("make_splits: fractions must sum to 1");

    std::vector<Index> labeled;
    for (Index i = 0; i < n; ++i)
        if (labels[static_cast<std::size_t>(i)] != -1) labeled.push_back(i);
    if (labeled.empty()) throw std::invalid_argument("make_splits: no labeled nodes");

    Rng rng(seed);
    rng.shuffle(labeled);

    const auto total = static_cast<double>(labeled.size());
    const auto n_train = static_cast<std::size_t>(fractions[0] * total);
    const auto n_val = static_cast<std::size_t>(fractions[1] * total);
    const std::size_t n_test = labeled.size() - n_train - n_val;
    if (n_train == 0 || n_val == 0 || n_test == 0)
        throw std::invalid_argument("make_splits: a split would be empty");

    Splits out;
    out.train.assign(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_train),
                   labeled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), labeled.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

Dataset generate_synthetic(Index n, Index n_classes, Index d, double p_intra, double p_inter,
                           double noise, std::uint64_t seed) {
    if (n < 1 || n_classes < 1 || d < 1) throw std::invalid_argument("generate_synthetic: bad sizes");
    if (n < n_classes) throw std::invalid_argument("generate_synthetic: fewer nodes than classes");
    if (!(p_inter >= 0.0 && p_inter < p_intra && p_intra <= 1.0))
        throw std::invalid_argument("generate_synthetic: need 0 <= p_inter < p_intra <= 1");
    if (!(noise >= 0.0) || !std::isfinite(noise))
        throw std::invalid_argument("generate_synthetic: noise must be non-negative");

    Dataset ds;
    ds.n_classes = n_classes;
    ds.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        ds.labels[static_cast<std::size_t>(i)] = static_cast<int>(i * n_classes / n);

    Rng rng(seed);

    DenseMatrix centroids(n_classes, d);
    for (Index c = 0; c < n_classes; ++c) {
        double* row = centroids.row(c);
        double norm_sq = 0.0;
        for (Index j = 0; j < d; ++j) {
            row[j] = rng.normal();
            norm_sq += row[j] * row[j];
        }
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (Index j = 0; j < d; ++j) row[j] *= inv;
    }

    ds.features = DenseMatrix(n, d);
    for (Index i = 0; i < n; ++i) {
        const double* cent = centroids.row(ds.labels[static_cast<std::size_t>(i)]);
        double* row = ds.features.row(i);
        for (Index j = 0; j < d; ++j) row[j] = cent[j] + noise * rng.normal();
    }

    std::vector<Triplet> edges;
    for (Index i = 0; i < n; ++i) {
        const int ci = ds.labels[static_cast<std::size_t>(i)];
        for (Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double p = ci == ds.labels[static_cast<std::size_t>(j)] ? p_intra : p_inter;
            if (rng.bernoulli(p)) edges.push_back({i, j, 1.0});
        }
    }
    ds.graph = SparseMatrix::from_coo(n, n, std::move(edges));

    Splits splits = make_splits(n, ds.labels, {0.6, 0.2, 0.2}, seed);
    ds.train_idx = std::move(splits.train);
    ds.val_idx = std::move(splits.val);
    ds.test_idx = std::move(splits.test);
    ds.validate();
    return ds;
}

void save_dataset_files(const Dataset& ds, const std::string& out_dir) {
    ds.validate();
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);

    std::string edges;
    for (Index i = 0; i < ds.graph.n_rows; ++i)
        for (Index e = ds.graph.row_offsets[static_cast<std::size_t>(i)];
             e < ds.graph.row_offsets[static_cast<std::size_t>(i) + 1]; ++e) {
            edges += std::to_string(i);
            edges += ' ';
            edges += std::to_string(ds.graph.col_indices[static_cast<std::size_t>(e)]);
            edges += '\n';
        }
    write_text_file((dir / "edges.txt").string(), edges);

    save_feature_file(ds.features, (dir / "features.stgf").string());

    std::string labels;
    for (int y : ds.labels) {
        labels += std::to_string(y);
        labels += '\n';
    }
    write_text_file((dir / "labels.txt").string(), labels);

    const std::array<std::pair<const char*, const std::vector<Index>*>, 3> parts = {
        {{"train.txt", &ds.train_idx}, {"val.txt", &ds.val_idx}, {"test.txt", &ds.test_idx}}};
    for (const auto& [name, idx] : parts) {
        std::string text;
        for (Index i : *idx) {
            text += std::to_string(i);
            text += '\n';
        }
        write_text_file((dir / name).string(), text);
    }
}

namespace {

constexpr std::array<PipelineHead, 4> kHeadOrder = {PipelineHead::mlp, PipelineHead::gcn,
                                                    PipelineHead::simple_gcn, PipelineHead::sign};

int head_ordinal(PipelineHead head) { return static_cast<int>(head); }

/// Everything run_cascade shares across seeds: standardized features, the GCN
/// operator, and the grid-resolved diffusion features.
struct PreparedInputs {
    DenseMatrix standardized;
    SparseMatrix gcn_adj;
    DenseMatrix simple_feats;
    DenseMatrix sign_feats;
    int chosen_k = 0;
    std::array<int, 3> chosen_sign = {0, 0, 0};
    bool ppr_converged = true;
    std::vector<SelectionResult::Evaluated> evaluated;
};

/// Initializes and trains one head, returning its best validation accuracy
/// and (optionally) the trained model. `salt` keeps every head and grid point
/// on its own seed substream.
TrainResult train_one(const Dataset& ds, const RunConfig& cfg, HeadKind kind,
                      const DenseMatrix& feats, const SparseMatrix* adj, std::uint64_t run_seed,
                      int salt) {
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(run_seed, static_cast<std::uint64_t>(2 * salt + 1));
    if (kind == HeadKind::logistic) tc.dropout_rate = 0.0;
    Rng init_rng(derive_seed(run_seed, static_cast<std::uint64_t>(2 * salt)));
    const ModelHead head =
        make_head(kind, feats.n_cols, cfg.hidden_dim, ds.n_classes, tc.dropout_rate, init_rng);
    return train(head, feats, adj, ds.labels, ds.train_idx, ds.val_idx, tc);
}

std::string sign_label(const std::array<int, 3>& t) {
    return "(s,p,t)=(" + std::to_string(t[0]) + "," + std::to_string(t[1]) + "," +
           std::to_string(t[2]) + ")";
}

/// Concatenates [x, gcn1..s, ppr1..p, tri1..t] out of a block set built at
/// the grid maxima (the recursions make prefix blocks identical to a direct
/// build at the smaller tuple).
DenseMatrix concat_prefix(const DiffusedFeatures& all, int s_max, int p_max,
                          const std::array<int, 3>& tuple) {
    DiffusedFeatures subset;
    subset.n_nodes = all.n_nodes;
    subset.blocks.push_back(all.blocks[0]);
    for (int m = 1; m <= tuple[0]; ++m) subset.blocks.push_back(all.blocks[static_cast<std::size_t>(m)]);
    for (int m = 1; m <= tuple[1]; ++m)
        subset.blocks.push_back(all.blocks[static_cast<std::size_t>(s_max + m)]);
    for (int m = 1; m <= tuple[2]; ++m)
        subset.blocks.push_back(all.blocks[static_cast<std::size_t>(s_max + p_max + m)]);
    return subset.concat();
}

PreparedInputs prepare_inputs(const Dataset& ds, const RunConfig& cfg) {
    PreparedInputs prep;
    prep.standardized = stage("standardize", [&] {
        return standardize_features(ds.features, ds.train_idx).first;
    });

    const bool needs_gcn_operator =
        cfg.has_head(PipelineHead::gcn) || cfg.has_head(PipelineHead::simple_gcn);
    if (needs_gcn_operator) {
        prep.gcn_adj = stage("diffuse", [&] {
            return gcn_normalize(cfg.symmetrize ? symmetrize(ds.graph) : ds.graph);
        });
    }
    const std::uint64_t select_seed = cfg.seeds.front();

    if (cfg.has_head(PipelineHead::simple_gcn)) {
        const int k_max = *std::max_element(cfg.simple_gcn_grid.begin(), cfg.simple_gcn_grid.end());
        const std::vector<DenseMatrix> powers = stage("diffuse", [&] {
            return apply_powers(prep.gcn_adj, prep.standardized, k_max, cfg.n_threads);
        });
        if (cfg.simple_gcn_grid.size() == 1) {
            prep.chosen_k = cfg.simple_gcn_grid.front();
        } else {
            stage("select", [&] {
                double best_acc = -1.0;
                for (std::size_t g = 0; g < cfg.simple_gcn_grid.size(); ++g) {
                    const int k = cfg.simple_gcn_grid[g];
                    const TrainResult r =
                        train_one(ds, cfg, HeadKind::logistic, powers[static_cast<std::size_t>(k - 1)],
                                  nullptr, select_seed, 100 + static_cast<int>(g));
                    prep.evaluated.push_back({"k=" + std::to_string(k), r.best_val_accuracy});
                    const bool better = r.best_val_accuracy > best_acc ||
                                        (r.best_val_accuracy == best_acc && k < prep.chosen_k);
                    if (better) {
                        best_acc = r.best_val_accuracy;
                        prep.chosen_k = k;
                    }
                }
            });
        }
        prep.simple_feats = powers[static_cast<std::size_t>(prep.chosen_k - 1)];
    }

    if (cfg.has_head(PipelineHead::sign)) {
        int s_max = 0, p_max = 0, t_max = 0;
        for (const auto& [s, p, t] : cfg.sign_grid) {
            s_max = std::max(s_max, s);
            p_max = std::max(p_max, p);
            t_max = std::max(t_max, t);
        }
        SignConfig big;
        big.s = s_max;
        big.p = p_max;
        big.t = t_max;
        big.ppr = cfg.ppr;
        const DiffusedFeatures blocks = stage("diffuse", [&] {
            return build_sign_features(ds.graph, prep.standardized, big, cfg.symmetrize, cfg.n_threads);
        });
        prep.ppr_converged = blocks.ppr_converged;

        if (cfg.sign_grid.size() == 1) {
            prep.chosen_sign = cfg.sign_grid.front();
        } else {
            stage("select", [&] {
                double best_acc = -1.0;
                int best_total = 0;
                for (std::size_t g = 0; g < cfg.sign_grid.size(); ++g) {
                    const std::array<int, 3>& tuple = cfg.sign_grid[g];
                    const DenseMatrix feats = concat_prefix(blocks, s_max, p_max, tuple);
                    const TrainResult r = train_one(ds, cfg, HeadKind::mlp, feats, nullptr,
                                                    select_seed, 200 + static_cast<int>(g));
                    prep.evaluated.push_back({sign_label(tuple), r.best_val_accuracy});
                    const int total = tuple[0] + tuple[1] + tuple[2];
                    const bool better =
                        r.best_val_accuracy > best_acc ||
                        (r.best_val_accuracy == best_acc && total < best_total);
                    if (better) {
                        best_acc = r.best_val_accuracy;
                        best_total = total;
                        prep.chosen_sign = tuple;
                    }
                }
            });
        }
        prep.sign_feats = concat_prefix(blocks, s_max, p_max, prep.chosen_sign);
    }
    return prep;
}

/// Which classifier a pipeline head uses and what it consumes.
struct HeadPlan {
    HeadKind kind = HeadKind::mlp;
    const DenseMatrix* feats = nullptr;
    const SparseMatrix* adj = nullptr;
};

HeadPlan plan_for(PipelineHead head, const Dataset& ds, const PreparedInputs& prep) {
    switch (head) {
        case PipelineHead::mlp: return {HeadKind::mlp, &ds.features, nullptr};
        case PipelineHead::gcn: return {HeadKind::gcn, &ds.features, &prep.gcn_adj};
        case PipelineHead::simple_gcn: return {HeadKind::logistic, &prep.simple_feats, nullptr};
        case PipelineHead::sign: return {HeadKind::mlp, &prep.sign_feats, nullptr};
    }
    throw std::logic_error("plan_for: unknown head");
}

std::vector<EnsembleBundle::Member> train_seed_members(const Dataset& ds, const RunConfig& cfg,
                                                       const PreparedInputs& prep,
                                                       std::uint64_t run_seed) {
    return stage("train", [&] {
        std::vector<EnsembleBundle::Member> members;
        for (PipelineHead head : kHeadOrder) {
            if (!cfg.has_head(head)) continue;
            const HeadPlan plan = plan_for(head, ds, prep);
            const TrainResult r =
                train_one(ds, cfg, plan.kind, *plan.feats, plan.adj, run_seed, head_ordinal(head));
            members.push_back({pipeline_head_name(head), predict(r.model, *plan.feats, plan.adj)});
        }
        return members;
    });
}

}  // namespace

SelectionResult select_model(const Dataset& ds, const RunConfig& cfg) {
    ds.validate();
    cfg.validate();
    const PreparedInputs prep = prepare_inputs(ds, cfg);
    SelectionResult out;
    out.simple_gcn_k = prep.chosen_k;
    out.sign = prep.chosen_sign;
    out.evaluated = prep.evaluated;
    return out;
}

std::vector<EnsembleBundle::Member> train_members(const Dataset& ds, const RunConfig& cfg,
                                                  std::uint64_t seed) {
    ds.validate();
    cfg.validate();
    const PreparedInputs prep = prepare_inputs(ds, cfg);
    return train_seed_members(ds, cfg, prep, seed);
}

SingleHeadResult train_single(const Dataset& ds, const RunConfig& cfg, PipelineHead head,
                              std::uint64_t seed) {
    ds.validate();
    RunConfig only = cfg;
    only.heads = {head};
    only.validate();
    const PreparedInputs prep = prepare_inputs(ds, only);
    const HeadPlan plan = plan_for(head, ds, prep);
    return stage("train", [&] {
        const TrainResult r =
            train_one(ds, only, plan.kind, *plan.feats, plan.adj, seed, head_ordinal(head));
        SingleHeadResult out;
        out.head = head;
        out.model = r.model;
        out.predictions = predict(r.model, *plan.feats, plan.adj);
        out.val_accuracy = r.best_val_accuracy;
        out.test_accuracy = accuracy(out.predictions, ds.labels, ds.test_idx);
        return out;
    });
}

RunReport run_cascade(const Dataset& ds, const RunConfig& cfg) {
    ds.validate();
    cfg.validate();
    const PreparedInputs prep = prepare_inputs(ds, cfg);

    RunReport report;
    report.seeds = cfg.seeds;
    report.simple_gcn_k = prep.chosen_k;
    report.sign = prep.chosen_sign;
    report.ppr_converged = prep.ppr_converged;
    for (PipelineHead head : kHeadOrder)
        if (cfg.has_head(head)) report.rows.push_back({pipeline_head_name(head), {}, 0.0, 0.0});
    report.rows.push_back({"ensemble", {}, 0.0, 0.0});

    for (std::uint64_t seed : cfg.seeds) {
        const std::vector<EnsembleBundle::Member> members = train_seed_members(ds, cfg, prep, seed);
        stage("ensemble", [&] {
            for (std::size_t m = 0; m < members.size(); ++m)
                report.rows[m].seed_accuracies.push_back(
                    accuracy(members[m].predictions, ds.labels, ds.test_idx));
            const EnsembleBundle bundle{members, ds.n_classes};
            report.rows.back().seed_accuracies.push_back(
                accuracy(mean_pool(bundle), ds.labels, ds.test_idx));
        });
    }

    for (RunReport::Row& row : report.rows) {
        double mean = 0.0;
        for (double a : row.seed_accuracies) mean += a;
        mean /= static_cast<double>(row.seed_accuracies.size());
        double var = 0.0;
        for (double a : row.seed_accuracies) var += (a - mean) * (a - mean);
        var /= static_cast<double>(row.seed_accuracies.size());
        row.mean = mean;
        row.stddev = std::sqrt(var);
    }
    return report;
}

namespace {

std::string format_accuracy(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

std::string RunReport::to_text() const {
    std::string out = "seeds:";
    for (std::uint64_t s : seeds) out += " " + std::to_string(s);
    out += '\n';
    if (simple_gcn_k > 0) out += "simple_gcn k: " + std::to_string(simple_gcn_k) + "\n";
    if (sign[0] + sign[1] + sign[2] > 0) {
        out += "sign " + sign_label(sign) + "\n";
        out += std::string("ppr converged: ") + (ppr_converged ? "yes" : "no") + "\n";
    }

    std::size_t width = std::string("head").size();
    for (const Row& r : rows) width = std::max(width, r.name.size());
    out += "head";
    out.append(width - 4 + 2, ' ');
    out += "test_acc\n";
    for (const Row& r : rows) {
        out += r.name;
        out.append(width - r.name.size() + 2, ' ');
        out += format_accuracy(r.mean) + " +/- " + format_accuracy(r.stddev) + "\n";
    }
    return out;
}

std::string RunReport::to_records() const {
    std::string out;
    json header{{"type", "run"},
                {"seeds", seeds},
                {"simple_gcn_k", simple_gcn_k},
                {"sign", sign},
                {"ppr_converged", ppr_converged}};
    out += header.dump();
    out += '\n';
    for (const Row& r : rows) {
        json rec{{"type", "row"},
                 {"head", r.name},
                 {"seed_accuracies", r.seed_accuracies},
                 {"mean", r.mean},
                 {"stddev", r.stddev}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

}  // namespace stg
