#include "stg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "io_bytes.hpp"
#include "stg/ensemble.hpp"

namespace stg {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

Index expected_layer_count(HeadKind kind) { return kind == HeadKind::logistic ? 1 : 4; }

/// C = A * B with a fixed i-k-j accumulation order, so every output element
/// is summed in ascending-k order no matter how the build vectorizes it.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.n_cols != b.n_rows) throw std::logic_error("matmul: inner dimension mismatch");
    DenseMatrix c(a.n_rows, b.n_cols);
    for (Index i = 0; i < a.n_rows; ++i) {
        double* crow = c.row(i);
        for (Index k = 0; k < a.n_cols; ++k) {
            const double aik = a(i, k);
            const double* brow = b.row(k);
            for (Index j = 0; j < b.n_cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

/// C = A^T * B, accumulated in ascending row order of A.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.n_rows != b.n_rows) throw std::logic_error("matmul_tn: row count mismatch");
    DenseMatrix c(a.n_cols, b.n_cols);
    for (Index k = 0; k < a.n_rows; ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (Index i = 0; i < a.n_cols; ++i) {
            double* crow = c.row(i);
            const double aki = arow[i];
            for (Index j = 0; j < b.n_cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

/// C = A * B^T as row-by-row dot products.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.n_cols != b.n_cols) throw std::logic_error("matmul_nt: column count mismatch");
    DenseMatrix c(a.n_rows, b.n_rows);
    for (Index i = 0; i < a.n_rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (Index j = 0; j < b.n_rows; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (Index k = 0; k < a.n_cols; ++k) acc += arow[k] * brow[k];
            crow[j] = acc;
        }
    }
    return c;
}

void check_index_set(const std::vector<Index>& idx, Index n, const char* what) {
    if (idx.empty()) throw std::invalid_argument(std::string(what) + ": empty index set");
    for (Index i : idx)
        if (i < 0 || i >= n) throw std::invalid_argument(std::string(what) + ": index out of range");
}

void check_labels_on(const std::vector<int>& labels, const std::vector<Index>& idx, Index n_classes,
                     const char* what) {
    for (Index i : idx) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= n_classes)
            throw std::invalid_argument(std::string(what) + ": label out of range at node " +
                                        std::to_string(i));
    }
}

/// Intermediate state of one pass, kept for backpropagation.
struct ForwardCache {
    // propagated[l]: the matrix actually multiplied by layer l's weights
    // (adjacency-propagated, dropout-masked input). activations[l] for l >= 1
    // is the relu output feeding layer l; activations[0] is unused.
    std::vector<DenseMatrix> propagated;
    std::vector<DenseMatrix> activations;
    // drop_scale[l]: per-element factor (0 or 1/keep) applied to layer l's
    // input; empty when dropout was inactive.
    std::vector<std::vector<double>> drop_scale;
    DenseMatrix logits;
    DenseMatrix probs;
};

void softmax_rows(const DenseMatrix& logits, DenseMatrix& probs) {
    probs = DenseMatrix(logits.n_rows, logits.n_cols);
    for (Index i = 0; i < logits.n_rows; ++i) {
        const double* in = logits.row(i);
        double* out = probs.row(i);
        double mx = in[0];
        for (Index j = 1; j < logits.n_cols; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (Index j = 0; j < logits.n_cols; ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        const double inv = 1.0 / sum;
        for (Index j = 0; j < logits.n_cols; ++j) out[j] *= inv;
    }
}

ForwardCache run_forward(const ModelHead& model, const DenseMatrix& features,
                         const SparseMatrix* adj, bool train_mode, std::uint64_t mask_seed) {
    const std::size_t n_layers = model.layers.size();
    const bool use_dropout = train_mode && model.dropout_rate > 0.0;
    const double keep = 1.0 - model.dropout_rate;

    ForwardCache cache;
    cache.propagated.resize(n_layers);
    cache.activations.resize(n_layers);
    if (use_dropout) cache.drop_scale.resize(n_layers);

    Rng mask_rng(mask_seed);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const DenseMatrix& input = l == 0 ? features : cache.activations[l];
        DenseMatrix carried = input;
        if (use_dropout) {
            std::vector<double>& scale = cache.drop_scale[l];
            scale.resize(carried.data.size());
            for (std::size_t e = 0; e < carried.data.size(); ++e) {
                scale[e] = mask_rng.uniform() < model.dropout_rate ? 0.0 : 1.0 / keep;
                carried.data[e] *= scale[e];
            }
        }
        cache.propagated[l] =
            model.uses_adjacency() ? spmm_dense(*adj, carried) : std::move(carried);

        DenseMatrix z = matmul(cache.propagated[l], model.layers[l].weights);
        const std::vector<double>& bias = model.layers[l].bias;
        for (Index i = 0; i < z.n_rows; ++i) {
            double* row = z.row(i);
            for (Index j = 0; j < z.n_cols; ++j) row[j] += bias[static_cast<std::size_t>(j)];
        }
        if (l + 1 < n_layers) {
            for (double& v : z.data) v = v > 0.0 ? v : 0.0;
            cache.activations[l + 1] = std::move(z);
        } else {
            cache.logits = std::move(z);
        }
    }
    softmax_rows(cache.logits, cache.probs);
    return cache;
}

double squared_parameter_norm(const ModelHead& model) {
    double acc = 0.0;
    for (const DenseLayer& layer : model.layers) {
        for (double w : layer.weights.data) acc += w * w;
        for (double b : layer.bias) acc += b * b;
    }
    return acc;
}

double data_loss_from_logits(const DenseMatrix& logits, const std::vector<int>& labels,
                             const std::vector<Index>& idx) {
    double acc = 0.0;
    for (Index i : idx) {
        const double* row = logits.row(i);
        double mx = row[0];
        for (Index j = 1; j < logits.n_cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (Index j = 0; j < logits.n_cols; ++j) sum += std::exp(row[j] - mx);
        acc += mx + std::log(sum) - row[labels[static_cast<std::size_t>(i)]];
    }
    return acc / static_cast<double>(idx.size());
}

/// Loss and exact gradients of
///   mean_{i in idx} -log softmax(logits)[i][y_i] + wd/2 * ||theta||^2
/// at the given (optionally dropout-masked) pass. `adj_t` is the transpose of
/// `adj`, required only for GCN heads.
LossGrads backprop(const ModelHead& model, const DenseMatrix& features, const SparseMatrix* adj,
                   const SparseMatrix* adj_t, const std::vector<int>& labels,
                   const std::vector<Index>& idx, double weight_decay, bool train_mode,
                   std::uint64_t mask_seed) {
    const ForwardCache cache = run_forward(model, features, adj, train_mode, mask_seed);
    const std::size_t n_layers = model.layers.size();
    const double inv_count = 1.0 / static_cast<double>(idx.size());

    LossGrads out;
    out.loss = data_loss_from_logits(cache.logits, labels, idx) +
               0.5 * weight_decay * squared_parameter_norm(model);
    out.layers.resize(n_layers);

    // d(loss)/d(logits): (softmax - onehot)/|idx| on scored rows, zero elsewhere.
    DenseMatrix delta(cache.logits.n_rows, cache.logits.n_cols);
    for (Index i : idx) {
        const double* p = cache.probs.row(i);
        double* d = delta.row(i);
        for (Index j = 0; j < cache.logits.n_cols; ++j) d[j] = p[j] * inv_count;
        d[labels[static_cast<std::size_t>(i)]] -= inv_count;
    }

    for (std::size_t l = n_layers; l-- > 0;) {
        const DenseLayer& layer = model.layers[l];
        LayerGrads& g = out.layers[l];

        g.weights = matmul_tn(cache.propagated[l], delta);
        for (std::size_t e = 0; e < g.weights.data.size(); ++e)
            g.weights.data[e] += weight_decay * layer.weights.data[e];

        g.bias.assign(layer.bias.size(), 0.0);
        for (Index i = 0; i < delta.n_rows; ++i) {
            const double* row = delta.row(i);
            for (Index j = 0; j < delta.n_cols; ++j) g.bias[static_cast<std::size_t>(j)] += row[j];
        }
        for (std::size_t j = 0; j < g.bias.size(); ++j)
            g.bias[j] += weight_decay * layer.bias[j];

        if (l == 0) break;

        DenseMatrix upstream = matmul_nt(delta, layer.weights);
        if (model.uses_adjacency()) upstream = spmm_dense(*adj_t, upstream);
        if (!cache.drop_scale.empty())
            for (std::size_t e = 0; e < upstream.data.size(); ++e)
                upstream.data[e] *= cache.drop_scale[l][e];

        // Through the rectifier that produced this layer's input.
        const DenseMatrix& act = cache.activations[l];
        for (std::size_t e = 0; e < upstream.data.size(); ++e)
            if (!(act.data[e] > 0.0)) upstream.data[e] = 0.0;
        delta = std::move(upstream);
    }
    return out;
}

void check_forward_inputs(const ModelHead& model, const DenseMatrix& features,
                          const SparseMatrix* adj) {
    if (model.layers.empty()) throw std::invalid_argument("forward: model has no layers");
    if (features.n_cols != model.in_dim())
        throw std::invalid_argument("forward: feature width does not match the first layer");
    if (model.uses_adjacency()) {
        if (adj == nullptr) throw std::invalid_argument("forward: gcn head requires an adjacency");
        if (adj->n_rows != adj->n_cols || adj->n_rows != features.n_rows)
            throw std::invalid_argument("forward: adjacency does not match feature rows");
    } else if (adj != nullptr) {
        throw std::invalid_argument("forward: adjacency given to a non-gcn head");
    }
}

struct AdamState {
    std::vector<LayerGrads> m;
    std::vector<LayerGrads> v;
};

AdamState make_adam_state(const ModelHead& model) {
    AdamState s;
    s.m.resize(model.layers.size());
    s.v.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const DenseLayer& layer = model.layers[l];
        s.m[l].weights = DenseMatrix(layer.weights.n_rows, layer.weights.n_cols);
        s.v[l].weights = DenseMatrix(layer.weights.n_rows, layer.weights.n_cols);
        s.m[l].bias.assign(layer.bias.size(), 0.0);
        s.v[l].bias.assign(layer.bias.size(), 0.0);
    }
    return s;
}

void adam_update(double& param, double grad, double& m, double& v, double lr, double corr1,
                 double corr2) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    param -= lr * (m / corr1) / (std::sqrt(v / corr2) + eps);
}

void adam_step(ModelHead& model, const LossGrads& grads, AdamState& state, double lr, int t) {
    const double corr1 = 1.0 - std::pow(0.9, t);
    const double corr2 = 1.0 - std::pow(0.999, t);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        DenseLayer& layer = model.layers[l];
        for (std::size_t e = 0; e < layer.weights.data.size(); ++e)
            adam_update(layer.weights.data[e], grads.layers[l].weights.data[e],
                        state.m[l].weights.data[e], state.v[l].weights.data[e], lr, corr1, corr2);
        for (std::size_t e = 0; e < layer.bias.size(); ++e)
            adam_update(layer.bias[e], grads.layers[l].bias[e], state.m[l].bias[e],
                        state.v[l].bias[e], lr, corr1, corr2);
    }
}

}  // namespace

std::string head_kind_name(HeadKind kind) {
    switch (kind) {
        case HeadKind::logistic: return "logistic";
        case HeadKind::mlp: return "mlp";
        case HeadKind::gcn: return "gcn";
    }
    throw std::logic_error("head_kind_name: unknown kind");
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "logistic") return HeadKind::logistic;
    if (name == "mlp") return HeadKind::mlp;
    if (name == "gcn") return HeadKind::gcn;
    throw std::invalid_argument("unknown head kind: " + name);
}

void ModelHead::validate() const {
    if (static_cast<Index>(layers.size()) != expected_layer_count(kind))
        throw std::invalid_argument("ModelHead: wrong layer count for kind " + head_kind_name(kind));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& layer = layers[l];
        if (layer.weights.n_rows < 1 || layer.weights.n_cols < 1)
            throw std::invalid_argument("ModelHead: empty layer");
        if (static_cast<Index>(layer.bias.size()) != layer.out_dim())
            throw std::invalid_argument("ModelHead: bias length does not match layer width");
        if (l > 0 && layers[l - 1].out_dim() != layer.in_dim())
            throw std::invalid_argument("ModelHead: layer dimensions do not chain");
        if (!all_finite(layer.weights.data) || !all_finite(layer.bias))
            throw std::invalid_argument("ModelHead: non-finite parameter");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("ModelHead: dropout_rate must lie in [0, 1)");
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("TrainConfig: learning_rate must be non-negative");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
        throw std::invalid_argument("TrainConfig: weight_decay must be non-negative");
    if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    if (patience < 1 || patience > max_epochs)
        throw std::invalid_argument("TrainConfig: patience must lie in [1, max_epochs]");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("TrainConfig: dropout_rate must lie in [0, 1)");
}

void PredictionMatrix::validate() const {
    for (Index i = 0; i < probs.n_rows; ++i) {
        const double* row = probs.row(i);
        double sum = 0.0;
        for (Index j = 0; j < probs.n_cols; ++j) {
            if (!(row[j] >= 0.0) || !std::isfinite(row[j]))
                throw std::invalid_argument("PredictionMatrix: negative or non-finite entry");
            sum += row[j];
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("PredictionMatrix: row does not sum to 1");
    }
}

std::pair<DenseMatrix, Standardization> standardize_features(const DenseMatrix& x,
                                                             const std::vector<Index>& fit_rows) {
    check_index_set(fit_rows, x.n_rows, "standardize_features");

    Standardization stats;
    stats.means.assign(static_cast<std::size_t>(x.n_cols), 0.0);
    stats.stds.assign(static_cast<std::size_t>(x.n_cols), 0.0);
    const double inv_n = 1.0 / static_cast<double>(fit_rows.size());

    for (Index i : fit_rows) {
        const double* row = x.row(i);
        for (Index j = 0; j < x.n_cols; ++j) stats.means[static_cast<std::size_t>(j)] += row[j];
    }
    for (double& m : stats.means) m *= inv_n;
    for (Index i : fit_rows) {
        const double* row = x.row(i);
        for (Index j = 0; j < x.n_cols; ++j) {
            const double d = row[j] - stats.means[static_cast<std::size_t>(j)];
            stats.stds[static_cast<std::size_t>(j)] += d * d;
        }
    }
    for (double& s : stats.stds) s = std::sqrt(s * inv_n);

    DenseMatrix out(x.n_rows, x.n_cols);
    for (Index i = 0; i < x.n_rows; ++i) {
        const double* src = x.row(i);
        double* dst = out.row(i);
        for (Index j = 0; j < x.n_cols; ++j) {
            const std::size_t c = static_cast<std::size_t>(j);
            dst[j] = stats.stds[c] < 1e-12 ? 0.0 : (src[j] - stats.means[c]) / stats.stds[c];
        }
    }
    return {std::move(out), std::move(stats)};
}

ModelHead make_head(HeadKind kind, Index in_dim, Index hidden_dim, Index n_classes,
                    double dropout_rate, Rng& rng) {
    if (in_dim < 1 || n_classes < 1) throw std::invalid_argument("make_head: bad dimensions");
    if (kind != HeadKind::logistic && hidden_dim < 1)
        throw std::invalid_argument("make_head: hidden_dim must be >= 1");

    std::vector<std::pair<Index, Index>> dims;
    if (kind == HeadKind::logistic) {
        dims = {{in_dim, n_classes}};
    } else {
        dims = {{in_dim, hidden_dim}, {hidden_dim, hidden_dim}, {hidden_dim, hidden_dim},
                {hidden_dim, n_classes}};
    }

    ModelHead model;
    model.kind = kind;
    model.dropout_rate = dropout_rate;
    for (auto [fan_in, fan_out] : dims) {
        DenseLayer layer;
        layer.weights = DenseMatrix(fan_in, fan_out);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& w : layer.weights.data) w = rng.uniform(-limit, limit);
        layer.bias.assign(static_cast<std::size_t>(fan_out), 0.0);
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

PredictionMatrix forward(const ModelHead& model, const DenseMatrix& features,
                         const SparseMatrix* adj, bool train_mode, std::uint64_t mask_seed) {
    check_forward_inputs(model, features, adj);
    ForwardCache cache = run_forward(model, features, adj, train_mode, mask_seed);
    return PredictionMatrix{std::move(cache.probs)};
}

LossGrads loss_and_gradients(const ModelHead& model, const DenseMatrix& features,
                             const SparseMatrix* adj, const std::vector<int>& labels,
                             const std::vector<Index>& idx, double weight_decay) {
    check_forward_inputs(model, features, adj);
    if (static_cast<Index>(labels.size()) != features.n_rows)
        throw std::invalid_argument("loss_and_gradients: label count does not match rows");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("loss_and_gradients: negative weight_decay");
    check_index_set(idx, features.n_rows, "loss_and_gradients");
    check_labels_on(labels, idx, model.n_classes(), "loss_and_gradients");

    if (model.uses_adjacency()) {
        const SparseMatrix adj_t = transpose(*adj);
        return backprop(model, features, adj, &adj_t, labels, idx, weight_decay, false, 0);
    }
    return backprop(model, features, nullptr, nullptr, labels, idx, weight_decay, false, 0);
}

TrainResult train(const ModelHead& init, const DenseMatrix& features, const SparseMatrix* adj,
                  const std::vector<int>& labels, const std::vector<Index>& train_idx,
                  const std::vector<Index>& val_idx, const TrainConfig& cfg) {
    cfg.validate();
    init.validate();
    check_forward_inputs(init, features, adj);
    if (static_cast<Index>(labels.size()) != features.n_rows)
        throw std::invalid_argument("train: label count does not match rows");
    check_index_set(train_idx, features.n_rows, "train: train_idx");
    check_index_set(val_idx, features.n_rows, "train: val_idx");
    check_labels_on(labels, train_idx, init.n_classes(), "train");
    check_labels_on(labels, val_idx, init.n_classes(), "train");
    {
        std::unordered_set<Index> seen(train_idx.begin(), train_idx.end());
        for (Index i : val_idx)
            if (seen.count(i)) throw std::invalid_argument("train: train and val indices overlap");
    }

    ModelHead model = init;
    model.dropout_rate = cfg.dropout_rate;

    SparseMatrix adj_t_storage;
    const SparseMatrix* adj_t = nullptr;
    if (model.uses_adjacency()) {
        adj_t_storage = transpose(*adj);
        adj_t = &adj_t_storage;
    }

    AdamState adam = make_adam_state(model);
    Rng mask_stream(cfg.seed);

    TrainResult result;
    result.model = model;
    double best_val = -1.0;
    int epochs_since_improve = 0;
    int last_finite_epoch = -1;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const std::uint64_t mask_seed = mask_stream.next_u64();
        const LossGrads grads = backprop(model, features, adj, adj_t, labels, train_idx,
                                         cfg.weight_decay, cfg.dropout_rate > 0.0, mask_seed);
        if (!std::isfinite(grads.loss))
            throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                                    "; last finite epoch " + std::to_string(last_finite_epoch),
                                last_finite_epoch);
        adam_step(model, grads, adam, cfg.learning_rate, epoch + 1);

        const ForwardCache eval = run_forward(model, features, adj, false, 0);
        const double train_loss = data_loss_from_logits(eval.logits, labels, train_idx) +
                                  0.5 * cfg.weight_decay * squared_parameter_norm(model);
        if (!std::isfinite(train_loss))
            throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                                    "; last finite epoch " + std::to_string(last_finite_epoch),
                                last_finite_epoch);
        last_finite_epoch = epoch;

        const PredictionMatrix preds{eval.probs};
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_loss;
        rec.train_accuracy = accuracy(preds, labels, train_idx);
        rec.val_accuracy = accuracy(preds, labels, val_idx);
        result.history.push_back(rec);

        if (rec.val_accuracy > best_val) {
            best_val = rec.val_accuracy;
            result.model = model;
            result.best_epoch = epoch;
            result.best_val_accuracy = rec.val_accuracy;
            epochs_since_improve = 0;
        } else {
            ++epochs_since_improve;
        }
        if (epochs_since_improve >= cfg.patience) break;
    }
    return result;
}

PredictionMatrix predict(const ModelHead& model, const DenseMatrix& features,
                         const SparseMatrix* adj) {
    return forward(model, features, adj, false, 0);
}

void save_model(const ModelHead& model, const std::string& path) {
    model.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_model: cannot open " + path);
    os.write("STGM", 4);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(model.kind));
    detail::write_u32(os, static_cast<std::uint32_t>(model.layers.size()));
    detail::write_f64(os, model.dropout_rate);
    for (const DenseLayer& layer : model.layers) {
        detail::write_u32(os, static_cast<std::uint32_t>(layer.in_dim()));
        detail::write_u32(os, static_cast<std::uint32_t>(layer.out_dim()));
    }
    for (const DenseLayer& layer : model.layers) {
        for (double w : layer.weights.data) detail::write_f64(os, w);
        for (double b : layer.bias) detail::write_f64(os, b);
    }
    if (!os.good()) throw std::runtime_error("save_model: write failed for " + path);
}

ModelHead load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_model: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "STGM")
        throw std::runtime_error("load_model: bad magic in " + path);
    if (detail::read_u32(is, "version") != kCheckpointVersion)
        throw std::runtime_error("load_model: unsupported version in " + path);
    const std::uint32_t kind = detail::read_u32(is, "kind");
    if (kind > 2) throw std::runtime_error("load_model: unknown head kind in " + path);
    const std::uint32_t n_layers = detail::read_u32(is, "layer count");
    if (n_layers == 0 || n_layers > 64) throw std::runtime_error("load_model: bad layer count in " + path);

    ModelHead model;
    model.kind = static_cast<HeadKind>(kind);
    model.dropout_rate = detail::read_f64(is, "dropout");
    std::vector<std::pair<Index, Index>> dims;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const Index in = static_cast<Index>(detail::read_u32(is, "in_dim"));
        const Index out = static_cast<Index>(detail::read_u32(is, "out_dim"));
        dims.emplace_back(in, out);
    }
    for (auto [in, out] : dims) {
        DenseLayer layer;
        layer.weights = DenseMatrix(in, out);
        for (double& w : layer.weights.data) w = detail::read_f64(is, "weight");
        layer.bias.resize(static_cast<std::size_t>(out));
        for (double& b : layer.bias) b = detail::read_f64(is, "bias");
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

}  // namespace stg
