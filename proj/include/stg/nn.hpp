#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stg/rng.hpp"
#include "stg/sparse.hpp"

namespace stg {

/// Classifier families. `gcn` is the only kind that consumes an adjacency
/// operator at inference time; the others are plain feed-forward stacks.
enum class HeadKind { logistic, mlp, gcn };

std::string head_kind_name(HeadKind kind);
HeadKind head_kind_from_name(const std::string& name);

/// One affine layer: out = in * weights + bias.
struct DenseLayer {
    DenseMatrix weights;        // in_dim x out_dim
    std::vector<double> bias;   // out_dim

    Index in_dim() const { return weights.n_rows; }
    Index out_dim() const { return weights.n_cols; }
};

/// A prediction head: logistic regression (1 layer), a 4-layer MLP, or a
/// 4-layer full-batch GCN whose layers compute relu(A * H * W + b).
struct ModelHead {
    HeadKind kind = HeadKind::logistic;
    std::vector<DenseLayer> layers;
    double dropout_rate = 0.0;  // probability of zeroing an input unit in train mode

    bool uses_adjacency() const { return kind == HeadKind::gcn; }
    Index in_dim() const { return layers.front().in_dim(); }
    Index n_classes() const { return layers.back().out_dim(); }

    /// Checks layer count for the kind, dimension chaining, finiteness,
    /// and dropout_rate in [0, 1). Throws std::invalid_argument.
    void validate() const;
};

/// Optimizer and schedule settings for train().
struct TrainConfig {
    double learning_rate = 0.01;
    double weight_decay = 5e-4;  // L2 coefficient on all weights and biases
    int max_epochs = 500;
    int patience = 50;           // epochs without val-accuracy improvement before stopping
    std::uint64_t seed = 0;
    double dropout_rate = 0.5;

    void validate() const;
};

/// Row-stochastic class probabilities, one row per node.
struct PredictionMatrix {
    DenseMatrix probs;

    Index n_rows() const { return probs.n_rows; }
    Index n_classes() const { return probs.n_cols; }

    /// Checks that every entry is non-negative and every row sums to 1
    /// within 1e-9. Throws std::invalid_argument.
    void validate() const;
};

/// Per-column centering/scaling parameters fitted on a row subset.
struct Standardization {
    std::vector<double> means;
    std::vector<double> stds;  // population std; columns with std < 1e-12 map to all-zero
};

/// Fits per-column mean and population std over `fit_rows`, then transforms
/// every row as (x - mean) / std. Columns whose fitted std is below 1e-12
/// become identically zero. `fit_rows` must be non-empty and in range.
std::pair<DenseMatrix, Standardization> standardize_features(const DenseMatrix& x,
                                                             const std::vector<Index>& fit_rows);

/// Builds a head with seeded Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out)))
/// and zero biases. logistic: in -> classes. mlp/gcn: in -> hidden -> hidden ->
/// hidden -> classes.
ModelHead make_head(HeadKind kind, Index in_dim, Index hidden_dim, Index n_classes,
                    double dropout_rate, Rng& rng);

/// Runs the head on `features` and returns softmax probabilities for every
/// node. `adj` must be non-null iff the head is a GCN. In train mode, inverted
/// dropout is applied to each layer input with masks drawn from `mask_seed`;
/// in eval mode the pass is deterministic and mask_seed is ignored.
PredictionMatrix forward(const ModelHead& model, const DenseMatrix& features,
                         const SparseMatrix* adj, bool train_mode = false,
                         std::uint64_t mask_seed = 0);

/// Gradient of the training objective for one layer.
struct LayerGrads {
    DenseMatrix weights;
    std::vector<double> bias;
};

struct LossGrads {
    double loss = 0.0;
    std::vector<LayerGrads> layers;
};

/// Evaluates loss = mean over idx of -log p[i][label[i]]
///                  + weight_decay/2 * (sum of squared weights and biases)
/// and its exact analytic gradients, with dropout disabled. Labels on `idx`
/// must be valid class ids; `idx` must be non-empty.
LossGrads loss_and_gradients(const ModelHead& model, const DenseMatrix& features,
                             const SparseMatrix* adj, const std::vector<int>& labels,
                             const std::vector<Index>& idx, double weight_decay);

/// One row of training history.
struct EpochRecord {
    int epoch = 0;  // 0-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    ModelHead model;  // parameters from the epoch with the best validation accuracy
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
};

/// Thrown when the training loss becomes non-finite.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& message, int last_finite_epoch_)
        : std::runtime_error(message), last_finite_epoch(last_finite_epoch_) {}

    int last_finite_epoch;  // -1 if the very first epoch diverged
};

/// Full-batch training with adaptive per-parameter steps (first/second moment
/// estimates, beta1=0.9, beta2=0.999, eps=1e-8). Each epoch applies a fresh
/// seeded dropout mask, steps on the masked objective, then records eval-mode
/// train loss/accuracy and validation accuracy. Keeps the parameters from the
/// best-validation epoch and stops after `patience` epochs without
/// improvement. Deterministic given (initial model, data, cfg.seed).
TrainResult train(const ModelHead& init, const DenseMatrix& features, const SparseMatrix* adj,
                  const std::vector<int>& labels, const std::vector<Index>& train_idx,
                  const std::vector<Index>& val_idx, const TrainConfig& cfg);

/// forward() in eval mode.
PredictionMatrix predict(const ModelHead& model, const DenseMatrix& features,
                         const SparseMatrix* adj);

/// Writes a model checkpoint: magic "STGM", format version, head kind, layer
/// dimensions, then raw little-endian 64-bit parameters. Round-trips bit-exactly.
void save_model(const ModelHead& model, const std::string& path);
ModelHead load_model(const std::string& path);

}  // namespace stg
