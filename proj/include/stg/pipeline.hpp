#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stg/diffusion.hpp"
#include "stg/ensemble.hpp"
#include "stg/nn.hpp"
#include "stg/sparse.hpp"

namespace stg {

/// A node-classification problem: directed graph, ingested embedding matrix,
/// labels (-1 = unlabeled), and disjoint train/val/test index sets.
struct Dataset {
    SparseMatrix graph;  // row i holds the out-edges of node i
    DenseMatrix features;
    std::vector<int> labels;
    std::vector<Index> train_idx;
    std::vector<Index> val_idx;
    std::vector<Index> test_idx;
    Index n_classes = 0;

    Index n_nodes() const { return features.n_rows; }

    /// Checks dimension agreement, label ranges, and that the splits are
    /// non-empty, in range, pairwise disjoint, and fully labeled.
    void validate() const;
};

/// The trainable heads the cascade knows how to build.
enum class PipelineHead { mlp, gcn, simple_gcn, sign };

std::string pipeline_head_name(PipelineHead head);
PipelineHead pipeline_head_from_name(const std::string& name);

/// Everything a cascade run needs beyond the dataset. Grids with more than
/// one point are resolved by validation accuracy before the final training
/// (see select_model); `train.seed` is ignored by run_cascade, which derives
/// per-seed streams from `seeds`.
struct RunConfig {
    std::vector<PipelineHead> heads = {PipelineHead::mlp, PipelineHead::gcn,
                                       PipelineHead::simple_gcn, PipelineHead::sign};
    std::vector<int> simple_gcn_grid = {2, 3, 4};
    std::vector<std::array<int, 3>> sign_grid = {
        {3, 0, 0}, {3, 0, 1}, {3, 3, 0}, {4, 2, 1}, {5, 3, 0}};
    TrainConfig train;
    PprParams ppr;
    bool symmetrize = true;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
    Index hidden_dim = 256;
    int n_threads = 1;

    bool has_head(PipelineHead head) const;
    void validate() const;
};

/// Parses a JSON document with the same field names as RunConfig. Absent keys
/// keep their defaults; unknown keys are rejected by name.
RunConfig parse_run_config(const std::string& json_text);

// --- File formats -----------------------------------------------------------
// edges:    text, one "u v" pair of 0-based decimal ids per line (u -> v)
// labels:   text, one decimal class id per line, -1 for unlabeled
// splits:   text, one decimal node index per line, one file per split
// features: binary, magic "STGF", little-endian u32 rows, u32 cols, then
//           rows*cols little-endian 32-bit floats in row-major order
//           (widened to 64-bit on load, narrowed on save)

DenseMatrix load_feature_file(const std::string& path);
void save_feature_file(const DenseMatrix& x, const std::string& path);

/// Parses an edge list into an n x n adjacency with one unit entry per edge;
/// repeated edges accumulate weight. Errors carry "<path>:<line>".
SparseMatrix load_edge_list(const std::string& path, Index n_nodes);

std::vector<int> load_label_file(const std::string& path);

/// Reads a split file: unique in-range indices, returned sorted.
std::vector<Index> load_index_file(const std::string& path, Index n_nodes);

/// Assembles and validates a Dataset from the four file kinds above. The node
/// count is taken from the feature file; n_classes is max label + 1.
Dataset load_dataset(const std::string& edge_path, const std::string& feature_path,
                     const std::string& label_path, const std::array<std::string, 3>& split_paths);

struct Splits {
    std::vector<Index> train;
    std::vector<Index> val;
    std::vector<Index> test;
};

/// Seeded shuffle partition of the labeled nodes into train/val/test with the
/// given fractions (floor sizes, remainder to test). Every part must end up
/// non-empty. Each returned set is sorted.
Splits make_splits(Index n, const std::vector<int>& labels,
                   const std::array<double, 3>& fractions, std::uint64_t seed);

/// Planted-partition benchmark: nodes get contiguous class blocks, features
/// are a random unit centroid per class plus Gaussian noise of scale `noise`,
/// directed edges appear with probability p_intra within a class and p_inter
/// across, and splits are a seeded 60/20/20 partition.
Dataset generate_synthetic(Index n, Index n_classes, Index d, double p_intra, double p_inter,
                           double noise, std::uint64_t seed);

/// Writes edges.txt, features.stgf, labels.txt, train.txt, val.txt, test.txt
/// under `out_dir` (created if missing).
void save_dataset_files(const Dataset& ds, const std::string& out_dir);

/// Validation-accuracy argmax over the configured grids, evaluated with the
/// first configured seed. Ties break toward the smaller total power count,
/// then grid order. Single-point grids are returned without training;
/// disabled heads leave the zero sentinel.
struct SelectionResult {
    struct Evaluated {
        std::string label;  // "k=3" or "(s,p,t)=(3,0,1)"
        double val_accuracy = 0.0;
    };

    int simple_gcn_k = 0;                  // 0 if simple_gcn disabled
    std::array<int, 3> sign = {0, 0, 0};   // zeros if sign disabled
    std::vector<Evaluated> evaluated;      // grid points actually trained, in grid order
};

SelectionResult select_model(const Dataset& ds, const RunConfig& cfg);

/// Per-head and ensemble test accuracy, aggregated over seeds.
struct RunReport {
    struct Row {
        std::string name;  // head name or "ensemble"
        std::vector<double> seed_accuracies;
        double mean = 0.0;
        double stddev = 0.0;  // population standard deviation over seeds
    };

    std::vector<Row> rows;
    std::vector<std::uint64_t> seeds;
    int simple_gcn_k = 0;                 // chosen k, 0 if head disabled
    std::array<int, 3> sign = {0, 0, 0};  // chosen (s,p,t), zeros if disabled
    bool ppr_converged = true;

    /// Aligned text table, one row per head plus the ensemble.
    std::string to_text() const;
    /// Machine-readable: one JSON object per line, a run header first.
    std::string to_records() const;
};

/// The full cascade: standardize on the train split, build the configured
/// diffused features, resolve grids, train every enabled head for every seed,
/// mean-pool the per-seed ensembles, and aggregate accuracies. Errors are
/// rethrown with the failing stage tagged as "[stage] ...".
RunReport run_cascade(const Dataset& ds, const RunConfig& cfg);

/// Trains every enabled head once with the given seed and returns the named
/// eval-mode prediction members, in canonical head order. Feeds ablation runs.
std::vector<EnsembleBundle::Member> train_members(const Dataset& ds, const RunConfig& cfg,
                                                  std::uint64_t seed);

/// Trains one head (resolving its grid exactly as run_cascade would) and
/// returns the fitted model with its validation and test accuracy.
struct SingleHeadResult {
    PipelineHead head = PipelineHead::mlp;
    ModelHead model;
    PredictionMatrix predictions;  // eval-mode probabilities for every node
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
};

SingleHeadResult train_single(const Dataset& ds, const RunConfig& cfg, PipelineHead head,
                              std::uint64_t seed);

}  // namespace stg
