#pragma once

#include <string>
#include <vector>

#include "stg/nn.hpp"

namespace stg {

/// Named per-head probability matrices to be averaged into one prediction.
struct EnsembleBundle {
    struct Member {
        std::string name;
        PredictionMatrix predictions;
    };

    std::vector<Member> members;
    Index n_classes = 0;

    /// Requires at least one member and identical dimensions across members.
    /// Throws std::invalid_argument.
    void validate() const;
};

/// Elementwise arithmetic mean of the member probability matrices.
PredictionMatrix mean_pool(const EnsembleBundle& bundle);

/// Fraction of `idx` whose row-argmax equals the label. Argmax ties break
/// toward the lowest class index. `idx` must be non-empty and labels on it
/// must be valid class ids.
double accuracy(const PredictionMatrix& preds, const std::vector<int>& labels,
                const std::vector<Index>& idx);

/// One row of the component-removal study.
struct AblationRow {
    std::string name;  // "full", "no:<member>", or "solo:<member>"
    double test_accuracy = 0.0;
};

/// Test accuracy of the full ensemble, every leave-one-out subset, and every
/// individual member, in that order. Requires at least two members.
std::vector<AblationRow> ablation_table(const std::vector<EnsembleBundle::Member>& members,
                                        const std::vector<int>& labels,
                                        const std::vector<Index>& test_idx);

/// Aligned two-column text rendering of an ablation table.
std::string ablation_to_text(const std::vector<AblationRow>& rows);

/// Machine-readable rendering: one JSON object per line.
std::string ablation_to_records(const std::vector<AblationRow>& rows);

}  // namespace stg
