#include "stg/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace stg {

void EnsembleBundle::validate() const {
    if (members.empty()) throw std::invalid_argument("EnsembleBundle: no members");
    for (const Member& m : members) {
        if (m.predictions.probs.n_rows != members.front().predictions.probs.n_rows ||
            m.predictions.probs.n_cols != n_classes)
            throw std::invalid_argument("EnsembleBundle: member dimensions differ");
    }
}

PredictionMatrix mean_pool(const EnsembleBundle& bundle) {
    bundle.validate();
    const std::size_t k = bundle.members.size();
    const DenseMatrix& first = bundle.members.front().predictions.probs;

    PredictionMatrix out{DenseMatrix(first.n_rows, first.n_cols)};
    // Each element sums its K addends in ascending value order, which makes
    // the result independent of member ordering down to the last bit.
    std::vector<double> vals(k);
    for (std::size_t e = 0; e < out.probs.data.size(); ++e) {
        for (std::size_t m = 0; m < k; ++m) vals[m] = bundle.members[m].predictions.probs.data[e];
        std::sort(vals.begin(), vals.end());
        double sum = 0.0;
        for (double v : vals) sum += v;
        out.probs.data[e] = sum / static_cast<double>(k);
    }
    return out;
}

double accuracy(const PredictionMatrix& preds, const std::vector<int>& labels,
                const std::vector<Index>& idx) {
    if (idx.empty()) throw std::invalid_argument("accuracy: empty index set");
    if (static_cast<Index>(labels.size()) != preds.n_rows())
        throw std::invalid_argument("accuracy: label count does not match prediction rows");

    Index correct = 0;
    for (Index i : idx) {
        if (i < 0 || i >= preds.n_rows()) throw std::invalid_argument("accuracy: index out of range");
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= preds.n_classes())
            throw std::invalid_argument("accuracy: label out of range at node " + std::to_string(i));
        const double* row = preds.probs.row(i);
        Index best = 0;
        for (Index j = 1; j < preds.n_classes(); ++j)
            if (row[j] > row[best]) best = j;  // ties keep the lowest class index
        if (best == y) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

std::vector<AblationRow> ablation_table(const std::vector<EnsembleBundle::Member>& members,
                                        const std::vector<int>& labels,
                                        const std::vector<Index>& test_idx) {
    if (members.size() < 2) throw std::invalid_argument("ablation_table: needs at least two members");
    const Index n_classes = members.front().predictions.n_classes();

    auto pooled_accuracy = [&](const std::vector<EnsembleBundle::Member>& subset) {
        EnsembleBundle bundle{subset, n_classes};
        return accuracy(mean_pool(bundle), labels, test_idx);
    };

    std::vector<AblationRow> rows;
    rows.push_back({"full", pooled_accuracy(members)});
    for (std::size_t skip = 0; skip < members.size(); ++skip) {
        std::vector<EnsembleBundle::Member> subset;
        for (std::size_t m = 0; m < members.size(); ++m)
            if (m != skip) subset.push_back(members[m]);
        rows.push_back({"no:" + members[skip].name, pooled_accuracy(subset)});
    }
    for (const EnsembleBundle::Member& m : members)
        rows.push_back({"solo:" + m.name, accuracy(m.predictions, labels, test_idx)});
    return rows;
}

namespace {

std::string format_accuracy(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

std::string ablation_to_text(const std::vector<AblationRow>& rows) {
    std::size_t width = std::string("members").size();
    for (const AblationRow& r : rows) width = std::max(width, r.name.size());

    std::string out = "members";
    out.append(width - 7 + 2, ' ');
    out += "test_acc\n";
    for (const AblationRow& r : rows) {
        out += r.name;
        out.append(width - r.name.size() + 2, ' ');
        out += format_accuracy(r.test_accuracy);
        out += '\n';
    }
    return out;
}

std::string ablation_to_records(const std::vector<AblationRow>& rows) {
    std::string out;
    for (const AblationRow& r : rows) {
        nlohmann::json rec{{"name", r.name}, {"test_accuracy", r.test_accuracy}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

}  // namespace stg
