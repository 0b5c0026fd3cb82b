// Command-line front end: diffusion feature export, head training, grid
// selection, the full cascade, ablations, synthetic benchmarks, and scoring.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stg/diffusion.hpp"
#include "stg/pipeline.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os.good()) throw std::runtime_error("write failed for " + path);
}

/// Tags escaping errors with the pipeline stage unless already tagged.
template <typename F>
auto tagged(const char* tag, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        if (!msg.empty() && msg.front() == '[') throw;
        throw std::runtime_error("[" + std::string(tag) + "] " + msg);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse graph diffusion and node-classification toolkit"};
    app.require_subcommand(1);

    std::string edges, features, labels, config, out, preds;
    std::string head_name = "mlp";
    std::vector<std::string> splits;
    std::uint64_t seed = 0;
    bool symmetrize_on = true;
    std::int64_t synth_n = 1000, synth_classes = 2, synth_dim = 16;
    double p_intra = 0.02, p_inter = 0.002, noise = 3.0;

    const auto add_graph_opts = [&](CLI::App* cmd, bool with_labels) {
        cmd->add_option("--edges", edges, "edge list, one 'u v' pair per line")->required();
        cmd->add_option("--features", features, "feature matrix (STGF binary)")->required();
        if (with_labels) {
            cmd->add_option("--labels", labels, "labels, one class id or -1 per line")->required();
            cmd->add_option("--splits", splits, "train, val, and test index files")
                ->expected(3)
                ->required();
        }
        cmd->add_option("--config", config, "JSON run configuration");
        cmd->add_flag("--symmetrize,!--no-symmetrize", symmetrize_on,
                      "symmetrize the graph before GCN normalization");
    };

    CLI::App* diffuse = app.add_subcommand("diffuse", "write diffusion feature blocks as STGF files");
    add_graph_opts(diffuse, false);
    diffuse->add_option("--out", out, "output directory")->required();

    std::string preds_out;
    CLI::App* train_cmd = app.add_subcommand("train", "train one head and save its checkpoint");
    add_graph_opts(train_cmd, true);
    train_cmd->add_option("--head", head_name, "mlp, gcn, simple_gcn, or sign");
    train_cmd->add_option("--seed", seed, "training seed");
    train_cmd->add_option("--out", out, "model checkpoint path (STGM binary)")->required();
    train_cmd->add_option("--preds-out", preds_out, "also save eval-mode predictions (STGF binary)");

    CLI::App* select_cmd = app.add_subcommand("select", "grid-search k and (s,p,t) on validation accuracy");
    add_graph_opts(select_cmd, true);
    select_cmd->add_option("--out", out, "records file (one JSON object per line)");

    CLI::App* run_cmd = app.add_subcommand("run", "full cascade: diffuse, train all heads, ensemble");
    add_graph_opts(run_cmd, true);
    run_cmd->add_option("--seed", seed, "replace the configured seed list with this single seed");
    run_cmd->add_option("--out", out, "results file (one JSON object per line)");

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "leave-one-out ensemble study on the test split");
    add_graph_opts(ablate_cmd, true);
    ablate_cmd->add_option("--seed", seed, "training seed (default: first configured seed)");
    ablate_cmd->add_option("--out", out, "records file (one JSON object per line)");

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a planted-partition benchmark");
    synth_cmd->add_option("--n", synth_n, "node count");
    synth_cmd->add_option("--classes", synth_classes, "class count");
    synth_cmd->add_option("--dim", synth_dim, "feature dimension");
    synth_cmd->add_option("--p-intra", p_intra, "intra-class edge probability");
    synth_cmd->add_option("--p-inter", p_inter, "inter-class edge probability");
    synth_cmd->add_option("--noise", noise, "feature noise scale");
    synth_cmd->add_option("--seed", seed, "generator seed");
    synth_cmd->add_option("--out", out, "output directory")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "score a saved prediction matrix");
    eval_cmd->add_option("--preds", preds, "prediction matrix (STGF binary)")->required();
    eval_cmd->add_option("--labels", labels, "labels, one class id or -1 per line")->required();
    eval_cmd->add_option("--splits", splits, "train, val, and test index files")
        ->expected(3)
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        stg::RunConfig cfg;
        if (!config.empty()) cfg = tagged("config", [&] { return stg::parse_run_config(read_file(config)); });

        const auto apply_symmetrize = [&](CLI::App* cmd) {
            if (cmd->count("--symmetrize") > 0) cfg.symmetrize = symmetrize_on;
        };
        const auto load_ds = [&] {
            return tagged("load", [&] {
                return stg::load_dataset(edges, features, labels, {splits[0], splits[1], splits[2]});
            });
        };

        if (*diffuse) {
            apply_symmetrize(diffuse);
            const stg::DenseMatrix x = tagged("load", [&] { return stg::load_feature_file(features); });
            const stg::SparseMatrix g =
                tagged("load", [&] { return stg::load_edge_list(edges, x.n_rows); });
            stg::SignConfig sc;
            sc.s = cfg.sign_grid.front()[0];
            sc.p = cfg.sign_grid.front()[1];
            sc.t = cfg.sign_grid.front()[2];
            sc.ppr = cfg.ppr;
            const stg::DiffusedFeatures blocks = tagged("diffuse", [&] {
                return stg::build_sign_features(g, x, sc, cfg.symmetrize, cfg.n_threads);
            });
            tagged("write", [&] {
                std::filesystem::create_directories(out);
                for (const auto& b : blocks.blocks)
                    stg::save_feature_file(b.matrix,
                                           (std::filesystem::path(out) / (b.label + ".stgf")).string());
            });
            for (const auto& b : blocks.blocks)
                std::cout << b.label << ".stgf  " << b.matrix.n_rows << " x " << b.matrix.n_cols
                          << "\n";
            if (!blocks.ppr_converged)
                std::cerr << "warning: ppr power iteration hit max_iter before tol\n";
        } else if (*train_cmd) {
            apply_symmetrize(train_cmd);
            const stg::Dataset ds = load_ds();
            const stg::PipelineHead head = stg::pipeline_head_from_name(head_name);
            const std::uint64_t s = train_cmd->count("--seed") > 0 ? seed : cfg.train.seed;
            const stg::SingleHeadResult r = stg::train_single(ds, cfg, head, s);
            tagged("write", [&] {
                stg::save_model(r.model, out);
                if (!preds_out.empty()) stg::save_feature_file(r.predictions.probs, preds_out);
            });
            std::printf("%s  val_acc=%.4f  test_acc=%.4f  saved %s\n",
                        stg::pipeline_head_name(head).c_str(), r.val_accuracy, r.test_accuracy,
                        out.c_str());
        } else if (*select_cmd) {
            apply_symmetrize(select_cmd);
            const stg::Dataset ds = load_ds();
            const stg::SelectionResult res = stg::select_model(ds, cfg);
            for (const auto& e : res.evaluated)
                std::printf("%-22s val_acc=%.4f\n", e.label.c_str(), e.val_accuracy);
            if (res.simple_gcn_k > 0) std::printf("chosen simple_gcn k: %d\n", res.simple_gcn_k);
            if (res.sign[0] + res.sign[1] + res.sign[2] > 0)
                std::printf("chosen sign (s,p,t)=(%d,%d,%d)\n", res.sign[0], res.sign[1], res.sign[2]);
            if (!out.empty()) {
                std::string text;
                for (const auto& e : res.evaluated) {
                    nlohmann::json rec{{"type", "evaluated"},
                                       {"label", e.label},
                                       {"val_accuracy", e.val_accuracy}};
                    text += rec.dump();
                    text += '\n';
                }
                nlohmann::json chosen{{"type", "chosen"},
                                      {"simple_gcn_k", res.simple_gcn_k},
                                      {"sign", res.sign}};
                text += chosen.dump();
                text += '\n';
                tagged("write", [&] { write_file(out, text); });
            }
        } else if (*run_cmd) {
            apply_symmetrize(run_cmd);
            if (run_cmd->count("--seed") > 0) cfg.seeds = {seed};
            const stg::Dataset ds = load_ds();
            const stg::RunReport report = stg::run_cascade(ds, cfg);
            std::cout << report.to_text();
            if (!out.empty()) tagged("write", [&] { write_file(out, report.to_records()); });
        } else if (*ablate_cmd) {
            apply_symmetrize(ablate_cmd);
            const stg::Dataset ds = load_ds();
            const std::uint64_t s = ablate_cmd->count("--seed") > 0 ? seed : cfg.seeds.front();
            const auto members = stg::train_members(ds, cfg, s);
            const auto rows = tagged("ensemble", [&] {
                return stg::ablation_table(members, ds.labels, ds.test_idx);
            });
            std::cout << stg::ablation_to_text(rows);
            if (!out.empty()) tagged("write", [&] { write_file(out, stg::ablation_to_records(rows)); });
        } else if (*synth_cmd) {
            const stg::Dataset ds = tagged("synth", [&] {
                return stg::generate_synthetic(synth_n, synth_classes, synth_dim, p_intra, p_inter,
                                               noise, seed);
            });
            tagged("write", [&] { stg::save_dataset_files(ds, out); });
            std::printf("n=%lld classes=%lld dim=%lld edges=%lld splits=%zu/%zu/%zu -> %s\n",
                        static_cast<long long>(ds.n_nodes()),
                        static_cast<long long>(ds.n_classes),
                        static_cast<long long>(ds.features.n_cols),
                        static_cast<long long>(ds.graph.nnz()), ds.train_idx.size(),
                        ds.val_idx.size(), ds.test_idx.size(), out.c_str());
        } else if (*eval_cmd) {
            const stg::PredictionMatrix pm{
                tagged("load", [&] { return stg::load_feature_file(preds); })};
            const std::vector<int> y = tagged("load", [&] { return stg::load_label_file(labels); });
            const std::array<const char*, 3> names = {"train", "val", "test"};
            for (std::size_t part = 0; part < 3; ++part) {
                const std::vector<stg::Index> idx = tagged("load", [&] {
                    return stg::load_index_file(splits[part], pm.n_rows());
                });
                std::printf("%s_acc=%.4f\n", names[part],
                            tagged("eval", [&] { return stg::accuracy(pm, y, idx); }));
            }
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "stg: " << e.what() << "\n";
        return 1;
    }
}
