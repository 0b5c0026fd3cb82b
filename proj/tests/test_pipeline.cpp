#include <doctest.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "stg/pipeline.hpp"

using stg::Dataset;
using stg::DenseMatrix;
using stg::Index;
using stg::load_dataset;
using stg::load_edge_list;
using stg::load_feature_file;
using stg::load_index_file;
using stg::load_label_file;
using stg::make_splits;
using stg::PipelineHead;
using stg::RunConfig;
using stg::RunReport;
using stg::SelectionResult;
using stg::Splits;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;

    TempDir() {
        path = fs::temp_directory_path() /
               ("stg_test_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    std::string file(const std::string& name, const std::string& content) const {
        const fs::path p = path / name;
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p.string();
    }
    std::string at(const std::string& name) const { return (path / name).string(); }
};

/// 0.6/0.2/0.2-split dataset written through the library's own savers.
Dataset small_synthetic() { return stg::generate_synthetic(40, 2, 4, 0.3, 0.05, 0.5, 9); }

RunConfig fast_config() {
    RunConfig cfg;
    cfg.train.max_epochs = 8;
    cfg.train.patience = 8;
    cfg.hidden_dim = 8;
    cfg.seeds = {0, 1};
    cfg.simple_gcn_grid = {2};
    cfg.sign_grid = {{2, 0, 0}};
    return cfg;
}

}  // namespace

TEST_CASE("feature files round-trip through STGF") {
    TempDir tmp;
    DenseMatrix x(2, 3);
    x.data = {1.0, -0.5, 0.25, 1024.0, 3.5, -2.0};  // exactly representable in f32
    const std::string path = tmp.at("x.stgf");
    save_feature_file(x, path);
    const DenseMatrix back = load_feature_file(path);
    CHECK(back.n_rows == 2);
    CHECK(back.n_cols == 3);
    CHECK(back.data == x.data);
}

TEST_CASE("feature file loader rejects malformed inputs") {
    TempDir tmp;
    CHECK_THROWS_WITH_AS(load_feature_file(tmp.at("missing.stgf")),
                         doctest::Contains("missing.stgf"), std::runtime_error);

    const std::string bad_magic = tmp.file("bad.stgf", "NOPE\x01\x00\x00\x00\x01\x00\x00\x00");
    CHECK_THROWS_WITH_AS(load_feature_file(bad_magic), doctest::Contains("magic"),
                         std::runtime_error);

    std::string truncated("STGF", 4);
    truncated += std::string("\x02\x00\x00\x00\x02\x00\x00\x00", 8);
    truncated += std::string(4, '\0');  // one float instead of four
    CHECK_THROWS(load_feature_file(tmp.file("short.stgf", truncated)));

    std::string trailing("STGF", 4);
    trailing += std::string("\x01\x00\x00\x00\x01\x00\x00\x00", 8);
    trailing += std::string(8, '\0');  // one float too many
    CHECK_THROWS_WITH_AS(load_feature_file(tmp.file("long.stgf", trailing)),
                         doctest::Contains("trailing"), std::runtime_error);
}

TEST_CASE("edge list loading") {
    TempDir tmp;
    SUBCASE("duplicates accumulate weight") {
        const auto a = load_edge_list(tmp.file("e.txt", "0 1\n0 1\n1 0\n"), 2);
        CHECK(oracle::from_sparse(a) == oracle::Mat{{0.0, 2.0}, {1.0, 0.0}});
    }
    SUBCASE("blank lines and CRLF are tolerated") {
        const auto a = load_edge_list(tmp.file("e.txt", "0 1\r\n\n1 2\n"), 3);
        CHECK(a.values.size() == 2);
    }
    SUBCASE("malformed lines carry the line number") {
        CHECK_THROWS_WITH_AS(load_edge_list(tmp.file("e.txt", "0 1\nx 2\n"), 3),
                             doctest::Contains("e.txt:2"), std::runtime_error);
        CHECK_THROWS_WITH_AS(load_edge_list(tmp.file("e2.txt", "0 1 7\n"), 3),
                             doctest::Contains("e2.txt:1"), std::runtime_error);
    }
    SUBCASE("out-of-range endpoints are rejected") {
        CHECK_THROWS_WITH_AS(load_edge_list(tmp.file("e.txt", "0 3\n"), 3),
                             doctest::Contains("e.txt:1"), std::runtime_error);
    }
}

TEST_CASE("label and index file loading") {
    TempDir tmp;
    CHECK(load_label_file(tmp.file("y.txt", "0\n-1\n2\n")) == std::vector<int>{0, -1, 2});
    CHECK_THROWS_WITH_AS(load_label_file(tmp.file("bad.txt", "1\n-2\n")),
                         doctest::Contains("bad.txt:2"), std::runtime_error);

    CHECK(load_index_file(tmp.file("i.txt", "2\n0\n1\n"), 5) == std::vector<Index>{0, 1, 2});
    CHECK_THROWS_WITH_AS(load_index_file(tmp.file("dup.txt", "1\n1\n"), 5),
                         doctest::Contains("dup.txt:2"), std::runtime_error);
    CHECK_THROWS_WITH_AS(load_index_file(tmp.file("oob.txt", "5\n"), 5),
                         doctest::Contains("oob.txt:1"), std::runtime_error);
}

TEST_CASE("load_dataset: two-edge fixture") {
    TempDir tmp;
    DenseMatrix x(3, 2);
    x.data = {1.0, 0.0, 0.0, 1.0, 1.0, 1.0};
    save_feature_file(x, tmp.at("x.stgf"));
    const std::string edges = tmp.file("e.txt", "0 1\n1 2\n");
    const std::string labels = tmp.file("y.txt", "0\n1\n0\n");
    const std::array<std::string, 3> splits{tmp.file("tr.txt", "0\n"), tmp.file("va.txt", "1\n"),
                                            tmp.file("te.txt", "2\n")};
    const Dataset ds = load_dataset(edges, tmp.at("x.stgf"), labels, splits);
    CHECK(ds.n_nodes() == 3);
    CHECK(ds.graph.values.size() == 2);
    CHECK(ds.n_classes == 2);
    ds.validate();

    SUBCASE("overlapping splits are rejected") {
        const std::array<std::string, 3> bad{tmp.file("tr2.txt", "0\n1\n"), tmp.at("va.txt"),
                                             tmp.at("te.txt")};
        CHECK_THROWS_WITH_AS(load_dataset(edges, tmp.at("x.stgf"), labels, bad),
                             doctest::Contains("already belongs to another split"),
                             std::runtime_error);
    }
    SUBCASE("unlabeled nodes cannot sit in a split") {
        const std::string holes = tmp.file("y2.txt", "0\n-1\n0\n");
        CHECK_THROWS(load_dataset(edges, tmp.at("x.stgf"), holes, splits));
    }
    SUBCASE("edges beyond the node count are rejected") {
        const std::string far = tmp.file("e2.txt", "0 1\n2 3\n");
        CHECK_THROWS_WITH_AS(load_dataset(far, tmp.at("x.stgf"), labels, splits),
                             doctest::Contains("e2.txt:2"), std::runtime_error);
    }
    SUBCASE("label count must match the feature rows") {
        const std::string extra = tmp.file("y3.txt", "0\n1\n0\n1\n");
        CHECK_THROWS(load_dataset(edges, tmp.at("x.stgf"), extra, splits));
    }
}

TEST_CASE("load_dataset: ogbn-arxiv-shaped inputs load with exact counts") {
    TempDir tmp;
    const Index n = 169343;
    const Index m = 1166243;

    {
        DenseMatrix x(n, 2);
        for (Index i = 0; i < n; ++i) {
            x(i, 0) = static_cast<double>(i % 7);
            x(i, 1) = 1.0;
        }
        save_feature_file(x, tmp.at("x.stgf"));
        std::ofstream edges(tmp.path / "e.txt");
        for (Index i = 0; i < m; ++i) {
            const Index u = i % n;
            const Index k = i / n;
            const Index v = (u + 1 + k) % n;  // distinct arcs, no self-loops
            edges << u << ' ' << v << '\n';
        }
        std::ofstream labels(tmp.path / "y.txt");
        for (Index i = 0; i < n; ++i) labels << (i % 40) << '\n';
        std::ofstream(tmp.path / "tr.txt") << "0\n";
        std::ofstream(tmp.path / "va.txt") << "1\n";
        std::ofstream(tmp.path / "te.txt") << "2\n";
    }

    const Dataset ds = load_dataset(tmp.at("e.txt"), tmp.at("x.stgf"), tmp.at("y.txt"),
                                    {tmp.at("tr.txt"), tmp.at("va.txt"), tmp.at("te.txt")});
    CHECK(ds.n_nodes() == n);
    CHECK(static_cast<Index>(ds.graph.values.size()) == m);
    CHECK(ds.n_classes == 40);
}

TEST_CASE("make_splits: ten labeled nodes split 6/2/2") {
    const std::vector<int> labels(10, 1);
    const Splits s = make_splits(10, labels, {0.6, 0.2, 0.2}, 3);
    CHECK(s.train.size() == 6);
    CHECK(s.val.size() == 2);
    CHECK(s.test.size() == 2);

    std::vector<bool> seen(10, false);
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (Index i : *part) {
            CHECK_FALSE(seen[static_cast<std::size_t>(i)]);
            seen[static_cast<std::size_t>(i)] = true;
        }
    for (bool b : seen) CHECK(b);
    CHECK(std::is_sorted(s.train.begin(), s.train.end()));
}

TEST_CASE("make_splits: determinism, unlabeled exclusion, and guards") {
    std::vector<int> labels(20, 0);
    labels[3] = -1;
    labels[11] = -1;
    const Splits a = make_splits(20, labels, {0.6, 0.2, 0.2}, 7);
    const Splits b = make_splits(20, labels, {0.6, 0.2, 0.2}, 7);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    CHECK(a.train.size() + a.val.size() + a.test.size() == 18);
    for (const auto* part : {&a.train, &a.val, &a.test})
        for (Index i : *part) CHECK(labels[static_cast<std::size_t>(i)] != -1);

    CHECK_THROWS_AS(make_splits(20, labels, {1.0, 0.0, 0.0}, 7), std::invalid_argument);
    CHECK_THROWS_AS(make_splits(20, labels, {0.5, 0.2, 0.2}, 7), std::invalid_argument);
    const std::vector<int> none(5, -1);
    CHECK_THROWS(make_splits(5, none, {0.6, 0.2, 0.2}, 7));
}

TEST_CASE("generate_synthetic: determinism and structure") {
    const Dataset a = stg::generate_synthetic(50, 3, 4, 0.2, 0.02, 1.0, 11);
    const Dataset b = stg::generate_synthetic(50, 3, 4, 0.2, 0.02, 1.0, 11);
    CHECK(a.graph == b.graph);
    CHECK(a.features.data == b.features.data);
    CHECK(a.labels == b.labels);
    CHECK(a.train_idx == b.train_idx);
    a.validate();

    CHECK(a.n_classes == 3);
    CHECK(std::is_sorted(a.labels.begin(), a.labels.end()));
    CHECK(a.train_idx.size() == 30);
    CHECK(a.val_idx.size() == 10);
    CHECK(a.test_idx.size() == 10);

    CHECK_THROWS_AS(stg::generate_synthetic(50, 3, 4, 0.1, 0.2, 1.0, 11), std::invalid_argument);
    CHECK_THROWS_AS(stg::generate_synthetic(50, 3, 4, 1.5, 0.0, 1.0, 11), std::invalid_argument);
    CHECK_THROWS_AS(stg::generate_synthetic(50, 3, 0, 0.2, 0.0, 1.0, 11), std::invalid_argument);
}

TEST_CASE("generate_synthetic: separable limit reaches accuracy 1.0") {
    const Dataset ds = stg::generate_synthetic(30, 3, 4, 0.2, 0.0, 0.0, 13);
    // Zero noise collapses every class onto its centroid.
    for (std::size_t i = 1; i < 30; ++i) {
        if (ds.labels[i] != ds.labels[i - 1]) continue;
        for (Index j = 0; j < 4; ++j)
            CHECK(ds.features(static_cast<Index>(i), j) ==
                  ds.features(static_cast<Index>(i - 1), j));
    }

    RunConfig cfg = fast_config();
    cfg.heads = {PipelineHead::mlp};
    cfg.train.max_epochs = 120;
    cfg.train.patience = 120;
    cfg.train.learning_rate = 0.05;
    cfg.train.dropout_rate = 0.0;
    cfg.seeds = {0};
    const stg::SingleHeadResult r = stg::train_single(ds, cfg, PipelineHead::mlp, 0);
    CHECK(r.test_accuracy == 1.0);
}

TEST_CASE("parse_run_config: defaults and overrides") {
    const RunConfig def = stg::parse_run_config("{}");
    CHECK(def.heads.size() == 4);
    CHECK(def.simple_gcn_grid == std::vector<int>{2, 3, 4});
    REQUIRE(def.sign_grid.size() == 5);
    CHECK(def.sign_grid[0] == std::array<int, 3>{3, 0, 0});
    CHECK(def.sign_grid[4] == std::array<int, 3>{5, 3, 0});
    CHECK(def.seeds == std::vector<std::uint64_t>{0, 1, 2, 3});
    CHECK(def.hidden_dim == 256);
    CHECK(def.symmetrize);

    const RunConfig cfg = stg::parse_run_config(R"({
        "heads": ["mlp", "sign"],
        "simple_gcn_grid": [3],
        "sign_grid": [[2, 1, 0]],
        "train": {"learning_rate": 0.2, "max_epochs": 7, "patience": 3, "dropout_rate": 0.1},
        "ppr": {"alpha": 0.2, "tol": 1e-06, "max_iter": 50},
        "symmetrize": false,
        "seeds": [5, 6],
        "hidden_dim": 32,
        "n_threads": 2
    })");
    CHECK(cfg.heads == std::vector<PipelineHead>{PipelineHead::mlp, PipelineHead::sign});
    CHECK(cfg.has_head(PipelineHead::sign));
    CHECK_FALSE(cfg.has_head(PipelineHead::gcn));
    CHECK(cfg.sign_grid == std::vector<std::array<int, 3>>{{2, 1, 0}});
    CHECK(cfg.train.learning_rate == 0.2);
    CHECK(cfg.train.max_epochs == 7);
    CHECK(cfg.ppr.alpha == 0.2);
    CHECK(cfg.ppr.max_iter == 50);
    CHECK_FALSE(cfg.symmetrize);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{5, 6});
    CHECK(cfg.hidden_dim == 32);
    CHECK(cfg.n_threads == 2);
}

TEST_CASE("parse_run_config rejects unknown keys, bad types, and bad JSON") {
    CHECK_THROWS_WITH_AS(stg::parse_run_config(R"({"speed": 9})"),
                         doctest::Contains("unknown key 'speed'"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(stg::parse_run_config(R"({"train": {"momentum": 0.9}})"),
                         doctest::Contains("momentum"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(stg::parse_run_config(R"({"ppr": {"alfa": 0.1}})"),
                         doctest::Contains("alfa"), std::invalid_argument);
    CHECK_THROWS_AS(stg::parse_run_config(R"({"hidden_dim": "big"})"), std::invalid_argument);
    CHECK_THROWS_AS(stg::parse_run_config(R"({"seeds": [-1]})"), std::invalid_argument);
    CHECK_THROWS_AS(stg::parse_run_config("not json"), std::invalid_argument);
    CHECK_THROWS_AS(stg::parse_run_config(R"({"heads": []})"), std::invalid_argument);
    CHECK_THROWS_AS(stg::parse_run_config(R"({"heads": ["sage"]})"), std::invalid_argument);
}

TEST_CASE("select_model: default grids evaluate exactly the Appendix points") {
    const Dataset ds = small_synthetic();
    RunConfig cfg = fast_config();
    cfg.simple_gcn_grid = {2, 3, 4};
    cfg.sign_grid = {{3, 0, 0}, {3, 0, 1}, {3, 3, 0}, {4, 2, 1}, {5, 3, 0}};
    const SelectionResult sel = select_model(ds, cfg);

    REQUIRE(sel.evaluated.size() == 8);
    CHECK(sel.evaluated[0].label == "k=2");
    CHECK(sel.evaluated[1].label == "k=3");
    CHECK(sel.evaluated[2].label == "k=4");
    CHECK(sel.evaluated[3].label == "(s,p,t)=(3,0,0)");
    CHECK(sel.evaluated[4].label == "(s,p,t)=(3,0,1)");
    CHECK(sel.evaluated[5].label == "(s,p,t)=(3,3,0)");
    CHECK(sel.evaluated[6].label == "(s,p,t)=(4,2,1)");
    CHECK(sel.evaluated[7].label == "(s,p,t)=(5,3,0)");

    CHECK((sel.simple_gcn_k == 2 || sel.simple_gcn_k == 3 || sel.simple_gcn_k == 4));
    bool found = false;
    for (const auto& t : cfg.sign_grid) found = found || t == sel.sign;
    CHECK(found);

    // The winner carries the best validation accuracy of its grid.
    double best_k = 0.0;
    for (std::size_t i = 0; i < 3; ++i) best_k = std::max(best_k, sel.evaluated[i].val_accuracy);
    const std::string win_label = "k=" + std::to_string(sel.simple_gcn_k);
    for (std::size_t i = 0; i < 3; ++i)
        if (sel.evaluated[i].label == win_label) CHECK(sel.evaluated[i].val_accuracy == best_k);
}

TEST_CASE("select_model: singleton grids return without training") {
    const Dataset ds = small_synthetic();
    RunConfig cfg = fast_config();  // both grids are singletons
    const SelectionResult sel = select_model(ds, cfg);
    CHECK(sel.evaluated.empty());
    CHECK(sel.simple_gcn_k == 2);
    CHECK(sel.sign == std::array<int, 3>{2, 0, 0});

    SUBCASE("disabled heads keep the zero sentinel") {
        cfg.heads = {PipelineHead::mlp};
        const SelectionResult none = select_model(ds, cfg);
        CHECK(none.simple_gcn_k == 0);
        CHECK(none.sign == std::array<int, 3>{0, 0, 0});
        CHECK(none.evaluated.empty());
    }
}

TEST_CASE("run_cascade: single-head ensemble equals the head row") {
    const Dataset ds = small_synthetic();
    RunConfig cfg = fast_config();
    cfg.heads = {PipelineHead::mlp};
    const RunReport report = run_cascade(ds, cfg);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].name == "mlp");
    CHECK(report.rows[1].name == "ensemble");
    CHECK(report.rows[0].seed_accuracies == report.rows[1].seed_accuracies);
    CHECK(report.rows[0].mean == report.rows[1].mean);
}

TEST_CASE("run_cascade: report covers every enabled head once plus the ensemble") {
    const Dataset ds = small_synthetic();
    RunConfig cfg = fast_config();
    const RunReport report = run_cascade(ds, cfg);
    REQUIRE(report.rows.size() == 5);
    CHECK(report.rows[0].name == "mlp");
    CHECK(report.rows[1].name == "gcn");
    CHECK(report.rows[2].name == "simple_gcn");
    CHECK(report.rows[3].name == "sign");
    CHECK(report.rows[4].name == "ensemble");
    for (const auto& row : report.rows) {
        CHECK(row.seed_accuracies.size() == 2);
        CHECK(row.mean >= 0.0);
        CHECK(row.mean <= 1.0);
        CHECK(row.stddev >= 0.0);
    }
    CHECK(report.simple_gcn_k == 2);
    CHECK(report.sign == std::array<int, 3>{2, 0, 0});

    const std::string text = report.to_text();
    CHECK(text.find("+/-") != std::string::npos);
    CHECK(text.find("ensemble") != std::string::npos);
    CHECK(text.find("seeds: 0 1") != std::string::npos);
}

TEST_CASE("run_cascade twice renders byte-identical records") {
    const Dataset ds = small_synthetic();
    const RunConfig cfg = fast_config();
    const std::string r1 = run_cascade(ds, cfg).to_records();
    const std::string r2 = run_cascade(ds, cfg).to_records();
    CHECK(r1 == r2);
    CHECK(r1.find("\"type\":\"run\"") != std::string::npos);
}

TEST_CASE("train_members returns heads in canonical order regardless of config order") {
    const Dataset ds = small_synthetic();
    RunConfig cfg = fast_config();
    cfg.heads = {PipelineHead::sign, PipelineHead::mlp};  // reversed on purpose
    const auto members = stg::train_members(ds, cfg, 0);
    REQUIRE(members.size() == 2);
    CHECK(members[0].name == "mlp");
    CHECK(members[1].name == "sign");
    for (const auto& m : members) {
        CHECK(m.predictions.n_rows() == ds.n_nodes());
        m.predictions.validate();
    }
}

TEST_CASE("train_single reports accuracies consistent with its predictions") {
    const Dataset ds = small_synthetic();
    const RunConfig cfg = fast_config();
    const stg::SingleHeadResult r = stg::train_single(ds, cfg, PipelineHead::sign, 1);
    CHECK(r.head == PipelineHead::sign);
    r.predictions.validate();
    CHECK(r.test_accuracy == stg::accuracy(r.predictions, ds.labels, ds.test_idx));
    CHECK(r.val_accuracy >= 0.0);
    CHECK(r.model.layers.size() == 4);  // sign trains an MLP on diffused blocks
}

TEST_CASE("save_dataset_files round-trips through load_dataset") {
    TempDir tmp;
    const Dataset ds = small_synthetic();
    const std::string dir = (tmp.path / "ds").string();
    stg::save_dataset_files(ds, dir);
    const Dataset back = load_dataset(dir + "/edges.txt", dir + "/features.stgf",
                                      dir + "/labels.txt",
                                      {dir + "/train.txt", dir + "/val.txt", dir + "/test.txt"});
    CHECK(back.graph == ds.graph);
    CHECK(back.labels == ds.labels);
    CHECK(back.train_idx == ds.train_idx);
    CHECK(back.val_idx == ds.val_idx);
    CHECK(back.test_idx == ds.test_idx);
    CHECK(back.n_classes == ds.n_classes);
    // Features pass through a 32-bit file format.
    for (std::size_t i = 0; i < ds.features.data.size(); ++i)
        CHECK(back.features.data[i] ==
              doctest::Approx(ds.features.data[i]).epsilon(1e-6));
}

TEST_CASE("RunConfig validation") {
    RunConfig cfg;
    cfg.heads.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = RunConfig{};
    cfg.simple_gcn_grid.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // simple_gcn enabled, empty grid

    cfg = RunConfig{};
    cfg.heads = {PipelineHead::mlp};
    cfg.simple_gcn_grid.clear();
    cfg.validate();  // grid only required when its head is enabled

    cfg = RunConfig{};
    cfg.seeds.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg = RunConfig{};
    cfg.sign_grid = {{0, 0, 0}};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
