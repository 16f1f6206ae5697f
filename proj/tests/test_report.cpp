#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "perfgraph/manifest.hpp"
#include "perfgraph/report.hpp"
#include "perfgraph/results.hpp"

using namespace perfgraph;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    fs::path d = fs::temp_directory_path() / "perfgraph-test-report";
    fs::create_directories(d);
    return d;
}

fs::path write_manifest(const std::string& name, const std::string& text) {
    fs::path p = scratch_dir() / name;
    std::ofstream out(p, std::ios::trunc);
    out << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ResultRow gnn_row(int budget, int rep, int fold, double mse) {
    ResultRow row;
    row.model = "GNN";
    row.family = Family::modCMA;
    row.dimension = 5;
    row.budget_multiplier = budget;
    row.repetition = rep;
    row.outer_fold = fold;
    row.embedding_size = 64;
    row.dropout = 0.2;
    row.mse = mse;
    return row;
}

ResultRow rf_row(int budget, int rep, int fold, double mse) {
    ResultRow row;
    row.model = "RF";
    row.family = Family::modCMA;
    row.dimension = 5;
    row.budget_multiplier = budget;
    row.repetition = rep;
    row.outer_fold = fold;
    row.mse = mse;
    return row;
}

}  // namespace

TEST_CASE("manifest parses every key and resolves relative paths") {
    fs::path p = write_manifest("full.cfg", R"(# full manifest
ela = in/ela.csv
configs = in/configs.csv          # trailing comment
performance = /abs/performance.csv
out_dir = results

specs = modCMA:5:100, modDE:30:1000
target_transform = log10
target_floor = 1e-6
epochs = 44
lr0 = 0.33
plateau_patience = 7
lr_factor = 0.25
plateau_tolerance = 1e-3
repetitions = 3
seed = 77
grid_embedding = 16, 32
grid_dropout = 0.0, 0.25
final_gelu = false
max_variants_per_family = 12
rf_trees = 55
rf_max_depth = 9
rf_min_samples_leaf = 2
rf_features_per_split = 5
rf_bootstrap = false
save_models = true
)");
    RunManifest m = parse_manifest(p.string());

    fs::path base = p.parent_path();
    CHECK(m.ela_path == (base / "in/ela.csv").lexically_normal().string());
    CHECK(m.configs_path == (base / "in/configs.csv").lexically_normal().string());
    CHECK(m.performance_path == "/abs/performance.csv");
    CHECK(m.out_dir == (base / "results").lexically_normal().string());

    REQUIRE_FALSE(m.specs_all);
    REQUIRE(m.specs.size() == 2);
    CHECK(m.specs[0].key() == "modCMA:5:100");
    CHECK(m.specs[1].key() == "modDE:30:1000");

    CHECK(m.transform.kind == TargetTransform::Kind::Log10Clip);
    CHECK(m.transform.floor == 1e-6);
    CHECK(m.train.epochs == 44);
    CHECK(m.train.lr0 == 0.33);
    CHECK(m.train.plateau_patience == 7);
    CHECK(m.train.lr_factor == 0.25);
    CHECK(m.train.plateau_tolerance == 1e-3);
    CHECK(m.repetitions == 3);
    CHECK(m.seed == 77);
    CHECK(m.grid_embedding == std::vector<int>{16, 32});
    CHECK(m.grid_dropout == std::vector<double>{0.0, 0.25});
    CHECK_FALSE(m.final_gelu);
    CHECK(m.max_variants_per_family == 12);
    CHECK(m.rf.n_trees == 55);
    CHECK(m.rf.max_depth == 9);
    CHECK(m.rf.min_samples_leaf == 2);
    CHECK(m.rf.features_per_split == 5);
    CHECK_FALSE(m.rf.bootstrap);
    CHECK(m.save_models);
}

TEST_CASE("manifest defaults match the published experimental setup") {
    fs::path p = write_manifest("defaults.cfg",
                                "ela = a.csv\nconfigs = b.csv\nperformance = c.csv\n"
                                "out_dir = out\n");
    RunManifest m = parse_manifest(p.string());

    CHECK(m.specs_all);
    CHECK(m.specs.empty());
    CHECK(m.transform.kind == TargetTransform::Kind::Log10Clip);
    CHECK(m.transform.floor == 1e-8);
    CHECK(m.train.epochs == 200);
    CHECK(m.train.lr0 == 0.1);
    CHECK(m.train.plateau_patience == 20);
    CHECK(m.train.lr_factor == 0.5);
    CHECK(m.repetitions == 10);
    CHECK(m.grid_embedding == std::vector<int>{32, 64, 128});
    CHECK(m.grid_dropout == std::vector<double>{0.1, 0.2, 0.3});
    CHECK(m.final_gelu);
    CHECK(m.max_variants_per_family == 0);
    CHECK(m.rf.n_trees == 100);
    CHECK(m.rf.max_depth == 0);
    CHECK(m.rf.min_samples_leaf == 1);
    CHECK(m.rf.features_per_split == 16);
    CHECK(m.rf.bootstrap);
    CHECK_FALSE(m.save_models);
}

TEST_CASE("manifest rejects malformed input") {
    auto parse_text = [](const std::string& name, const std::string& text) {
        return parse_manifest(write_manifest(name, text).string());
    };
    const std::string base =
        "ela = a.csv\nconfigs = b.csv\nperformance = c.csv\nout_dir = out\n";

    CHECK_THROWS_MATCHES(parse_text("unknown.cfg", base + "num_layers = 3\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("unknown key 'num_layers'")));
    CHECK_THROWS_MATCHES(
        parse_text("dup.cfg", base + "seed = 1\nseed = 2\n"), ConfigError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("duplicate key")));
    CHECK_THROWS_MATCHES(parse_text("missing.cfg", "ela = a.csv\nout_dir = out\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("missing required key 'configs'")));
    CHECK_THROWS_MATCHES(
        parse_text("badspec.cfg", base + "specs = modCMA:5\n"), ConfigError,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("must look like family:dimension:budget")));
    CHECK_THROWS_MATCHES(parse_text("badfam.cfg", base + "specs = modGA:5:100\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("unknown family 'modGA'")));
    CHECK_THROWS_MATCHES(
        parse_text("badbool.cfg", base + "final_gelu = maybe\n"), ConfigError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("true/false/1/0")));
    CHECK_THROWS_MATCHES(
        parse_text("rawfloor.cfg", base + "target_transform = raw\ntarget_floor = 1e-6\n"),
        ConfigError,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("target_floor only applies")));
    CHECK_THROWS_MATCHES(
        parse_text("baddrop.cfg", base + "grid_dropout = 0.5, 1.0\n"), ConfigError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("[0, 1)")));
    CHECK_THROWS_MATCHES(
        parse_text("noeq.cfg", base + "just a line\n"), ConfigError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("key = value")));
    CHECK_THROWS_AS(parse_manifest((scratch_dir() / "nope.cfg").string()), ConfigError);

    // Line numbers are cited so mistakes are easy to find.
    try {
        parse_text("line.cfg", base + "\n\nepochs = many\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(":7:") != std::string::npos);
    }
}

TEST_CASE("result rows survive a CSV round trip and arrive sorted") {
    fs::path p = scratch_dir() / "results.csv";
    std::vector<ResultRow> rows = {
        rf_row(100, 2, 1, 0.25),        gnn_row(100, 1, 2, 1.5),
        gnn_row(100, 1, 1, 0.125),      rf_row(50, 1, 3, 3.0),
        gnn_row(50, 2, 4, 0.0078125),
    };
    write_results_csv(p.string(), rows);

    auto back = read_results_csv(p.string());
    REQUIRE(back.size() == rows.size());
    // Sorted: GNN before RF, then budget, repetition, fold.
    CHECK(back[0] == gnn_row(50, 2, 4, 0.0078125));
    CHECK(back[1] == gnn_row(100, 1, 1, 0.125));
    CHECK(back[2] == gnn_row(100, 1, 2, 1.5));
    CHECK(back[3] == rf_row(50, 1, 3, 3.0));
    CHECK(back[4] == rf_row(100, 2, 1, 0.25));

    // RF rows leave the hyperparameter fields empty.
    std::string text = slurp(p);
    CHECK(text.find("RF,modCMA,5,50,1,3,,,3\n") != std::string::npos);
    CHECK(text.find("GNN,modCMA,5,100,1,1,64,0.20000000000000001,0.125\n") != std::string::npos);
    CHECK(text.substr(0, text.find('\n')) ==
          "model,family,dimension,budget_multiplier,repetition,outer_fold,"
          "embedding_size,dropout,mse");
    CHECK_FALSE(fs::exists(p.string() + ".tmp"));
}

TEST_CASE("result parsing rejects inconsistent rows") {
    fs::path p = scratch_dir() / "bad.csv";
    auto write_rows = [&](const std::string& row) {
        std::ofstream out(p, std::ios::trunc);
        out << "model,family,dimension,budget_multiplier,repetition,outer_fold,"
               "embedding_size,dropout,mse\n"
            << row << "\n";
    };

    write_rows("SVM,modCMA,5,100,1,1,,,1.0");
    CHECK_THROWS_MATCHES(read_results_csv(p.string()), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("unknown model 'SVM'")));

    write_rows("RF,modCMA,5,100,1,1,64,0.2,1.0");  // RF must not carry hyperparams
    CHECK_THROWS_AS(read_results_csv(p.string()), DataError);

    write_rows("GNN,modCMA,5,100,1,1,,,1.0");  // GNN must carry hyperparams
    CHECK_THROWS_AS(read_results_csv(p.string()), DataError);

    write_rows("GNN,modCMA,5,100,0,1,64,0.2,1.0");  // repetitions are 1-based
    CHECK_THROWS_AS(read_results_csv(p.string()), DataError);
}

TEST_CASE("summaries average over folds and repetitions per model and spec") {
    std::vector<ResultRow> rows = {
        gnn_row(100, 1, 1, 1.0), gnn_row(100, 1, 2, 2.0), gnn_row(100, 2, 1, 3.0),
        rf_row(100, 1, 1, 4.0),  rf_row(300, 1, 1, 8.0),
    };
    auto summary = summarize_results(rows);
    REQUIRE(summary.count("GNN") == 1);
    REQUIRE(summary.count("RF") == 1);
    CHECK(summary["GNN"].at("modCMA:5:100") == 2.0);
    CHECK(summary["RF"].at("modCMA:5:100") == 4.0);
    CHECK(summary["RF"].at("modCMA:5:300") == 8.0);
    CHECK(summary["GNN"].count("modCMA:5:300") == 0);
}

TEST_CASE("summary JSON is deterministic and numerically faithful") {
    std::vector<ResultRow> rows = {gnn_row(100, 1, 1, 1.0), gnn_row(100, 1, 2, 2.0),
                                   rf_row(100, 1, 1, 0.25)};
    std::string text = make_summary_json(rows);
    auto j = nlohmann::json::parse(text);
    CHECK(j["GNN"]["modCMA:5:100"].get<double>() == 1.5);
    CHECK(j["RF"]["modCMA:5:100"].get<double>() == 0.25);
    CHECK(text.find("\"GNN\"") < text.find("\"RF\""));  // alphabetical model order
    CHECK(text.back() == '\n');

    fs::path p = scratch_dir() / "summary.json";
    write_summary_json(p.string(), rows);
    CHECK(slurp(p) == text);
    write_summary_json(p.string(), rows);  // rewrite is byte-identical
    CHECK(slurp(p) == text);
}

TEST_CASE("report bolds the better model on two-decimal values") {
    // One budget where the network wins by the headline margin, one where the
    // baseline wins, one tie after rounding.
    std::vector<ResultRow> rows = {
        gnn_row(100, 1, 1, 1.09),   rf_row(100, 1, 1, 1.72),
        gnn_row(300, 1, 1, 5.19),   rf_row(300, 1, 1, 4.57),
        gnn_row(1000, 1, 1, 0.153), rf_row(1000, 1, 1, 0.1524),
    };
    std::string report = make_report(rows);

    CHECK(report.find("## modCMA, dimension 5") != std::string::npos);
    CHECK(report.find("| 100 | **1.09** | 1.72 | 36.6% |") != std::string::npos);
    CHECK(report.find("| 300 | 5.19 | **4.57** | -13.6% |") != std::string::npos);
    CHECK(report.find("| 1000 | **0.15** | **0.15** | 0.0% |") != std::string::npos);
    CHECK(report.find("Missing results") == std::string::npos);
}

TEST_CASE("report groups sections and flags one-sided specs") {
    std::vector<ResultRow> rows = {gnn_row(100, 1, 1, 1.0), rf_row(100, 1, 1, 2.0)};
    ResultRow de = gnn_row(500, 1, 1, 0.5);
    de.family = Family::modDE;
    de.dimension = 30;
    rows.push_back(de);  // no RF counterpart
    ResultRow rf_only = rf_row(50, 1, 1, 0.75);
    rf_only.dimension = 30;
    rows.push_back(rf_only);  // no GNN counterpart

    std::string report = make_report(rows);
    CHECK(report.find("## modCMA, dimension 5") != std::string::npos);
    CHECK(report.find("## modCMA, dimension 30") != std::string::npos);
    CHECK(report.find("## modDE, dimension 30") != std::string::npos);
    CHECK(report.find("## modCMA, dimension 5") < report.find("## modCMA, dimension 30"));
    CHECK(report.find("## modCMA, dimension 30") < report.find("## modDE, dimension 30"));

    CHECK(report.find("| 500 | 0.50 | — | — |") != std::string::npos);
    CHECK(report.find("| 50 | — | 0.75 | — |") != std::string::npos);
    CHECK(report.find("## Missing results") != std::string::npos);
    CHECK(report.find("- modDE:30:500: no RF rows") != std::string::npos);
    CHECK(report.find("- modCMA:30:50: no GNN rows") != std::string::npos);

    fs::path p = scratch_dir() / "report.md";
    write_report(p.string(), rows);
    CHECK(slurp(p) == report);
}
