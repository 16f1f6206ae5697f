#pragma once

// Command entry points behind the CLI: ingest, build, train, baseline and
// report.  Long-running commands split their work into (spec, repetition)
// units, fan the units out over a worker pool (PERFGRAPH_WORKERS overrides
// the size), and persist each finished unit under out_dir/partial/ so an
// interrupted run resumes where it left off.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "perfgraph/baseline.hpp"
#include "perfgraph/errors.hpp"
#include "perfgraph/graph_io.hpp"
#include "perfgraph/hetgraph.hpp"
#include "perfgraph/ingest.hpp"
#include "perfgraph/manifest.hpp"
#include "perfgraph/model.hpp"
#include "perfgraph/report.hpp"
#include "perfgraph/results.hpp"
#include "perfgraph/train.hpp"

namespace perfgraph {

/// Number of parallel workers: the PERFGRAPH_WORKERS environment variable if
/// set, otherwise the hardware concurrency (at least 1).
inline int worker_count() {
    if (const char* env = std::getenv("PERFGRAPH_WORKERS")) {
        std::string text(env);
        long v = 0;
        try {
            std::size_t pos = 0;
            v = std::stol(text, &pos);
            if (pos != text.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError("PERFGRAPH_WORKERS must be a positive integer, got '" + text + "'");
        }
        if (v < 1)
            throw ConfigError("PERFGRAPH_WORKERS must be a positive integer, got '" + text + "'");
        return static_cast<int>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct Dataset {
    std::vector<ElaRecord> ela;
    std::vector<ConfigRecord> configs;
    std::vector<PerformanceRecord> performance;
};

namespace runner_detail {

/// Keep only the first `cap` variant ids (sorted) of each family, dropping
/// configuration and performance rows for the rest.
inline void cap_variants(Dataset& data, int cap) {
    if (cap <= 0) return;
    std::map<Family, std::set<std::string>> by_family;
    for (const auto& cfg : data.configs) by_family[cfg.family].insert(cfg.variant_id);
    std::set<std::pair<Family, std::string>> keep;
    for (const auto& [family, ids] : by_family) {
        int taken = 0;
        for (const auto& id : ids) {
            if (taken++ >= cap) break;
            keep.emplace(family, id);
        }
    }
    std::erase_if(data.configs, [&](const ConfigRecord& c) {
        return !keep.count({c.family, c.variant_id});
    });
    std::erase_if(data.performance, [&](const PerformanceRecord& p) {
        return !keep.count({p.family, p.variant_id});
    });
}

inline std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

/// File-name stem for a spec: "modCMA:5:100" -> "modCMA_5_100".
inline std::string spec_stem(const GraphSpec& spec) {
    std::string stem = spec.key();
    for (char& c : stem)
        if (c == ':') c = '_';
    return stem;
}

/// Thread-safe logger writing whole lines to a stream.
class Logger {
public:
    explicit Logger(std::ostream& out) : out_(out) {}
    void line(const std::string& text) {
        std::lock_guard<std::mutex> lock(mutex_);
        out_ << text << '\n';
        out_.flush();
    }

private:
    std::ostream& out_;
    std::mutex mutex_;
};

/// Run `count` jobs over up to `workers` threads; the first exception thrown
/// by any job is re-thrown on the calling thread after all workers stop.
template <typename Body>
inline void run_jobs(int workers, std::size_t count, Body&& body) {
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto loop = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) break;
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (error) break;
            }
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                break;
            }
        }
    };
    std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
    if (n_threads <= 1) {
        loop();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(loop);
        for (auto& th : threads) th.join();
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace runner_detail

/// Load and validate the three input CSVs, applying the per-family variant
/// cap from the manifest.
inline Dataset load_dataset(const RunManifest& m) {
    Dataset data;
    data.ela = load_ela(m.ela_path);
    data.configs = load_configs(m.configs_path);
    data.performance = load_performance(m.performance_path);
    runner_detail::cap_variants(data, m.max_variants_per_family);
    return data;
}

/// The graph specs a run covers: the manifest's explicit list, or every
/// distinct (family, dimension, budget) combination in the performance data.
inline std::vector<GraphSpec> resolve_specs(const RunManifest& m, const Dataset& data) {
    if (!m.specs_all) return m.specs;
    std::set<std::tuple<std::string, int, int>> seen;
    std::vector<GraphSpec> specs;
    for (const auto& rec : data.performance) {
        GraphSpec spec{rec.dimension, rec.budget_multiplier, rec.family};
        if (seen.emplace(family_name(spec.family), spec.dimension, spec.budget_multiplier).second)
            specs.push_back(spec);
    }
    std::sort(specs.begin(), specs.end(), [](const GraphSpec& a, const GraphSpec& b) {
        return std::tuple(family_name(a.family), a.dimension, a.budget_multiplier) <
               std::tuple(family_name(b.family), b.dimension, b.budget_multiplier);
    });
    if (specs.empty()) throw DataError("performance data is empty; no graph specs to run");
    return specs;
}

/// Build the heterogeneous graph for one spec and fail loudly if it violates
/// the schema.
inline HeteroGraph build_validated_graph(const GraphSpec& spec, const Dataset& data,
                                         const TargetTransform& transform) {
    HeteroGraph g = build_graph(spec, data.ela, data.configs, data.performance, transform);
    if (g.count(NodeType::Performance) == 0)
        throw DataError("spec '" + spec.key() + "' selects no performance measurements");
    auto violations = validate_metagraph(g);
    if (!violations.empty()) {
        std::string msg = "graph for spec '" + spec.key() + "' violates the schema:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw DataError(msg);
    }
    return g;
}

inline std::string graph_path(const RunManifest& m, const GraphSpec& spec) {
    return (std::filesystem::path(m.out_dir) / "graphs" /
            (runner_detail::spec_stem(spec) + ".graph"))
        .string();
}

inline std::string results_path(const RunManifest& m) {
    return (std::filesystem::path(m.out_dir) / "results.csv").string();
}

/// Merge every persisted partial unit into out_dir/results.csv and return the
/// merged rows.  Row order in the file is fully determined by the row sort
/// key, so the merge is byte-stable no matter which units ran when.
inline std::vector<ResultRow> compose_results(const RunManifest& m) {
    namespace fs = std::filesystem;
    std::vector<ResultRow> rows;
    for (const char* model_dir : {"gnn", "rf"}) {
        fs::path dir = fs::path(m.out_dir) / "partial" / model_dir;
        if (!fs::exists(dir)) continue;
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".csv")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            auto unit = read_results_csv(file.string());
            rows.insert(rows.end(), unit.begin(), unit.end());
        }
    }
    write_results_csv(results_path(m), rows);
    return rows;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Load the input CSVs, apply the variant cap, and print what the run would
/// cover.  Catches data problems before any expensive work.
inline void run_ingest(const RunManifest& m, std::ostream& out) {
    Dataset data = load_dataset(m);

    std::set<int> problems, instances, dimensions;
    for (const auto& rec : data.ela) {
        problems.insert(rec.problem_id);
        instances.insert(rec.instance_id);
        dimensions.insert(rec.dimension);
    }
    std::map<std::string, int> variants;
    for (const auto& cfg : data.configs) ++variants[std::string(family_name(cfg.family))];

    out << "ela: " << data.ela.size() << " rows, " << problems.size() << " problems, "
        << instances.size() << " instances, " << dimensions.size() << " dimensions\n";
    out << "configs: " << data.configs.size() << " variants";
    for (const auto& [family, count] : variants) out << " (" << family << ": " << count << ")";
    out << "\n";
    auto specs = resolve_specs(m, data);
    out << "performance: " << data.performance.size() << " rows covering " << specs.size()
        << " graph spec(s)\n";
    for (const auto& spec : specs) out << "  " << spec.key() << "\n";
    out << "ingest ok\n";
}

/// Build, validate and save one graph file per spec.
inline void run_build(const RunManifest& m, std::ostream& out) {
    Dataset data = load_dataset(m);
    auto specs = resolve_specs(m, data);
    std::filesystem::create_directories(std::filesystem::path(m.out_dir) / "graphs");
    for (const auto& spec : specs) {
        HeteroGraph g = build_validated_graph(spec, data, m.transform);
        std::string path = graph_path(m, spec);
        save_graph(g, path);
        out << spec.key() << ": " << g.count(NodeType::Performance) << " performance nodes, "
            << g.count(NodeType::Problem) << " problems, " << g.count(NodeType::Algorithm)
            << " algorithms, " << g.total_edges() << " edges -> " << path << "\n";
    }
    out << "build ok\n";
}

namespace runner_detail {

struct Unit {
    std::size_t spec_index;
    int repetition;  // 1-based
};

/// Load each spec's graph from out_dir/graphs, or build it on the fly when
/// the build command has not been run.
inline std::vector<HeteroGraph> load_or_build_graphs(const RunManifest& m,
                                                     const std::vector<GraphSpec>& specs,
                                                     const Dataset& data) {
    std::vector<HeteroGraph> graphs;
    graphs.reserve(specs.size());
    for (const auto& spec : specs) {
        std::string path = graph_path(m, spec);
        if (std::filesystem::exists(path)) {
            HeteroGraph g = load_graph(path);
            if (!(g.spec == spec))
                throw DataError("graph file '" + path + "' holds spec '" + g.spec.key() +
                                "', expected '" + spec.key() + "'");
            graphs.push_back(std::move(g));
        } else {
            graphs.push_back(build_validated_graph(spec, data, m.transform));
        }
    }
    return graphs;
}

inline std::vector<Unit> make_units(std::size_t n_specs, int repetitions) {
    std::vector<Unit> units;
    units.reserve(n_specs * static_cast<std::size_t>(repetitions));
    for (std::size_t s = 0; s < n_specs; ++s)
        for (int rep = 1; rep <= repetitions; ++rep) units.push_back({s, rep});
    return units;
}

}  // namespace runner_detail

/// Train the graph model: nested cross-validation per (spec, repetition)
/// unit, with per-unit partial files for resumability.
inline void run_train(const RunManifest& m, std::ostream& out) {
    namespace rd = runner_detail;
    namespace fs = std::filesystem;

    Dataset data = load_dataset(m);
    auto specs = resolve_specs(m, data);
    auto graphs = rd::load_or_build_graphs(m, specs, data);
    for (auto& g : graphs)
        if (!g.has_reverse_relations()) g = add_reverse_relations(g);

    fs::create_directories(fs::path(m.out_dir) / "partial" / "gnn");
    if (m.save_models) fs::create_directories(fs::path(m.out_dir) / "models");

    auto grid = make_grid(m.grid_embedding, m.grid_dropout, 4, m.final_gelu);
    auto units = rd::make_units(specs.size(), m.repetitions);
    rd::Logger log(out);

    rd::run_jobs(worker_count(), units.size(), [&](std::size_t i) {
        const rd::Unit& unit = units[i];
        const GraphSpec& spec = specs[unit.spec_index];
        const HeteroGraph& g = graphs[unit.spec_index];
        std::string stem = rd::spec_stem(spec) + "_rep" + std::to_string(unit.repetition);
        std::string tag = "[GNN " + spec.key() + " rep " + std::to_string(unit.repetition) + "] ";
        fs::path partial = fs::path(m.out_dir) / "partial" / "gnn" / (stem + ".csv");
        if (fs::exists(partial)) {
            log.line(tag + "already done, skipping");
            return;
        }

        Rng unit_rng =
            Rng(m.seed).child(spec.key()).child("rep", unit.repetition).child("gnn");
        auto result = nested_cv(g, grid, m.train, unit_rng, m.save_models,
                                [&](const std::string& msg) { log.line(tag + msg); });

        std::vector<ResultRow> rows;
        for (const auto& fold : result.outer) {
            ResultRow row;
            row.model = "GNN";
            row.family = spec.family;
            row.dimension = spec.dimension;
            row.budget_multiplier = spec.budget_multiplier;
            row.repetition = unit.repetition;
            row.outer_fold = fold.test_instance;
            row.embedding_size = fold.chosen.embedding_size;
            row.dropout = fold.chosen.dropout;
            row.mse = fold.test_mse;
            rows.push_back(row);
            if (m.save_models && fold.final_params) {
                fs::path ckpt = fs::path(m.out_dir) / "models" /
                                (stem + "_fold" + std::to_string(fold.test_instance) + ".ckpt");
                save_checkpoint(*fold.final_params, ckpt.string());
            }
        }
        write_results_csv(partial.string(), rows);
        log.line(tag + "pooled mse " + rd::fmt_g(result.pooled_mse) + " over " +
                 std::to_string(result.outer.size()) + " folds");
    });

    auto rows = compose_results(m);
    out << "train ok: " << rows.size() << " result rows -> " << results_path(m) << "\n";
}

/// Run the random-forest baseline per (spec, repetition) unit, mirroring the
/// train command's partial-file layout.
inline void run_baseline_cmd(const RunManifest& m, std::ostream& out) {
    namespace rd = runner_detail;
    namespace fs = std::filesystem;

    Dataset data = load_dataset(m);
    auto specs = resolve_specs(m, data);
    auto graphs = rd::load_or_build_graphs(m, specs, data);

    fs::create_directories(fs::path(m.out_dir) / "partial" / "rf");
    auto units = rd::make_units(specs.size(), m.repetitions);
    rd::Logger log(out);

    rd::run_jobs(worker_count(), units.size(), [&](std::size_t i) {
        const rd::Unit& unit = units[i];
        const GraphSpec& spec = specs[unit.spec_index];
        const HeteroGraph& g = graphs[unit.spec_index];
        std::string stem = rd::spec_stem(spec) + "_rep" + std::to_string(unit.repetition);
        std::string tag = "[RF " + spec.key() + " rep " + std::to_string(unit.repetition) + "] ";
        fs::path partial = fs::path(m.out_dir) / "partial" / "rf" / (stem + ".csv");
        if (fs::exists(partial)) {
            log.line(tag + "already done, skipping");
            return;
        }

        Rng unit_rng = Rng(m.seed).child(spec.key()).child("rep", unit.repetition).child("rf");
        auto result = run_baseline(g, m.rf, unit_rng,
                                   [&](const std::string& msg) { log.line(tag + msg); });

        std::vector<ResultRow> rows;
        for (const auto& fold : result.folds) {
            ResultRow row;
            row.model = "RF";
            row.family = spec.family;
            row.dimension = spec.dimension;
            row.budget_multiplier = spec.budget_multiplier;
            row.repetition = unit.repetition;
            row.outer_fold = fold.test_instance;
            row.mse = fold.test_mse;
            rows.push_back(row);
        }
        write_results_csv(partial.string(), rows);
        log.line(tag + "pooled mse " + rd::fmt_g(result.pooled_mse) + " over " +
                 std::to_string(result.folds.size()) + " folds");
    });

    auto rows = compose_results(m);
    out << "baseline ok: " << rows.size() << " result rows -> " << results_path(m) << "\n";
}

/// Aggregate all persisted results into summary.json and report.md.
inline void run_report(const RunManifest& m, std::ostream& out) {
    namespace fs = std::filesystem;
    std::vector<ResultRow> rows;
    if (fs::exists(fs::path(m.out_dir) / "partial")) {
        rows = compose_results(m);
    } else if (fs::exists(results_path(m))) {
        rows = read_results_csv(results_path(m));
    } else {
        throw DataError("no results found under '" + m.out_dir +
                        "'; run the train and baseline commands first");
    }
    if (rows.empty())
        throw DataError("no result rows found under '" + m.out_dir +
                        "'; run the train and baseline commands first");

    std::string summary_path = (fs::path(m.out_dir) / "summary.json").string();
    std::string report_path = (fs::path(m.out_dir) / "report.md").string();
    write_summary_json(summary_path, rows);
    write_report(report_path, rows);

    for (const auto& [model, cells] : summarize_results(rows))
        for (const auto& [key, value] : cells)
            out << model << " " << key << ": mean mse " << runner_detail::fmt_g(value) << "\n";
    out << "report ok: " << summary_path << ", " << report_path << "\n";
}

}  // namespace perfgraph
