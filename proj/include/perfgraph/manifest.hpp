#pragma once

// Run manifests: the single configuration file consumed by every CLI
// subcommand.  A manifest is a plain-text file of `key = value` lines with
// '#' comments; relative paths are resolved against the manifest's directory.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "perfgraph/baseline.hpp"
#include "perfgraph/errors.hpp"
#include "perfgraph/hetgraph.hpp"
#include "perfgraph/train.hpp"

namespace perfgraph {

/// Everything a run needs: input files, output directory, graph specs,
/// training configuration, hyperparameter grid, and baseline settings.
struct RunManifest {
    std::string ela_path;
    std::string configs_path;
    std::string performance_path;
    std::string out_dir;

    /// Empty + specs_all=true means "every (family, dimension, budget)
    /// combination present in the performance table".
    bool specs_all = true;
    std::vector<GraphSpec> specs;

    TargetTransform transform;  // defaults to log10 with floor 1e-8

    TrainConfig train;
    int repetitions = 10;
    std::uint64_t seed = 1;

    std::vector<int> grid_embedding = {32, 64, 128};
    std::vector<double> grid_dropout = {0.1, 0.2, 0.3};
    bool final_gelu = true;

    /// Cap on variants kept per algorithm family (smallest variant ids win);
    /// 0 keeps everything.
    int max_variants_per_family = 0;

    RfConfig rf;

    /// When true, the train command saves the final per-fold checkpoints.
    bool save_models = false;
};

namespace manifest_detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

struct Context {
    std::string path;
    int line = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("manifest " + path + ":" + std::to_string(line) + ": " + msg);
    }
};

inline long parse_int(const Context& ctx, const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        ctx.fail("key '" + key + "' expects an integer, got '" + value + "'");
    }
}

inline double parse_num(const Context& ctx, const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        ctx.fail("key '" + key + "' expects a number, got '" + value + "'");
    }
}

inline bool parse_bool(const Context& ctx, const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    ctx.fail("key '" + key + "' expects true/false/1/0, got '" + value + "'");
}

inline GraphSpec parse_spec(const Context& ctx, const std::string& text) {
    auto parts = split(text, ':');
    if (parts.size() != 3)
        ctx.fail("spec '" + text + "' must look like family:dimension:budget");
    GraphSpec spec;
    auto family = parse_family(parts[0]);
    if (!family) ctx.fail("spec '" + text + "' names unknown family '" + parts[0] + "'");
    spec.family = *family;
    spec.dimension = static_cast<int>(parse_int(ctx, "specs", parts[1]));
    spec.budget_multiplier = static_cast<int>(parse_int(ctx, "specs", parts[2]));
    if (spec.dimension <= 0) ctx.fail("spec '" + text + "' has non-positive dimension");
    if (spec.budget_multiplier <= 0) ctx.fail("spec '" + text + "' has non-positive budget");
    return spec;
}

inline std::string resolve_path(const std::filesystem::path& base, const std::string& value) {
    std::filesystem::path p(value);
    if (p.is_absolute()) return p.lexically_normal().string();
    return (base / p).lexically_normal().string();
}

}  // namespace manifest_detail

/// Parse a manifest file.  Unknown or duplicate keys are configuration
/// errors, as are malformed values; missing required keys (the three input
/// CSVs and out_dir) are reported with the file path.
inline RunManifest parse_manifest(const std::string& path) {
    namespace md = manifest_detail;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest file '" + path + "'");

    std::filesystem::path base = std::filesystem::path(path).parent_path();
    RunManifest m;
    md::Context ctx{path, 0};
    std::set<std::string> seen;
    bool transform_raw = false;
    double target_floor = 1e-8;
    bool floor_given = false;

    std::string raw;
    while (std::getline(in, raw)) {
        ++ctx.line;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = md::trim(line);
        if (line.empty()) continue;

        auto eq = line.find('=');
        if (eq == std::string::npos) ctx.fail("expected 'key = value', got '" + line + "'");
        std::string key = md::trim(line.substr(0, eq));
        std::string value = md::trim(line.substr(eq + 1));
        if (key.empty()) ctx.fail("empty key");
        if (value.empty()) ctx.fail("key '" + key + "' has an empty value");
        if (!seen.insert(key).second) ctx.fail("duplicate key '" + key + "'");

        if (key == "ela") {
            m.ela_path = md::resolve_path(base, value);
        } else if (key == "configs") {
            m.configs_path = md::resolve_path(base, value);
        } else if (key == "performance") {
            m.performance_path = md::resolve_path(base, value);
        } else if (key == "out_dir") {
            m.out_dir = md::resolve_path(base, value);
        } else if (key == "specs") {
            if (value == "all") {
                m.specs_all = true;
                m.specs.clear();
            } else {
                m.specs_all = false;
                m.specs.clear();
                for (const auto& item : md::split(value, ','))
                    if (!item.empty()) m.specs.push_back(md::parse_spec(ctx, item));
                if (m.specs.empty()) ctx.fail("key 'specs' lists no graph specs");
            }
        } else if (key == "target_transform") {
            if (value == "log10") transform_raw = false;
            else if (value == "raw") transform_raw = true;
            else ctx.fail("key 'target_transform' expects log10 or raw, got '" + value + "'");
        } else if (key == "target_floor") {
            target_floor = md::parse_num(ctx, key, value);
            floor_given = true;
            if (!(target_floor > 0)) ctx.fail("key 'target_floor' must be positive");
        } else if (key == "epochs") {
            m.train.epochs = static_cast<int>(md::parse_int(ctx, key, value));
        } else if (key == "lr0") {
            m.train.lr0 = md::parse_num(ctx, key, value);
        } else if (key == "plateau_patience") {
            m.train.plateau_patience = static_cast<int>(md::parse_int(ctx, key, value));
        } else if (key == "lr_factor") {
            m.train.lr_factor = md::parse_num(ctx, key, value);
        } else if (key == "plateau_tolerance") {
            m.train.plateau_tolerance = md::parse_num(ctx, key, value);
        } else if (key == "repetitions") {
            m.repetitions = static_cast<int>(md::parse_int(ctx, key, value));
            if (m.repetitions < 1) ctx.fail("key 'repetitions' must be at least 1");
        } else if (key == "seed") {
            long v = md::parse_int(ctx, key, value);
            if (v < 0) ctx.fail("key 'seed' must be non-negative");
            m.seed = static_cast<std::uint64_t>(v);
        } else if (key == "grid_embedding") {
            m.grid_embedding.clear();
            for (const auto& item : md::split(value, ',')) {
                int d = static_cast<int>(md::parse_int(ctx, key, item));
                if (d < 1) ctx.fail("key 'grid_embedding' entries must be positive");
                m.grid_embedding.push_back(d);
            }
            if (m.grid_embedding.empty()) ctx.fail("key 'grid_embedding' lists no sizes");
        } else if (key == "grid_dropout") {
            m.grid_dropout.clear();
            for (const auto& item : md::split(value, ',')) {
                double r = md::parse_num(ctx, key, item);
                if (r < 0.0 || r >= 1.0) ctx.fail("key 'grid_dropout' entries must lie in [0, 1)");
                m.grid_dropout.push_back(r);
            }
            if (m.grid_dropout.empty()) ctx.fail("key 'grid_dropout' lists no rates");
        } else if (key == "final_gelu") {
            m.final_gelu = md::parse_bool(ctx, key, value);
        } else if (key == "max_variants_per_family") {
            m.max_variants_per_family = static_cast<int>(md::parse_int(ctx, key, value));
            if (m.max_variants_per_family < 0)
                ctx.fail("key 'max_variants_per_family' must be non-negative");
        } else if (key == "rf_trees") {
            m.rf.n_trees = static_cast<int>(md::parse_int(ctx, key, value));
        } else if (key == "rf_max_depth") {
            m.rf.max_depth = static_cast<int>(md::parse_int(ctx, key, value));
        } else if (key == "rf_min_samples_leaf") {
            m.rf.min_samples_leaf = static_cast<int>(md::parse_int(ctx, key, value));
        } else if (key == "rf_features_per_split") {
            m.rf.features_per_split = static_cast<int>(md::parse_int(ctx, key, value));
        } else if (key == "rf_bootstrap") {
            m.rf.bootstrap = md::parse_bool(ctx, key, value);
        } else if (key == "save_models") {
            m.save_models = md::parse_bool(ctx, key, value);
        } else {
            ctx.fail("unknown key '" + key + "'");
        }
    }

    if (transform_raw) {
        if (floor_given)
            throw ConfigError("manifest " + path + ": target_floor only applies to the log10 transform");
        m.transform.kind = TargetTransform::Kind::Raw;
    } else {
        m.transform.kind = TargetTransform::Kind::Log10Clip;
        m.transform.floor = target_floor;
    }

    auto require = [&](const std::string& key, const std::string& v) {
        if (v.empty())
            throw ConfigError("manifest " + path + ": missing required key '" + key + "'");
    };
    require("ela", m.ela_path);
    require("configs", m.configs_path);
    require("performance", m.performance_path);
    require("out_dir", m.out_dir);

    validate_train_config(m.train);
    validate_rf_config(m.rf);
    return m;
}

}  // namespace perfgraph
