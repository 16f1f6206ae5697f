#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "perfgraph/csv.hpp"
#include "perfgraph/errors.hpp"
#include "perfgraph/ingest.hpp"
#include "perfgraph/rng.hpp"

namespace perfgraph::synth {

// Deterministic generator for benchmark-shaped datasets. Shapes mirror the
// real corpora (two configurable families with 324 and 576 variants, up to
// 24 problems x 5 instances, dimensions 5/30, 46 landscape features) while
// targets follow a known additive structure so models can actually learn.

struct ModuleDef {
    std::string name;
    std::vector<std::string> options;
    std::string parameter_class;
    std::string execution_part;
};

inline const std::vector<ModuleDef>& modules_for(Family family) {
    static const std::vector<ModuleDef> cma = {
        {"active", {"off", "on"}, "covariance-adaptation", "adaptation"},
        {"elitism", {"off", "on"}, "selection-scheme", "selection"},
        {"mirrored", {"off", "mirrored", "pairwise"}, "sampling-scheme", "sampling"},
        {"base_sampler", {"gaussian", "sobol", "halton"}, "sampling-scheme", "sampling"},
        {"weights_option", {"default", "equal", "half-power"}, "recombination-weights",
         "recombination"},
        {"local_restart", {"off", "ipop", "bipop"}, "restart-strategy", "restart"},
    };
    static const std::vector<ModuleDef> de = {
        {"mutation_base", {"rand", "best"}, "mutation-scheme", "mutation"},
        {"mutation_n_comps", {"one", "two"}, "mutation-scheme", "mutation"},
        {"use_archive", {"off", "on"}, "archive-usage", "mutation"},
        {"crossover", {"bin", "exp"}, "crossover-scheme", "crossover"},
        {"adaptation_method", {"off", "shade"}, "parameter-adaptation", "adaptation"},
        {"lpsr", {"off", "on"}, "population-reduction", "population-management"},
        {"boundary_correction", {"saturate", "resample", "toroidal"}, "boundary-handling",
         "correction"},
        {"init", {"uniform", "gaussian", "halton"}, "initialization-scheme", "initialization"},
    };
    return family == Family::modCMA ? cma : de;
}

inline int full_variant_count(Family family) {
    int n = 1;
    for (const auto& m : modules_for(family)) n *= static_cast<int>(m.options.size());
    return n;  // 324 for modCMA, 576 for modDE
}

/// Enumerate the full factorial grid (mixed-radix, first module slowest) and
/// return the first `count` variants (0 = all). Ids are zero-padded so the
/// lexicographic node order matches enumeration order.
inline std::vector<ConfigRecord> make_configs(Family family, int count = 0) {
    const auto& mods = modules_for(family);
    const int total = full_variant_count(family);
    if (count <= 0 || count > total) count = total;
    const char* prefix = family == Family::modCMA ? "cma" : "de";
    std::vector<ConfigRecord> out;
    for (int idx = 0; idx < count; ++idx) {
        ConfigRecord rec;
        rec.family = family;
        char buf[16];
        std::snprintf(buf, sizeof buf, "%s%03d", prefix, idx);
        rec.variant_id = buf;
        int rem = idx;
        for (auto it = mods.rbegin(); it != mods.rend(); ++it) {
            int k = rem % static_cast<int>(it->options.size());
            rem /= static_cast<int>(it->options.size());
            rec.settings.push_back(ConfigSetting{it->name, it->options[static_cast<size_t>(k)],
                                                 it->parameter_class, it->execution_part});
        }
        std::reverse(rec.settings.begin(), rec.settings.end());
        out.push_back(std::move(rec));
    }
    return out;
}

inline double normal_draw(Rng& rng) {
    double u1 = 1.0 - rng.uniform();  // (0, 1]
    double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

struct DatasetOptions {
    Family family = Family::modCMA;
    int dimension = 5;
    std::vector<int> budget_multipliers = {100};
    int num_problems = 2;    // <= 24
    int num_instances = 2;   // <= 5
    int num_variants = 4;    // 0 = full grid
    uint64_t seed = 1;
    double noise_sigma = 0.05;
};

struct Dataset {
    std::vector<ElaRecord> ela;
    std::vector<ConfigRecord> configs;
    std::vector<PerformanceRecord> performance;
};

inline std::vector<ElaRecord> make_ela(int dimension, int num_problems, int num_instances,
                                       uint64_t seed) {
    Rng root(seed);
    std::vector<ElaRecord> out;
    for (int pid = 1; pid <= num_problems; ++pid)
        for (int iid = 1; iid <= num_instances; ++iid) {
            ElaRecord rec;
            rec.problem_id = pid;
            rec.instance_id = iid;
            rec.dimension = dimension;
            Rng base = root.child("ela-base", static_cast<uint64_t>(dimension * 100 + pid));
            Rng jitter = base.child("instance", static_cast<uint64_t>(iid));
            for (int j = 0; j < kNumElaFeatures; ++j)
                rec.features[static_cast<size_t>(j)] =
                    base.child("feature", static_cast<uint64_t>(j)).uniform(-2.0, 2.0) +
                    0.15 * jitter.child("feature", static_cast<uint64_t>(j)).uniform(-1.0, 1.0);
            out.push_back(rec);
        }
    return out;
}

/// Ground-truth log10 precision: additive module effects + a linear-ish
/// landscape term + budget decay + Gaussian noise, clamped well inside the
/// representable precision range.
inline double true_log_precision(const Dataset& data, const ConfigRecord& variant,
                                 const ElaRecord& problem, int budget_multiplier,
                                 uint64_t seed, double noise_sigma) {
    Rng root(seed);
    Rng effects = root.child(family_name(variant.family)).child("effects");
    double y = 0.5;
    for (const auto& s : variant.settings)
        y += effects.child(s.parameter_name).child(s.parameter_value).uniform(-0.45, 0.45);
    Rng weights = root.child("weights");
    for (int j = 0; j < 10; ++j)
        y += 0.35 * weights.child("w", static_cast<uint64_t>(j)).uniform(-1.0, 1.0) *
             problem.features[static_cast<size_t>(j)];
    y += 0.2 * std::sin(2.1 * problem.features[0] +
                        effects.child(variant.settings.front().parameter_name)
                            .child("phase")
                            .uniform(0.0, 6.28));
    y -= 1.1 * std::log10(static_cast<double>(budget_multiplier) / 50.0);
    Rng noise = root.child("noise")
                    .child(variant.variant_id)
                    .child(problem_key(problem.problem_id, problem.instance_id))
                    .child("b", static_cast<uint64_t>(budget_multiplier));
    y += noise_sigma * normal_draw(noise);
    (void)data;
    return std::min(2.5, std::max(-7.5, y));
}

inline Dataset make_dataset(const DatasetOptions& opt) {
    Dataset data;
    data.ela = make_ela(opt.dimension, opt.num_problems, opt.num_instances, opt.seed);
    data.configs = make_configs(opt.family, opt.num_variants);
    for (const auto& v : data.configs)
        for (const auto& e : data.ela)
            for (int b : opt.budget_multipliers) {
                PerformanceRecord rec;
                rec.family = opt.family;
                rec.variant_id = v.variant_id;
                rec.problem_id = e.problem_id;
                rec.instance_id = e.instance_id;
                rec.dimension = e.dimension;
                rec.budget_multiplier = b;
                double y = true_log_precision(data, v, e, b, opt.seed, opt.noise_sigma);
                rec.precision = std::pow(10.0, y);
                data.performance.push_back(rec);
            }
    return data;
}

inline void write_csvs(const std::filesystem::path& dir, const Dataset& data) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "ela.csv");
        if (!f) throw DataError("cannot write " + (dir / "ela.csv").string());
        f << "problem_id,instance_id,dimension";
        for (int j = 1; j <= kNumElaFeatures; ++j) f << ",ela_" << j;
        f << "\n";
        for (const auto& e : data.ela) {
            f << e.problem_id << ',' << e.instance_id << ',' << e.dimension;
            for (int j = 0; j < kNumElaFeatures; ++j)
                f << ',' << csv::format_double(e.features[static_cast<size_t>(j)]);
            f << "\n";
        }
    }
    {
        std::ofstream f(dir / "configs.csv");
        if (!f) throw DataError("cannot write " + (dir / "configs.csv").string());
        f << "family,variant_id,parameter_name,parameter_value,parameter_class,execution_part\n";
        for (const auto& v : data.configs)
            for (const auto& s : v.settings)
                f << family_name(v.family) << ',' << v.variant_id << ',' << s.parameter_name
                  << ',' << s.parameter_value << ',' << s.parameter_class << ','
                  << s.execution_part << "\n";
    }
    {
        std::ofstream f(dir / "performance.csv");
        if (!f) throw DataError("cannot write " + (dir / "performance.csv").string());
        f << "family,variant_id,problem_id,instance_id,dimension,budget_multiplier,precision\n";
        for (const auto& p : data.performance)
            f << family_name(p.family) << ',' << p.variant_id << ',' << p.problem_id << ','
              << p.instance_id << ',' << p.dimension << ',' << p.budget_multiplier << ','
              << csv::format_double(p.precision) << "\n";
    }
}

}  // namespace perfgraph::synth
