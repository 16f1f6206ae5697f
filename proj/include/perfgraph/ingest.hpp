#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "perfgraph/csv.hpp"
#include "perfgraph/errors.hpp"
#include "perfgraph/hetgraph.hpp"

namespace perfgraph {

// CSV schemas (exact headers, UTF-8, '.' decimal separator):
//   ela.csv:         problem_id,instance_id,dimension,ela_1..ela_46
//   configs.csv:     family,variant_id,parameter_name,parameter_value,
//                    parameter_class,execution_part
//   performance.csv: family,variant_id,problem_id,instance_id,dimension,
//                    budget_multiplier,precision

struct ElaRecord {
    int problem_id = 0;   // 1..24
    int instance_id = 0;  // 1..5
    int dimension = 0;    // 5 or 30
    std::array<double, kNumElaFeatures> features{};
};

struct ConfigSetting {
    std::string parameter_name;
    std::string parameter_value;
    std::string parameter_class;
    std::string execution_part;
};

struct ConfigRecord {
    std::string variant_id;
    Family family = Family::modCMA;
    std::vector<ConfigSetting> settings;
};

struct PerformanceRecord {
    Family family = Family::modCMA;
    std::string variant_id;
    int problem_id = 0;
    int instance_id = 0;
    int dimension = 0;
    int budget_multiplier = 0;
    double precision = 0.0;  // distance to the optimum, > 0
};

// Node key conventions: problem "pid|iid", performance "variant|pid|iid",
// parameter "name=value". Variant ids and parameter fields must not contain
// the '|' separator.

inline std::string problem_key(int problem_id, int instance_id) {
    return std::to_string(problem_id) + "|" + std::to_string(instance_id);
}

inline std::string performance_key(const std::string& variant_id, int problem_id,
                                   int instance_id) {
    return variant_id + "|" + problem_key(problem_id, instance_id);
}

inline std::string parameter_key(const std::string& name, const std::string& value) {
    return name + "=" + value;
}

inline std::pair<int, int> parse_problem_key(const std::string& key) {
    auto sep = key.find('|');
    if (sep == std::string::npos)
        throw DataError("malformed problem key '" + key + "'");
    return {static_cast<int>(csv::parse_long(key.substr(0, sep), "problem key")),
            static_cast<int>(csv::parse_long(key.substr(sep + 1), "problem key"))};
}

namespace ingest_detail {

inline std::vector<std::string> ela_header() {
    std::vector<std::string> h = {"problem_id", "instance_id", "dimension"};
    for (int i = 1; i <= kNumElaFeatures; ++i) h.push_back("ela_" + std::to_string(i));
    return h;
}

inline std::string row_ctx(const std::string& path, long line) {
    return path + ":" + std::to_string(line);
}

inline void check_no_separator(const std::string& value, const std::string& ctx) {
    if (value.find('|') != std::string::npos)
        throw DataError(ctx + ": field must not contain '|': \"" + value + "\"");
    if (value.empty()) throw DataError(ctx + ": empty identifier field");
}

}  // namespace ingest_detail

inline std::vector<ElaRecord> load_ela(const std::string& path) {
    auto rows = csv::read_file(path, ingest_detail::ela_header());
    std::vector<ElaRecord> out;
    std::map<std::tuple<int, int, int>, long> seen;  // key -> first line
    for (const auto& row : rows) {
        const std::string ctx = ingest_detail::row_ctx(path, row.line);
        ElaRecord rec;
        rec.problem_id = static_cast<int>(csv::parse_long(row.fields[0], ctx));
        rec.instance_id = static_cast<int>(csv::parse_long(row.fields[1], ctx));
        rec.dimension = static_cast<int>(csv::parse_long(row.fields[2], ctx));
        if (rec.problem_id < 1 || rec.problem_id > 24)
            throw DataError(ctx + ": problem_id " + std::to_string(rec.problem_id) +
                            " outside 1..24");
        if (rec.instance_id < 1 || rec.instance_id > 5)
            throw DataError(ctx + ": instance_id " + std::to_string(rec.instance_id) +
                            " outside 1..5");
        if (rec.dimension != 5 && rec.dimension != 30)
            throw DataError(ctx + ": dimension " + std::to_string(rec.dimension) +
                            " not in {5,30}");
        for (int i = 0; i < kNumElaFeatures; ++i) {
            double v = csv::parse_double(row.fields[static_cast<size_t>(3 + i)], ctx);
            if (!std::isfinite(v))
                throw DataError(ctx + ": non-finite value in ela_" + std::to_string(i + 1));
            rec.features[static_cast<size_t>(i)] = v;
        }
        auto key = std::make_tuple(rec.problem_id, rec.instance_id, rec.dimension);
        auto [it, inserted] = seen.emplace(key, row.line);
        if (!inserted)
            throw DataError(ctx + ": duplicate (problem,instance,dimension) key, first seen at " +
                            ingest_detail::row_ctx(path, it->second));
        out.push_back(rec);
    }
    return out;
}

inline std::vector<ConfigRecord> load_configs(const std::string& path) {
    auto rows = csv::read_file(path, {"family", "variant_id", "parameter_name",
                                      "parameter_value", "parameter_class", "execution_part"});
    // Group rows into one record per (family, variant).
    std::map<std::pair<int, std::string>, ConfigRecord> grouped;
    std::map<std::tuple<int, std::string, std::string>, long> param_seen;
    for (const auto& row : rows) {
        const std::string ctx = ingest_detail::row_ctx(path, row.line);
        auto fam = parse_family(row.fields[0]);
        if (!fam) throw DataError(ctx + ": unknown family '" + row.fields[0] + "'");
        for (const auto& f : row.fields) ingest_detail::check_no_separator(f, ctx);

        auto pkey = std::make_tuple(static_cast<int>(*fam), row.fields[1], row.fields[2]);
        auto [pit, inserted] = param_seen.emplace(pkey, row.line);
        if (!inserted)
            throw DataError(ctx + ": variant '" + row.fields[1] + "' sets parameter '" +
                            row.fields[2] + "' twice, first at " +
                            ingest_detail::row_ctx(path, pit->second));

        auto& rec = grouped[{static_cast<int>(*fam), row.fields[1]}];
        rec.family = *fam;
        rec.variant_id = row.fields[1];
        rec.settings.push_back(
            ConfigSetting{row.fields[2], row.fields[3], row.fields[4], row.fields[5]});
    }
    std::vector<ConfigRecord> out;
    out.reserve(grouped.size());
    for (auto& [_, rec] : grouped) out.push_back(std::move(rec));
    return out;
}

inline std::vector<PerformanceRecord> load_performance(const std::string& path) {
    auto rows = csv::read_file(path, {"family", "variant_id", "problem_id", "instance_id",
                                      "dimension", "budget_multiplier", "precision"});
    std::vector<PerformanceRecord> out;
    std::map<std::tuple<int, std::string, int, int, int, int>, long> seen;
    for (const auto& row : rows) {
        const std::string ctx = ingest_detail::row_ctx(path, row.line);
        PerformanceRecord rec;
        auto fam = parse_family(row.fields[0]);
        if (!fam) throw DataError(ctx + ": unknown family '" + row.fields[0] + "'");
        rec.family = *fam;
        ingest_detail::check_no_separator(row.fields[1], ctx);
        rec.variant_id = row.fields[1];
        rec.problem_id = static_cast<int>(csv::parse_long(row.fields[2], ctx));
        rec.instance_id = static_cast<int>(csv::parse_long(row.fields[3], ctx));
        rec.dimension = static_cast<int>(csv::parse_long(row.fields[4], ctx));
        rec.budget_multiplier = static_cast<int>(csv::parse_long(row.fields[5], ctx));
        rec.precision = csv::parse_double(row.fields[6], ctx);
        if (!(rec.precision > 0.0) || !std::isfinite(rec.precision))
            throw DataError(ctx + ": precision must be a positive finite number, got " +
                            row.fields[6]);
        auto key = std::make_tuple(static_cast<int>(rec.family), rec.variant_id,
                                   rec.problem_id, rec.instance_id, rec.dimension,
                                   rec.budget_multiplier);
        auto [it, inserted] = seen.emplace(key, row.line);
        if (!inserted)
            throw DataError(ctx + ": duplicate performance key, first seen at " +
                            ingest_detail::row_ctx(path, it->second));
        out.push_back(std::move(rec));
    }
    return out;
}

inline double transform_target(double precision, const TargetTransform& t) {
    return t.apply(precision);
}

/// Build one validated heterogeneous graph for a GraphSpec.
///
/// Problem nodes cover every (problem, instance) with ELA data at the
/// requested dimension; algorithm nodes cover every variant of the requested
/// family;
/// parameter nodes are shared across variants, one per distinct
/// (parameter_name, parameter_value) pair. Performance nodes are created for
/// exactly the matching performance records. Node order is fixed by sorted
/// natural keys so rebuilding from the same files is bit-identical.
inline HeteroGraph build_graph(const GraphSpec& spec, const std::vector<ElaRecord>& ela,
                               const std::vector<ConfigRecord>& configs,
                               const std::vector<PerformanceRecord>& perf,
                               const TargetTransform& transform = {}) {
    HeteroGraph g;
    g.spec = spec;
    g.transform = transform;
    for (const auto& rel : metagraph_relations()) {
        g.relations.push_back(rel);
        g.edges.emplace_back();
    }

    // Problem nodes, sorted by (problem_id, instance_id).
    std::vector<const ElaRecord*> problems;
    for (const auto& e : ela)
        if (e.dimension == spec.dimension) problems.push_back(&e);
    std::sort(problems.begin(), problems.end(), [](const ElaRecord* a, const ElaRecord* b) {
        return std::tie(a->problem_id, a->instance_id) < std::tie(b->problem_id, b->instance_id);
    });
    std::map<std::pair<int, int>, int> problem_index;
    ad::Matrix problem_features(static_cast<Eigen::Index>(problems.size()), kNumElaFeatures);
    for (size_t i = 0; i < problems.size(); ++i) {
        const auto* e = problems[i];
        problem_index[{e->problem_id, e->instance_id}] = static_cast<int>(i);
        g.node_keys[static_cast<size_t>(NodeType::Problem)].push_back(
            problem_key(e->problem_id, e->instance_id));
        for (int j = 0; j < kNumElaFeatures; ++j)
            problem_features(static_cast<Eigen::Index>(i), j) =
                e->features[static_cast<size_t>(j)];
    }
    g.features[static_cast<size_t>(NodeType::Problem)] = std::move(problem_features);

    // Algorithm nodes, sorted by variant id.
    std::vector<const ConfigRecord*> variants;
    for (const auto& c : configs)
        if (c.family == spec.family) variants.push_back(&c);
    std::sort(variants.begin(), variants.end(),
              [](const ConfigRecord* a, const ConfigRecord* b) {
                  return a->variant_id < b->variant_id;
              });
    std::map<std::string, int> variant_index;
    for (size_t i = 0; i < variants.size(); ++i) {
        variant_index[variants[i]->variant_id] = static_cast<int>(i);
        g.node_keys[static_cast<size_t>(NodeType::Algorithm)].push_back(variants[i]->variant_id);
    }

    // Parameter, class and execution-part nodes from the union of settings.
    std::set<std::pair<std::string, std::string>> param_pairs;
    std::set<std::string> classes, parts;
    for (const auto* v : variants)
        for (const auto& s : v->settings) {
            param_pairs.insert({s.parameter_name, s.parameter_value});
            classes.insert(s.parameter_class);
            parts.insert(s.execution_part);
        }
    std::map<std::pair<std::string, std::string>, int> param_index;
    for (const auto& p : param_pairs) {
        param_index[p] = static_cast<int>(param_index.size());
        g.node_keys[static_cast<size_t>(NodeType::Parameter)].push_back(
            parameter_key(p.first, p.second));
    }
    std::map<std::string, int> class_index, part_index;
    for (const auto& c : classes) {
        class_index[c] = static_cast<int>(class_index.size());
        g.node_keys[static_cast<size_t>(NodeType::ParameterClass)].push_back(c);
    }
    for (const auto& p : parts) {
        part_index[p] = static_cast<int>(part_index.size());
        g.node_keys[static_cast<size_t>(NodeType::AlgorithmExecutionPart)].push_back(p);
    }

    // Configuration-chain edges, deduplicated (parameter nodes are shared).
    std::set<std::pair<int, int>> has_param, has_class, controls;
    for (const auto* v : variants) {
        int ai = variant_index[v->variant_id];
        for (const auto& s : v->settings) {
            int pi = param_index[{s.parameter_name, s.parameter_value}];
            int ci = class_index[s.parameter_class];
            int xi = part_index[s.execution_part];
            has_param.insert({ai, pi});
            has_class.insert({pi, ci});
            controls.insert({ci, xi});
        }
    }
    for (auto& e : has_param) g.edges[0].push_back(e);
    for (auto& e : has_class) g.edges[1].push_back(e);
    for (auto& e : controls) g.edges[2].push_back(e);

    // Performance nodes for matching records, sorted by (variant, problem,
    // instance), with referential-integrity checks against the other inputs.
    std::vector<const PerformanceRecord*> records;
    for (const auto& p : perf)
        if (p.family == spec.family && p.dimension == spec.dimension &&
            p.budget_multiplier == spec.budget_multiplier)
            records.push_back(&p);
    std::sort(records.begin(), records.end(),
              [](const PerformanceRecord* a, const PerformanceRecord* b) {
                  return std::tie(a->variant_id, a->problem_id, a->instance_id) <
                         std::tie(b->variant_id, b->problem_id, b->instance_id);
              });
    for (size_t i = 0; i < records.size(); ++i) {
        const auto* p = records[i];
        auto vit = variant_index.find(p->variant_id);
        if (vit == variant_index.end())
            throw DataError("performance record references unknown variant '" + p->variant_id +
                            "' of family " + std::string(family_name(spec.family)));
        auto pit = problem_index.find({p->problem_id, p->instance_id});
        if (pit == problem_index.end())
            throw DataError("performance record references problem " +
                            problem_key(p->problem_id, p->instance_id) +
                            " with no ELA data at dimension " +
                            std::to_string(spec.dimension));
        g.node_keys[static_cast<size_t>(NodeType::Performance)].push_back(
            performance_key(p->variant_id, p->problem_id, p->instance_id));
        g.edges[3].push_back({static_cast<int>(i), vit->second});   // has-algorithm
        g.edges[4].push_back({static_cast<int>(i), pit->second});   // has-problem
        g.targets.push_back(transform.apply(p->precision));
    }
    const size_t n_perf = records.size();
    g.train_mask.assign(n_perf, 0);
    g.val_mask.assign(n_perf, 0);
    g.test_mask.assign(n_perf, 0);
    return g;
}

/// Instance id of every performance node, recovered through its has-problem
/// edge and the problem node key.
inline std::vector<int> performance_instance_ids(const HeteroGraph& g) {
    int ri = g.relation_index("has-problem");
    if (ri < 0) throw ConfigError("graph has no has-problem relation");
    const int n_perf = g.count(NodeType::Performance);
    std::vector<int> out(static_cast<size_t>(n_perf), -1);
    for (const auto& [s, d] : g.edges[static_cast<size_t>(ri)]) {
        auto [pid, iid] = parse_problem_key(g.keys(NodeType::Problem)[static_cast<size_t>(d)]);
        (void)pid;
        out[static_cast<size_t>(s)] = iid;
    }
    for (int i = 0; i < n_perf; ++i)
        if (out[static_cast<size_t>(i)] < 0)
            throw DataError("performance node " + std::to_string(i) + " has no has-problem edge");
    return out;
}

/// Problem-node row index of every performance node.
inline std::vector<int> performance_problem_rows(const HeteroGraph& g) {
    int ri = g.relation_index("has-problem");
    if (ri < 0) throw ConfigError("graph has no has-problem relation");
    const int n_perf = g.count(NodeType::Performance);
    std::vector<int> out(static_cast<size_t>(n_perf), -1);
    for (const auto& [s, d] : g.edges[static_cast<size_t>(ri)])
        out[static_cast<size_t>(s)] = d;
    return out;
}

/// Variant (algorithm-node) index of every performance node.
inline std::vector<int> performance_variant_rows(const HeteroGraph& g) {
    int ri = g.relation_index("has-algorithm");
    if (ri < 0) throw ConfigError("graph has no has-algorithm relation");
    const int n_perf = g.count(NodeType::Performance);
    std::vector<int> out(static_cast<size_t>(n_perf), -1);
    for (const auto& [s, d] : g.edges[static_cast<size_t>(ri)])
        out[static_cast<size_t>(s)] = d;
    return out;
}

/// Instance ids of the problem nodes themselves, by node index.
inline std::vector<int> problem_instance_ids(const HeteroGraph& g) {
    std::vector<int> out;
    for (const auto& key : g.keys(NodeType::Problem)) out.push_back(parse_problem_key(key).second);
    return out;
}

}  // namespace perfgraph
