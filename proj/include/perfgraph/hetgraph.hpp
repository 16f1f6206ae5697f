#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "perfgraph/errors.hpp"
#include "perfgraph/tensor.hpp"

namespace perfgraph {

constexpr int kNumNodeTypes = 6;
constexpr int kNumElaFeatures = 46;

enum class NodeType {
    Parameter = 0,
    ParameterClass = 1,
    AlgorithmExecutionPart = 2,
    Algorithm = 3,
    Performance = 4,
    Problem = 5,
};

constexpr std::array<NodeType, kNumNodeTypes> kAllNodeTypes = {
    NodeType::Parameter,      NodeType::ParameterClass, NodeType::AlgorithmExecutionPart,
    NodeType::Algorithm,      NodeType::Performance,    NodeType::Problem,
};

inline std::string_view node_type_name(NodeType t) {
    switch (t) {
        case NodeType::Parameter: return "parameter";
        case NodeType::ParameterClass: return "parameter-class";
        case NodeType::AlgorithmExecutionPart: return "algorithm-execution-part";
        case NodeType::Algorithm: return "algorithm";
        case NodeType::Performance: return "performance";
        case NodeType::Problem: return "problem";
    }
    return "?";
}

inline std::optional<NodeType> parse_node_type(std::string_view name) {
    for (NodeType t : kAllNodeTypes)
        if (node_type_name(t) == name) return t;
    return std::nullopt;
}

enum class Family { modCMA, modDE };

inline std::string_view family_name(Family f) {
    return f == Family::modCMA ? "modCMA" : "modDE";
}

inline std::optional<Family> parse_family(std::string_view name) {
    if (name == "modCMA") return Family::modCMA;
    if (name == "modDE") return Family::modDE;
    return std::nullopt;
}

/// Identifies one graph instance: problem dimensionality, runtime budget (as
/// a multiple of the dimension) and algorithm family.
struct GraphSpec {
    int dimension = 5;
    int budget_multiplier = 50;
    Family family = Family::modCMA;

    long budget_evaluations() const {
        return static_cast<long>(budget_multiplier) * dimension;
    }
    std::string key() const {
        std::ostringstream os;
        os << family_name(family) << ":" << dimension << ":" << budget_multiplier;
        return os.str();
    }
    bool operator==(const GraphSpec&) const = default;
};

struct Relation {
    std::string name;
    NodeType src;
    NodeType dst;
    bool operator==(const Relation&) const = default;
};

inline constexpr std::string_view kReversePrefix = "rev-";

inline bool is_reverse_name(std::string_view name) {
    return name.substr(0, kReversePrefix.size()) == kReversePrefix;
}

/// The five forward relations of the meta-graph. Edge directions: algorithm
/// -> parameter -> parameter class -> execution part along the configuration
/// chain, and performance -> {algorithm, problem} for the measurement links.
inline const std::vector<Relation>& metagraph_relations() {
    static const std::vector<Relation> rels = {
        {"has-parameter", NodeType::Algorithm, NodeType::Parameter},
        {"has-parameter-class", NodeType::Parameter, NodeType::ParameterClass},
        {"controls-algorithm-execution-part", NodeType::ParameterClass,
         NodeType::AlgorithmExecutionPart},
        {"has-algorithm", NodeType::Performance, NodeType::Algorithm},
        {"has-problem", NodeType::Performance, NodeType::Problem},
    };
    return rels;
}

/// Look up the meta-graph template entry for a relation name (forward or
/// reverse). Returns nullopt for names outside the meta-graph.
inline std::optional<Relation> metagraph_template(std::string_view name) {
    for (const auto& r : metagraph_relations()) {
        if (r.name == name) return r;
        if (std::string(kReversePrefix) + r.name == name)
            return Relation{std::string(name), r.dst, r.src};
    }
    return std::nullopt;
}

/// Monotone transform applied to raw precision values before they become
/// regression targets. Log10Clip maps p to log10(max(p, floor)); Raw keeps p.
struct TargetTransform {
    enum class Kind { Log10Clip, Raw };
    Kind kind = Kind::Log10Clip;
    double floor = 1e-8;

    double apply(double precision) const {
        if (!std::isfinite(precision))
            throw DataError("target transform: non-finite precision value");
        if (kind == Kind::Raw) return precision;
        return std::log10(std::max(precision, floor));
    }
    double invert(double y) const {
        if (kind == Kind::Raw) return y;
        return std::pow(10.0, y);
    }
    bool operator==(const TargetTransform&) const = default;
};

using EdgeList = std::vector<std::pair<int, int>>;  // (src_index, dst_index)

/// Typed heterogeneous graph: six node types, five meta-graph relations plus
/// optional reverse relations, per-type feature matrices, and targets/masks
/// on performance nodes. Immutable once built; shareable across threads.
struct HeteroGraph {
    GraphSpec spec;
    TargetTransform transform;
    std::array<std::vector<std::string>, kNumNodeTypes> node_keys;
    std::vector<Relation> relations;
    std::vector<EdgeList> edges;  // parallel to relations
    std::array<std::optional<ad::Matrix>, kNumNodeTypes> features;
    std::vector<double> targets;  // transformed precision, per performance node
    ad::Mask train_mask, val_mask, test_mask;

    int count(NodeType t) const {
        return static_cast<int>(node_keys[static_cast<size_t>(t)].size());
    }
    const std::vector<std::string>& keys(NodeType t) const {
        return node_keys[static_cast<size_t>(t)];
    }
    int relation_index(std::string_view name) const {
        for (size_t i = 0; i < relations.size(); ++i)
            if (relations[i].name == name) return static_cast<int>(i);
        return -1;
    }
    bool has_reverse_relations() const {
        for (const auto& r : relations)
            if (is_reverse_name(r.name)) return true;
        return false;
    }
    long total_edges() const {
        long n = 0;
        for (const auto& e : edges) n += static_cast<long>(e.size());
        return n;
    }

    bool operator==(const HeteroGraph& o) const {
        if (!(spec == o.spec && transform == o.transform && node_keys == o.node_keys &&
              relations == o.relations && edges == o.edges && targets == o.targets &&
              train_mask == o.train_mask && val_mask == o.val_mask &&
              test_mask == o.test_mask))
            return false;
        for (size_t t = 0; t < kNumNodeTypes; ++t) {
            if (features[t].has_value() != o.features[t].has_value()) return false;
            if (features[t] &&
                (features[t]->rows() != o.features[t]->rows() ||
                 features[t]->cols() != o.features[t]->cols() ||
                 (*features[t] - *o.features[t]).cwiseAbs().maxCoeff() != 0.0))
                return false;
        }
        return true;
    }
};

/// Check every structural invariant; each violation is one line in the
/// returned report. An empty report means the graph conforms.
inline std::vector<std::string> validate_metagraph(const HeteroGraph& g) {
    std::vector<std::string> report;
    auto add = [&](const std::string& msg) { report.push_back(msg); };

    const int num_relations = static_cast<int>(g.relations.size());
    int forward_relations = 0;
    for (const auto& r : g.relations)
        if (!is_reverse_name(r.name)) ++forward_relations;
    if (kNumNodeTypes + forward_relations <= 2)
        add("heterogeneity condition violated: |T| + |R| = " +
            std::to_string(kNumNodeTypes + forward_relations));

    if (g.edges.size() != g.relations.size())
        add("edge table count does not match relation count");

    for (int i = 0; i < num_relations; ++i) {
        const Relation& r = g.relations[i];
        for (int j = i + 1; j < num_relations; ++j)
            if (g.relations[j].name == r.name)
                add("duplicate relation '" + r.name + "'");
        auto tmpl = metagraph_template(r.name);
        if (!tmpl) {
            add("relation '" + r.name + "' is not part of the meta-graph");
            continue;
        }
        if (tmpl->src != r.src || tmpl->dst != r.dst) {
            add("relation '" + r.name + "' endpoints (" +
                std::string(node_type_name(r.src)) + " -> " +
                std::string(node_type_name(r.dst)) + ") do not match the meta-graph (" +
                std::string(node_type_name(tmpl->src)) + " -> " +
                std::string(node_type_name(tmpl->dst)) + ")");
        }
        if (i >= static_cast<int>(g.edges.size())) continue;
        const int n_src = g.count(r.src), n_dst = g.count(r.dst);
        for (const auto& [s, d] : g.edges[static_cast<size_t>(i)]) {
            if (s < 0 || s >= n_src)
                add("relation '" + r.name + "': source index " + std::to_string(s) +
                    " out of range for " + std::to_string(n_src) + " " +
                    std::string(node_type_name(r.src)) + " nodes");
            if (d < 0 || d >= n_dst)
                add("relation '" + r.name + "': destination index " + std::to_string(d) +
                    " out of range for " + std::to_string(n_dst) + " " +
                    std::string(node_type_name(r.dst)) + " nodes");
        }
    }

    // Every performance node carries exactly one measurement link of each kind.
    const int n_perf = g.count(NodeType::Performance);
    for (const char* rel_name : {"has-algorithm", "has-problem"}) {
        std::vector<int> degree(static_cast<size_t>(n_perf), 0);
        int ri = g.relation_index(rel_name);
        if (ri >= 0 && ri < static_cast<int>(g.edges.size()))
            for (const auto& [s, d] : g.edges[static_cast<size_t>(ri)])
                if (s >= 0 && s < n_perf) ++degree[static_cast<size_t>(s)];
        for (int p = 0; p < n_perf; ++p)
            if (degree[static_cast<size_t>(p)] != 1)
                add("performance node " + std::to_string(p) + " ('" +
                    g.keys(NodeType::Performance)[static_cast<size_t>(p)] + "') has " +
                    std::to_string(degree[static_cast<size_t>(p)]) + " '" + rel_name +
                    "' edges, expected exactly 1");
    }

    if (static_cast<int>(g.targets.size()) != n_perf)
        add("targets length " + std::to_string(g.targets.size()) + " != " +
            std::to_string(n_perf) + " performance nodes");
    for (size_t i = 0; i < g.targets.size(); ++i)
        if (!std::isfinite(g.targets[i]))
            add("non-finite target at performance node " + std::to_string(i));

    for (const auto* m : {&g.train_mask, &g.val_mask, &g.test_mask})
        if (static_cast<int>(m->size()) != n_perf)
            add("mask length " + std::to_string(m->size()) + " != " + std::to_string(n_perf) +
                " performance nodes");
    if (static_cast<int>(g.train_mask.size()) == n_perf &&
        static_cast<int>(g.val_mask.size()) == n_perf &&
        static_cast<int>(g.test_mask.size()) == n_perf) {
        for (int i = 0; i < n_perf; ++i) {
            int in = (g.train_mask[static_cast<size_t>(i)] ? 1 : 0) +
                     (g.val_mask[static_cast<size_t>(i)] ? 1 : 0) +
                     (g.test_mask[static_cast<size_t>(i)] ? 1 : 0);
            if (in > 1)
                add("performance node " + std::to_string(i) + " appears in " +
                    std::to_string(in) + " masks; masks must be pairwise disjoint");
        }
    }

    const auto& pf = g.features[static_cast<size_t>(NodeType::Problem)];
    if (!pf) {
        add("problem feature matrix missing");
    } else {
        if (pf->cols() != kNumElaFeatures)
            add("problem feature matrix has " + std::to_string(pf->cols()) +
                " columns, expected " + std::to_string(kNumElaFeatures));
        if (pf->rows() != g.count(NodeType::Problem))
            add("problem feature matrix has " + std::to_string(pf->rows()) +
                " rows for " + std::to_string(g.count(NodeType::Problem)) + " problem nodes");
        if (pf->size() > 0 && !pf->array().isFinite().all())
            add("problem feature matrix contains non-finite values");
    }
    for (NodeType t : kAllNodeTypes) {
        if (t == NodeType::Problem) continue;
        const auto& f = g.features[static_cast<size_t>(t)];
        if (f && f->rows() != g.count(t))
            add(std::string(node_type_name(t)) + " feature matrix has " +
                std::to_string(f->rows()) + " rows for " + std::to_string(g.count(t)) +
                " nodes");
    }
    return report;
}

/// Append one reverse relation (flipped edges, `rev-` name) per forward
/// relation, treating the graph as undirected for message passing. The
/// forward relations and all node data are untouched; the total edge count
/// exactly doubles.
inline HeteroGraph add_reverse_relations(const HeteroGraph& g) {
    if (g.has_reverse_relations())
        throw ConfigError("add_reverse_relations: reverse relations already present");
    HeteroGraph out = g;
    const size_t n_forward = g.relations.size();
    for (size_t i = 0; i < n_forward; ++i) {
        Relation rev{std::string(kReversePrefix) + g.relations[i].name, g.relations[i].dst,
                     g.relations[i].src};
        EdgeList flipped;
        flipped.reserve(g.edges[i].size());
        for (const auto& [s, d] : g.edges[i]) flipped.emplace_back(d, s);
        out.relations.push_back(std::move(rev));
        out.edges.push_back(std::move(flipped));
    }
    return out;
}

/// Drop every `rev-` relation (inverse of add_reverse_relations).
inline HeteroGraph drop_reverse_relations(const HeteroGraph& g) {
    HeteroGraph out = g;
    out.relations.clear();
    out.edges.clear();
    for (size_t i = 0; i < g.relations.size(); ++i) {
        if (is_reverse_name(g.relations[i].name)) continue;
        out.relations.push_back(g.relations[i]);
        out.edges.push_back(g.edges[i]);
    }
    return out;
}

/// Sources of all edges of relation `name` arriving at `dst_index`, in edge
/// insertion order.
inline std::vector<int> neighbors(const HeteroGraph& g, std::string_view name, int dst_index) {
    int ri = g.relation_index(name);
    if (ri < 0)
        throw ConfigError("neighbors: unknown relation '" + std::string(name) + "'");
    const Relation& r = g.relations[static_cast<size_t>(ri)];
    if (dst_index < 0 || dst_index >= g.count(r.dst))
        throw ConfigError("neighbors: index " + std::to_string(dst_index) +
                          " out of range for " + std::to_string(g.count(r.dst)) + " " +
                          std::string(node_type_name(r.dst)) + " nodes");
    std::vector<int> out;
    for (const auto& [s, d] : g.edges[static_cast<size_t>(ri)])
        if (d == dst_index) out.push_back(s);
    return out;
}

/// Segment map realizing per-relation neighbor aggregation: input rows are
/// source-node features, segments are destination nodes.
inline ad::SegmentMap relation_segment_map(const HeteroGraph& g, int relation_index) {
    const Relation& r = g.relations[static_cast<size_t>(relation_index)];
    ad::SegmentMap seg;
    seg.num_segments = g.count(r.dst);
    const auto& e = g.edges[static_cast<size_t>(relation_index)];
    seg.source_indices.reserve(e.size());
    seg.segment_ids.reserve(e.size());
    for (const auto& [s, d] : e) {
        seg.source_indices.push_back(s);
        seg.segment_ids.push_back(d);
    }
    return seg;
}

}  // namespace perfgraph
