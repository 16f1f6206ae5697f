#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "perfgraph/csv.hpp"
#include "perfgraph/errors.hpp"
#include "perfgraph/graph_io.hpp"
#include "perfgraph/hetgraph.hpp"
#include "perfgraph/optim.hpp"
#include "perfgraph/rng.hpp"
#include "perfgraph/tensor.hpp"

namespace perfgraph {

// Relation-wise message-passing network over the heterogeneous graph.
//
// Every node type enters the layer stack at the embedding width d: problem
// nodes through a learnable projection of their (standardized) landscape
// features, performance nodes through one shared learnable embedding row
// (broadcast, so the model stays inductive over unseen measurements), and the
// four configuration node types through per-node learnable embeddings.
//
// One layer updates each destination type t as
//   h_t' = dropout(gelu(sum over relations r with dst(r)=t of
//            mean_{neighbors via r}(h_src) W_neigh^r + h_t W_self^r + b^r))
// and passes h_t through unchanged when no relation arrives at t. A final
// linear head maps performance rows to one score each.

struct Hyperparams {
    int embedding_size = 64;
    double dropout = 0.2;
    int num_layers = 4;
    bool final_gelu = true;
};

struct RelationParams {
    ad::Tensor w_neigh;  // d x d
    ad::Tensor w_self;   // d x d
    ad::Tensor bias;     // 1 x d
};

struct LayerParams {
    std::vector<RelationParams> relations;  // parallel to ModelParams::relation_names
};

struct ModelParams {
    Hyperparams hp;
    std::vector<std::string> relation_names;  // graph relation order at init time
    ad::Tensor input_proj_w;                  // 46 x d
    ad::Tensor input_proj_b;                  // 1 x d
    ad::Tensor perf_embedding;                // 1 x d, shared by all performance nodes
    // Per-node embeddings for parameter, parameter-class,
    // algorithm-execution-part and algorithm nodes (unused slots stay empty).
    std::array<ad::Tensor, kNumNodeTypes> embeddings;
    std::vector<LayerParams> layers;
    ad::Tensor head_w;  // d x 1
    ad::Tensor head_b;  // 1 x 1

    std::vector<ad::NamedParam> named_params() const {
        std::vector<ad::NamedParam> out;
        out.push_back({"input_proj.weight", input_proj_w});
        out.push_back({"input_proj.bias", input_proj_b});
        out.push_back({"embed.performance", perf_embedding});
        for (NodeType t : kEmbeddedTypes)
            out.push_back({"embed." + std::string(node_type_name(t)),
                           embeddings[static_cast<size_t>(t)]});
        for (size_t l = 0; l < layers.size(); ++l)
            for (size_t r = 0; r < relation_names.size(); ++r) {
                std::string prefix =
                    "layer" + std::to_string(l) + "." + relation_names[r] + ".";
                out.push_back({prefix + "w_neigh", layers[l].relations[r].w_neigh});
                out.push_back({prefix + "w_self", layers[l].relations[r].w_self});
                out.push_back({prefix + "bias", layers[l].relations[r].bias});
            }
        out.push_back({"head.weight", head_w});
        out.push_back({"head.bias", head_b});
        return out;
    }

    static constexpr std::array<NodeType, 4> kEmbeddedTypes = {
        NodeType::Parameter, NodeType::ParameterClass, NodeType::AlgorithmExecutionPart,
        NodeType::Algorithm};
};

inline void validate_hyperparams(const Hyperparams& hp) {
    if (hp.embedding_size < 1)
        throw ConfigError("embedding_size must be >= 1, got " +
                          std::to_string(hp.embedding_size));
    if (!(hp.dropout >= 0.0 && hp.dropout < 1.0))
        throw ConfigError("dropout must be in [0,1), got " + std::to_string(hp.dropout));
    if (hp.num_layers < 1)
        throw ConfigError("num_layers must be >= 1, got " + std::to_string(hp.num_layers));
}

/// Initialize all weights for `g` (which must already carry reverse
/// relations). Every tensor gets its own derived random stream keyed by the
/// parameter name, so initialization is independent of construction order.
/// Weight matrices use Kaiming-uniform fan-in bounds; biases start at zero.
inline ModelParams init_model(const HeteroGraph& g, const Hyperparams& hp, const Rng& root) {
    validate_hyperparams(hp);
    if (!g.has_reverse_relations())
        throw ConfigError(
            "init_model: graph has no reverse relations; call add_reverse_relations first");
    const Eigen::Index d = hp.embedding_size;
    ModelParams p;
    p.hp = hp;
    for (const auto& r : g.relations) p.relation_names.push_back(r.name);

    auto init = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols,
                    Eigen::Index fan_in) {
        Rng stream = root.child(name);
        return ad::kaiming_uniform(rows, cols, fan_in, stream);
    };
    auto zeros = [](Eigen::Index rows, Eigen::Index cols) {
        return ad::Tensor::param(ad::Matrix::Zero(rows, cols));
    };

    p.input_proj_w = init("input_proj.weight", kNumElaFeatures, d, kNumElaFeatures);
    p.input_proj_b = zeros(1, d);
    p.perf_embedding = init("embed.performance", 1, d, d);
    for (NodeType t : ModelParams::kEmbeddedTypes)
        p.embeddings[static_cast<size_t>(t)] =
            init("embed." + std::string(node_type_name(t)), g.count(t), d, d);
    for (int l = 0; l < hp.num_layers; ++l) {
        LayerParams layer;
        for (const auto& name : p.relation_names) {
            std::string prefix = "layer" + std::to_string(l) + "." + name + ".";
            RelationParams rp;
            rp.w_neigh = init(prefix + "w_neigh", d, d, d);
            rp.w_self = init(prefix + "w_self", d, d, d);
            rp.bias = zeros(1, d);
            layer.relations.push_back(std::move(rp));
        }
        p.layers.push_back(std::move(layer));
    }
    p.head_w = init("head.weight", d, 1, d);
    p.head_b = zeros(1, 1);
    return p;
}

inline void check_model_compatible(const ModelParams& p, const HeteroGraph& g) {
    if (p.relation_names.size() != g.relations.size())
        throw ConfigError("model expects " + std::to_string(p.relation_names.size()) +
                          " relations, graph has " + std::to_string(g.relations.size()));
    for (size_t i = 0; i < p.relation_names.size(); ++i)
        if (p.relation_names[i] != g.relations[i].name)
            throw ConfigError("model relation " + std::to_string(i) + " is '" +
                              p.relation_names[i] + "', graph has '" + g.relations[i].name +
                              "'");
    for (NodeType t : ModelParams::kEmbeddedTypes) {
        const auto& e = p.embeddings[static_cast<size_t>(t)];
        if (e.rows() != g.count(t))
            throw ShapeError("model has " + std::to_string(e.rows()) + " " +
                             std::string(node_type_name(t)) + " embeddings for " +
                             std::to_string(g.count(t)) + " nodes");
    }
}

/// Full forward pass; returns one prediction per performance node (n x 1).
/// `problem_features` are the (already standardized) landscape features,
/// row-aligned with the problem nodes. In training mode dropout consumes
/// draws from `dropout_rng` in a fixed traversal order.
inline ad::Tensor model_forward(const HeteroGraph& g, const ModelParams& p,
                                const ad::Matrix& problem_features, bool training,
                                Rng& dropout_rng) {
    check_model_compatible(p, g);
    if (problem_features.rows() != g.count(NodeType::Problem) ||
        problem_features.cols() != kNumElaFeatures)
        throw ShapeError("problem feature matrix is " +
                         std::to_string(problem_features.rows()) + "x" +
                         std::to_string(problem_features.cols()) + ", expected " +
                         std::to_string(g.count(NodeType::Problem)) + "x" +
                         std::to_string(kNumElaFeatures));

    std::vector<ad::SegmentMap> segs;
    segs.reserve(g.relations.size());
    for (size_t r = 0; r < g.relations.size(); ++r)
        segs.push_back(relation_segment_map(g, static_cast<int>(r)));

    std::array<ad::Tensor, kNumNodeTypes> h;
    h[static_cast<size_t>(NodeType::Problem)] =
        add_bias(matmul(ad::Tensor::constant(problem_features), p.input_proj_w),
                 p.input_proj_b);
    h[static_cast<size_t>(NodeType::Performance)] =
        repeat_rows(p.perf_embedding, g.count(NodeType::Performance));
    for (NodeType t : ModelParams::kEmbeddedTypes)
        h[static_cast<size_t>(t)] = p.embeddings[static_cast<size_t>(t)];

    for (size_t l = 0; l < p.layers.size(); ++l) {
        const bool last = l + 1 == p.layers.size();
        std::array<ad::Tensor, kNumNodeTypes> next = h;
        for (NodeType t : kAllNodeTypes) {
            ad::Tensor acc;
            bool any = false;
            for (size_t r = 0; r < g.relations.size(); ++r) {
                if (g.relations[r].dst != t) continue;
                const RelationParams& rp = p.layers[l].relations[r];
                ad::Tensor msg = add_bias(
                    add(matmul(segment_mean(h[static_cast<size_t>(g.relations[r].src)],
                                            segs[r]),
                               rp.w_neigh),
                        matmul(h[static_cast<size_t>(t)], rp.w_self)),
                    rp.bias);
                acc = any ? add(acc, msg) : msg;
                any = true;
            }
            if (!any) continue;  // no incoming relation: features pass through
            if (!last || p.hp.final_gelu) acc = gelu(acc);
            acc = dropout(acc, p.hp.dropout, training, dropout_rng);
            next[static_cast<size_t>(t)] = acc;
        }
        h = std::move(next);
    }
    return add_bias(matmul(h[static_cast<size_t>(NodeType::Performance)], p.head_w), p.head_b);
}

/// Nodes (per type) that can influence the representation of `index` after
/// `layers` rounds of message passing: breadth-first search along reversed
/// edges, keeping every node once reached (the self term keeps earlier hops
/// relevant).
inline std::array<std::set<int>, kNumNodeTypes> receptive_field(const HeteroGraph& g,
                                                                NodeType type, int index,
                                                                int layers) {
    if (index < 0 || index >= g.count(type))
        throw ConfigError("receptive_field: index " + std::to_string(index) +
                          " out of range for " + std::to_string(g.count(type)) + " " +
                          std::string(node_type_name(type)) + " nodes");
    std::array<std::set<int>, kNumNodeTypes> reached;
    reached[static_cast<size_t>(type)].insert(index);
    for (int hop = 0; hop < layers; ++hop) {
        std::array<std::set<int>, kNumNodeTypes> next = reached;
        for (size_t r = 0; r < g.relations.size(); ++r) {
            const auto& rel = g.relations[r];
            const auto& dst_set = reached[static_cast<size_t>(rel.dst)];
            if (dst_set.empty()) continue;
            for (const auto& [s, d] : g.edges[r])
                if (dst_set.count(d)) next[static_cast<size_t>(rel.src)].insert(s);
        }
        reached = std::move(next);
    }
    return reached;
}

// ---------------------------------------------------------------------------
// Checkpoint format: versioned text file with the hyperparameters, the
// relation order the model was built for, and every named tensor with 17
// significant digits (so save/load round trips are bit-exact).

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write checkpoint file: " + path.string());
        out << "perfgraph-checkpoint 1\n";
        out << "hyperparams " << p.hp.embedding_size << " " << csv::format_double(p.hp.dropout)
            << " " << p.hp.num_layers << " " << (p.hp.final_gelu ? 1 : 0) << "\n";
        out << "relations " << p.relation_names.size() << "\n";
        for (const auto& name : p.relation_names) out << name << "\n";
        auto named = p.named_params();
        out << "tensors " << named.size() << "\n";
        for (const auto& np : named) {
            out << "tensor " << np.name << " " << np.tensor.rows() << " " << np.tensor.cols()
                << "\n";
            const ad::Matrix& m = np.tensor.value();
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                for (Eigen::Index j = 0; j < m.cols(); ++j)
                    out << (j ? " " : "") << csv::format_double(m(i, j));
                out << "\n";
            }
        }
        out << "end\n";
        if (!out) throw DataError("write failed: " + path.string());
    }
    fs::rename(tmp, path);
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    io_detail::LineReader r(path.string());
    auto header = r.next_tokens("header");
    if (header.size() != 2 || header[0] != "perfgraph-checkpoint")
        r.fail("not a perfgraph checkpoint file");
    if (r.to_long(header[1]) != 1) r.fail("unsupported checkpoint version " + header[1]);

    ModelParams p;
    auto hp = r.next_tokens("hyperparams");
    if (hp.size() != 5 || hp[0] != "hyperparams") r.fail("expected hyperparams line");
    p.hp.embedding_size = static_cast<int>(r.to_long(hp[1]));
    p.hp.dropout = r.to_double(hp[2]);
    p.hp.num_layers = static_cast<int>(r.to_long(hp[3]));
    p.hp.final_gelu = r.to_long(hp[4]) != 0;
    validate_hyperparams(p.hp);

    auto rels = r.next_tokens("relations");
    io_detail::expect_keyword(r, rels, "relations");
    if (rels.size() != 2) r.fail("malformed relations line");
    long n_rel = r.to_long(rels[1]);
    for (long i = 0; i < n_rel; ++i) p.relation_names.push_back(r.next("relation name"));

    auto tens = r.next_tokens("tensors");
    io_detail::expect_keyword(r, tens, "tensors");
    if (tens.size() != 2) r.fail("malformed tensors line");
    long n_tensors = r.to_long(tens[1]);
    std::map<std::string, ad::Matrix> values;
    for (long i = 0; i < n_tensors; ++i) {
        auto head = r.next_tokens("tensor header");
        if (head.size() != 4 || head[0] != "tensor") r.fail("malformed tensor header");
        long rows = r.to_long(head[2]), cols = r.to_long(head[3]);
        ad::Matrix m(rows, cols);
        for (long a = 0; a < rows; ++a) {
            auto vals = r.next_tokens("tensor row");
            if (static_cast<long>(vals.size()) != cols)
                r.fail("tensor row has " + std::to_string(vals.size()) + " values, expected " +
                       std::to_string(cols));
            for (long b = 0; b < cols; ++b) m(a, b) = r.to_double(vals[static_cast<size_t>(b)]);
        }
        if (!values.emplace(head[1], std::move(m)).second)
            r.fail("duplicate tensor '" + head[1] + "'");
    }
    auto tail = r.next_tokens("end marker");
    if (tail.size() != 1 || tail[0] != "end") r.fail("expected end marker");

    auto take = [&](const std::string& name) {
        auto it = values.find(name);
        if (it == values.end())
            throw DataError(path.string() + ": checkpoint is missing tensor '" + name + "'");
        ad::Tensor t = ad::Tensor::param(std::move(it->second));
        values.erase(it);
        return t;
    };
    p.input_proj_w = take("input_proj.weight");
    p.input_proj_b = take("input_proj.bias");
    p.perf_embedding = take("embed.performance");
    for (NodeType t : ModelParams::kEmbeddedTypes)
        p.embeddings[static_cast<size_t>(t)] =
            take("embed." + std::string(node_type_name(t)));
    for (int l = 0; l < p.hp.num_layers; ++l) {
        LayerParams layer;
        for (const auto& name : p.relation_names) {
            std::string prefix = "layer" + std::to_string(l) + "." + name + ".";
            RelationParams rp;
            rp.w_neigh = take(prefix + "w_neigh");
            rp.w_self = take(prefix + "w_self");
            rp.bias = take(prefix + "bias");
            layer.relations.push_back(std::move(rp));
        }
        p.layers.push_back(std::move(layer));
    }
    p.head_w = take("head.weight");
    p.head_b = take("head.bias");
    if (!values.empty())
        throw DataError(path.string() + ": checkpoint has unexpected tensor '" +
                        values.begin()->first + "'");
    return p;
}

}  // namespace perfgraph
