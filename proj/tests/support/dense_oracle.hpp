#pragma once

// Reference forward pass written with plain per-node loops and std::erf,
// deliberately independent of the tensor library so the two implementations
// cross-check each other.

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "perfgraph/hetgraph.hpp"
#include "perfgraph/model.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row major

inline Mat from_eigen(const perfgraph::ad::Matrix& m) {
    Mat out(static_cast<size_t>(m.rows()), Vec(static_cast<size_t>(m.cols()), 0.0));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out[static_cast<size_t>(i)][static_cast<size_t>(j)] = m(i, j);
    return out;
}

inline double gelu_scalar(double x) { return x * 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Mat matmul(const Mat& a, const Mat& b) {
    size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
    Mat out(n, Vec(m, 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (size_t t = 0; t < k; ++t) s += a[i][t] * b[t][j];
            out[i][j] = s;
        }
    return out;
}

/// Eval-mode forward pass (no dropout), mirroring the model definition with
/// explicit neighbor scans and scalar arithmetic.
inline Vec dense_forward(const perfgraph::HeteroGraph& g, const perfgraph::ModelParams& p,
                         const perfgraph::ad::Matrix& problem_features) {
    using perfgraph::NodeType;
    std::map<std::string, Mat> w;
    for (const auto& np : p.named_params()) w[np.name] = from_eigen(np.tensor.value());
    const size_t d = static_cast<size_t>(p.hp.embedding_size);

    std::array<Mat, perfgraph::kNumNodeTypes> h;
    {  // problem: standardized features through the input projection
        Mat x = from_eigen(problem_features);
        Mat proj = matmul(x, w.at("input_proj.weight"));
        for (auto& row : proj)
            for (size_t j = 0; j < d; ++j) row[j] += w.at("input_proj.bias")[0][j];
        h[static_cast<size_t>(NodeType::Problem)] = proj;
    }
    h[static_cast<size_t>(NodeType::Performance)] =
        Mat(static_cast<size_t>(g.count(NodeType::Performance)),
            w.at("embed.performance")[0]);
    for (NodeType t : perfgraph::ModelParams::kEmbeddedTypes)
        h[static_cast<size_t>(t)] = w.at("embed." + std::string(perfgraph::node_type_name(t)));

    for (int l = 0; l < p.hp.num_layers; ++l) {
        const bool last = l + 1 == p.hp.num_layers;
        auto next = h;
        for (NodeType t : perfgraph::kAllNodeTypes) {
            const size_t n_dst = h[static_cast<size_t>(t)].size();
            Mat acc(n_dst, Vec(d, 0.0));
            bool any = false;
            for (size_t r = 0; r < g.relations.size(); ++r) {
                if (g.relations[r].dst != t) continue;
                any = true;
                const std::string prefix =
                    "layer" + std::to_string(l) + "." + g.relations[r].name + ".";
                const Mat& src_h = h[static_cast<size_t>(g.relations[r].src)];
                // Mean over neighbors, one destination node at a time.
                Mat mean(n_dst, Vec(d, 0.0));
                for (size_t i = 0; i < n_dst; ++i) {
                    int cnt = 0;
                    for (const auto& [s, dst] : g.edges[r]) {
                        if (static_cast<size_t>(dst) != i) continue;
                        for (size_t j = 0; j < d; ++j)
                            mean[i][j] += src_h[static_cast<size_t>(s)][j];
                        ++cnt;
                    }
                    if (cnt > 0)
                        for (size_t j = 0; j < d; ++j) mean[i][j] /= cnt;
                }
                Mat m1 = matmul(mean, w.at(prefix + "w_neigh"));
                Mat m2 = matmul(h[static_cast<size_t>(t)], w.at(prefix + "w_self"));
                for (size_t i = 0; i < n_dst; ++i)
                    for (size_t j = 0; j < d; ++j)
                        acc[i][j] += m1[i][j] + m2[i][j] + w.at(prefix + "bias")[0][j];
            }
            if (!any) continue;
            if (!last || p.hp.final_gelu)
                for (auto& row : acc)
                    for (auto& v : row) v = gelu_scalar(v);
            next[static_cast<size_t>(t)] = acc;
        }
        h = next;
    }

    const Mat& hp_perf = h[static_cast<size_t>(NodeType::Performance)];
    Vec out(hp_perf.size(), 0.0);
    for (size_t i = 0; i < hp_perf.size(); ++i) {
        double s = w.at("head.bias")[0][0];
        for (size_t j = 0; j < d; ++j) s += hp_perf[i][j] * w.at("head.weight")[j][0];
        out[i] = s;
    }
    return out;
}

}  // namespace oracle
