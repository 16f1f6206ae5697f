#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "perfgraph/train.hpp"

namespace perfgraph {

// Random-forest regression baseline: one forest per algorithm variant, fed
// the raw landscape features of the problem behind each measurement, with the
// same transformed targets and the same leave-one-instance-out outer folds as
// the graph model.

struct RfConfig {
    int n_trees = 100;
    int max_depth = 0;  // 0 = grow until pure / too small
    int min_samples_leaf = 1;
    int features_per_split = (kNumElaFeatures + 2) / 3;  // ceil(46 / 3)
    bool bootstrap = true;
};

inline void validate_rf_config(const RfConfig& c) {
    if (c.n_trees < 1) throw ConfigError("rf_trees must be >= 1, got " + std::to_string(c.n_trees));
    if (c.max_depth < 0) throw ConfigError("rf_max_depth must be >= 0");
    if (c.min_samples_leaf < 1) throw ConfigError("rf_min_samples_leaf must be >= 1");
    if (c.features_per_split < 1) throw ConfigError("rf_features_per_split must be >= 1");
}

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;  // leaf mean
    bool is_leaf() const { return feature < 0; }
};

struct SplitChoice {
    bool valid = false;
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;  // sum of per-side (sum y)^2 / n, larger is better
};

namespace rf_detail {

/// Best split of `samples` (indices into rows/y) over the candidate features,
/// maximizing sum_side (sum y)^2 / n_side, which is equivalent to minimizing
/// the two-sided squared error. Candidates are scanned in ascending feature
/// order and thresholds in ascending value order with strict improvement
/// only, so ties resolve to the lowest feature index, then the lowest
/// threshold. Thresholds sit midway between consecutive distinct values.
inline SplitChoice best_split(const ad::Matrix& X, const std::vector<int>& rows,
                              const std::vector<double>& y, const std::vector<int>& samples,
                              std::vector<int> candidate_features, int min_samples_leaf) {
    std::sort(candidate_features.begin(), candidate_features.end());
    candidate_features.erase(
        std::unique(candidate_features.begin(), candidate_features.end()),
        candidate_features.end());

    const int n = static_cast<int>(samples.size());
    double total = 0.0;
    for (int s : samples) total += y[static_cast<size_t>(s)];
    SplitChoice best;
    best.score = total * total / static_cast<double>(n);  // the no-split baseline

    std::vector<int> order(samples.begin(), samples.end());
    for (int f : candidate_features) {
        auto value_of = [&](int s) { return X(rows[static_cast<size_t>(s)], f); };
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return value_of(a) < value_of(b);
        });
        double left_sum = 0.0;
        for (int i = 1; i < n; ++i) {
            left_sum += y[static_cast<size_t>(order[static_cast<size_t>(i - 1)])];
            double lo = value_of(order[static_cast<size_t>(i - 1)]);
            double hi = value_of(order[static_cast<size_t>(i)]);
            if (!(lo < hi)) continue;  // split only between distinct values
            if (i < min_samples_leaf || n - i < min_samples_leaf) continue;
            double threshold = lo + (hi - lo) / 2.0;
            if (!(threshold >= lo && threshold < hi)) continue;  // degenerate midpoint
            double right_sum = total - left_sum;
            double score = left_sum * left_sum / static_cast<double>(i) +
                           right_sum * right_sum / static_cast<double>(n - i);
            if (score > best.score) {
                best.valid = true;
                best.feature = f;
                best.threshold = threshold;
                best.score = score;
            }
        }
    }
    return best;
}

}  // namespace rf_detail

/// CART regression tree over rows of a feature matrix. `rows[i]` is the
/// matrix row of sample i and `y[i]` its target; recursion is depth-first
/// (left before right) so the random feature draws are reproducible.
class RegressionTree {
  public:
    static RegressionTree fit(const ad::Matrix& X, const std::vector<int>& rows,
                              const std::vector<double>& y, const RfConfig& cfg, Rng rng) {
        validate_rf_config(cfg);
        if (rows.size() != y.size() || rows.empty())
            throw ConfigError("tree fit: need matching, non-empty samples");
        RegressionTree t;
        std::vector<int> samples(rows.size());
        std::iota(samples.begin(), samples.end(), 0);
        t.build(X, rows, y, samples, cfg, rng, 0);
        return t;
    }

    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        int i = 0;
        while (!nodes_[static_cast<size_t>(i)].is_leaf()) {
            const TreeNode& nd = nodes_[static_cast<size_t>(i)];
            i = x(nd.feature) <= nd.threshold ? nd.left : nd.right;
        }
        return nodes_[static_cast<size_t>(i)].value;
    }

    const std::vector<TreeNode>& nodes() const { return nodes_; }

  private:
    std::vector<TreeNode> nodes_;

    int build(const ad::Matrix& X, const std::vector<int>& rows, const std::vector<double>& y,
              const std::vector<int>& samples, const RfConfig& cfg, Rng& rng, int depth) {
        const int n = static_cast<int>(samples.size());
        double total = 0.0;
        for (int s : samples) total += y[static_cast<size_t>(s)];
        const double mean = total / n;

        auto make_leaf = [&]() {
            TreeNode leaf;
            leaf.value = mean;
            nodes_.push_back(leaf);
            return static_cast<int>(nodes_.size()) - 1;
        };

        bool pure = true;
        for (int s : samples)
            if (y[static_cast<size_t>(s)] != y[static_cast<size_t>(samples[0])]) {
                pure = false;
                break;
            }
        if (pure || n < 2 * cfg.min_samples_leaf ||
            (cfg.max_depth > 0 && depth >= cfg.max_depth))
            return make_leaf();

        SplitChoice split = rf_detail::best_split(X, rows, y, samples,
                                                  draw_features(X.cols(), cfg, rng),
                                                  cfg.min_samples_leaf);
        if (!split.valid) return make_leaf();

        std::vector<int> left, right;
        for (int s : samples)
            (X(rows[static_cast<size_t>(s)], split.feature) <= split.threshold ? left : right)
                .push_back(s);

        int self = static_cast<int>(nodes_.size());
        nodes_.push_back(TreeNode{split.feature, split.threshold, -1, -1, mean});
        nodes_[static_cast<size_t>(self)].left = build(X, rows, y, left, cfg, rng, depth + 1);
        nodes_[static_cast<size_t>(self)].right = build(X, rows, y, right, cfg, rng, depth + 1);
        return self;
    }

    /// `features_per_split` distinct feature indices via partial Fisher-Yates.
    static std::vector<int> draw_features(Eigen::Index dims, const RfConfig& cfg, Rng& rng) {
        const int d = static_cast<int>(dims);
        const int k = std::min(cfg.features_per_split, d);
        std::vector<int> pool(static_cast<size_t>(d));
        std::iota(pool.begin(), pool.end(), 0);
        for (int i = 0; i < k; ++i) {
            int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(d - i)));
            std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
        }
        pool.resize(static_cast<size_t>(k));
        return pool;
    }
};

class RandomForest {
  public:
    static RandomForest fit(const ad::Matrix& X, const std::vector<int>& rows,
                            const std::vector<double>& y, const RfConfig& cfg, const Rng& rng) {
        validate_rf_config(cfg);
        if (rows.size() != y.size() || rows.empty())
            throw ConfigError("forest fit: need matching, non-empty samples");
        RandomForest f;
        const size_t n = rows.size();
        for (int k = 0; k < cfg.n_trees; ++k) {
            Rng tree_rng = rng.child("tree", static_cast<uint64_t>(k));
            std::vector<int> boot_rows;
            std::vector<double> boot_y;
            if (cfg.bootstrap) {
                Rng boot = tree_rng.child("bootstrap");
                for (size_t i = 0; i < n; ++i) {
                    size_t pick = static_cast<size_t>(boot.below(n));
                    boot_rows.push_back(rows[pick]);
                    boot_y.push_back(y[pick]);
                }
            } else {
                boot_rows = rows;
                boot_y = y;
            }
            Rng split_rng = tree_rng.child("split");
            f.trees_.push_back(RegressionTree::fit(X, boot_rows, boot_y, cfg, split_rng));
        }
        return f;
    }

    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        double total = 0.0;
        for (const auto& t : trees_) total += t.predict(x);
        return total / static_cast<double>(trees_.size());
    }

    const std::vector<RegressionTree>& trees() const { return trees_; }

  private:
    std::vector<RegressionTree> trees_;
};

// ---------------------------------------------------------------------------

struct RfFoldResult {
    int test_instance = 0;
    double test_mse = 0.0;
    long test_count = 0;
};

struct RfRunResult {
    CvPlan plan;
    std::vector<RfFoldResult> folds;
    double pooled_mse = 0.0;
    long total_test_count = 0;
};

/// Leave-one-instance-out evaluation of the per-variant forests on the same
/// graph the network trains on: identical folds, identical transformed
/// targets, raw landscape features. Random streams are keyed by fold and
/// variant id, so results do not depend on evaluation order.
inline RfRunResult run_baseline(const HeteroGraph& g, const RfConfig& cfg, const Rng& root,
                                const LogFn& log = {}) {
    validate_rf_config(cfg);
    const auto& features = g.features[static_cast<size_t>(NodeType::Problem)];
    if (!features) throw DataError("baseline: graph has no problem features");
    auto perf_iids = performance_instance_ids(g);
    auto perf_prob = performance_problem_rows(g);
    auto perf_var = performance_variant_rows(g);

    RfRunResult result;
    result.plan = make_cv_plan(perf_iids);

    const int n_var = g.count(NodeType::Algorithm);
    std::vector<std::vector<int>> by_variant(static_cast<size_t>(n_var));
    for (size_t i = 0; i < perf_var.size(); ++i)
        by_variant[static_cast<size_t>(perf_var[i])].push_back(static_cast<int>(i));

    double pooled_sse = 0.0;
    for (const auto& fold : result.plan.outer) {
        const int t = fold.test_instance;
        Rng fold_rng = root.child("fold", static_cast<uint64_t>(t));
        double sse = 0.0;
        long count = 0;
        for (int v = 0; v < n_var; ++v) {
            std::vector<int> train_rows, test_nodes;
            std::vector<double> train_y;
            for (int node : by_variant[static_cast<size_t>(v)]) {
                if (perf_iids[static_cast<size_t>(node)] == t) {
                    test_nodes.push_back(node);
                } else {
                    train_rows.push_back(perf_prob[static_cast<size_t>(node)]);
                    train_y.push_back(g.targets[static_cast<size_t>(node)]);
                }
            }
            if (test_nodes.empty()) continue;
            if (train_rows.empty())
                throw DataError("baseline: variant '" +
                                g.keys(NodeType::Algorithm)[static_cast<size_t>(v)] +
                                "' has no training measurements outside instance " +
                                std::to_string(t));
            Rng var_rng = fold_rng.child(g.keys(NodeType::Algorithm)[static_cast<size_t>(v)]);
            RandomForest forest = RandomForest::fit(*features, train_rows, train_y, cfg, var_rng);
            for (int node : test_nodes) {
                double pred =
                    forest.predict(features->row(perf_prob[static_cast<size_t>(node)]));
                double diff = pred - g.targets[static_cast<size_t>(node)];
                sse += diff * diff;
                ++count;
            }
        }
        RfFoldResult fr;
        fr.test_instance = t;
        fr.test_mse = sse / static_cast<double>(count);
        fr.test_count = count;
        if (log)
            log("baseline fold " + std::to_string(t) + " mse " +
                csv::format_double(fr.test_mse));
        pooled_sse += sse;
        result.total_test_count += count;
        result.folds.push_back(fr);
    }
    result.pooled_mse = pooled_sse / static_cast<double>(result.total_test_count);
    return result;
}

}  // namespace perfgraph
