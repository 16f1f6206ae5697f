#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "perfgraph/ingest.hpp"
#include "perfgraph/model.hpp"

namespace perfgraph {

struct TrainConfig {
    int epochs = 200;
    double lr0 = 0.1;
    int plateau_patience = 20;
    double lr_factor = 0.5;
    double plateau_tolerance = 1e-4;
};

inline void validate_train_config(const TrainConfig& c) {
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(c.epochs));
    if (!(c.lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
    if (c.plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
    if (!(c.lr_factor > 0.0 && c.lr_factor <= 1.0))
        throw ConfigError("lr_factor must be in (0,1]");
    if (!(c.plateau_tolerance >= 0.0)) throw ConfigError("plateau_tolerance must be >= 0");
}

/// Halve (well, multiply by `factor`) the learning rate whenever the observed
/// validation loss has not improved by more than `tolerance` for `patience`
/// consecutive observations. The stagnation counter resets after each cut, so
/// a flat loss curve cuts the rate every `patience` observations.
class PlateauScheduler {
  public:
    PlateauScheduler(double lr0, int patience, double factor, double tolerance)
        : lr_(lr0), patience_(patience), factor_(factor), tolerance_(tolerance) {}

    /// Feed one validation loss; returns true when the rate was just cut.
    bool observe(double val_loss) {
        ++observations_;
        if (val_loss < best_ - tolerance_) {
            best_ = val_loss;
            stagnant_ = 0;
            return false;
        }
        if (++stagnant_ >= patience_) {
            lr_ *= factor_;
            stagnant_ = 0;
            cut_points_.push_back(observations_);
            return true;
        }
        return false;
    }

    double lr() const { return lr_; }
    double best() const { return best_; }
    const std::vector<int>& cut_points() const { return cut_points_; }  // 1-based

  private:
    double lr_;
    int patience_;
    double factor_;
    double tolerance_;
    double best_ = std::numeric_limits<double>::infinity();
    int stagnant_ = 0;
    long observations_ = 0;
    std::vector<int> cut_points_;
};

/// Column-wise standardization fitted on a subset of rows (population
/// variance; constant columns keep scale 1 so they map to zero).
struct Standardizer {
    ad::Matrix mean;    // 1 x d
    ad::Matrix stddev;  // 1 x d

    static Standardizer fit(const ad::Matrix& rows, const std::vector<std::uint8_t>& row_mask) {
        if (static_cast<Eigen::Index>(row_mask.size()) != rows.rows())
            throw ShapeError("standardizer: mask length " + std::to_string(row_mask.size()) +
                             " does not match " + std::to_string(rows.rows()) + " rows");
        Standardizer s;
        s.mean = ad::Matrix::Zero(1, rows.cols());
        s.stddev = ad::Matrix::Ones(1, rows.cols());
        double n = 0.0;
        for (Eigen::Index i = 0; i < rows.rows(); ++i)
            if (row_mask[static_cast<size_t>(i)]) {
                s.mean.row(0) += rows.row(i);
                n += 1.0;
            }
        if (n == 0.0) throw ConfigError("standardizer: no rows selected to fit on");
        s.mean /= n;
        ad::Matrix var = ad::Matrix::Zero(1, rows.cols());
        for (Eigen::Index i = 0; i < rows.rows(); ++i)
            if (row_mask[static_cast<size_t>(i)])
                var.row(0) += (rows.row(i) - s.mean.row(0)).array().square().matrix();
        var /= n;
        for (Eigen::Index j = 0; j < rows.cols(); ++j)
            s.stddev(0, j) = var(0, j) > 0.0 ? std::sqrt(var(0, j)) : 1.0;
        return s;
    }

    ad::Matrix transform(const ad::Matrix& rows) const {
        if (rows.cols() != mean.cols())
            throw ShapeError("standardizer: column count mismatch");
        ad::Matrix out = rows;
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            out.row(i) = (out.row(i) - mean.row(0)).array() / stddev.row(0).array();
        return out;
    }
};

// ---------------------------------------------------------------------------
// Nested leave-one-instance-out cross-validation plan.

constexpr int kFinalFit = -1;  // sentinel: train on all non-test instances

struct OuterFold {
    int test_instance;
    std::vector<int> inner_val_instances;  // ascending, the remaining instances
};

struct CvPlan {
    std::vector<int> instances;  // distinct observed instance ids, ascending
    std::vector<OuterFold> outer;
};

/// One outer fold per observed instance; within an outer fold, one inner fold
/// per remaining instance. Needs at least three distinct instances so every
/// inner fold still has a non-empty training set.
inline CvPlan make_cv_plan(const std::vector<int>& observed_instance_ids) {
    std::set<int> distinct(observed_instance_ids.begin(), observed_instance_ids.end());
    if (distinct.size() < 3)
        throw ConfigError("nested cross-validation needs at least 3 distinct instances, got " +
                          std::to_string(distinct.size()));
    CvPlan plan;
    plan.instances.assign(distinct.begin(), distinct.end());
    for (int t : plan.instances) {
        OuterFold fold;
        fold.test_instance = t;
        for (int j : plan.instances)
            if (j != t) fold.inner_val_instances.push_back(j);
        plan.outer.push_back(std::move(fold));
    }
    return plan;
}

/// Structural audit of a plan: exactly-once outer coverage, and within each
/// outer fold exactly-once inner coverage of the remaining instances.
inline std::vector<std::string> check_cv_plan(const CvPlan& plan) {
    std::vector<std::string> problems;
    std::set<int> outer_seen;
    for (const auto& fold : plan.outer) {
        if (!outer_seen.insert(fold.test_instance).second)
            problems.push_back("instance " + std::to_string(fold.test_instance) +
                               " is an outer test instance more than once");
        std::set<int> inner_seen;
        for (int j : fold.inner_val_instances) {
            if (j == fold.test_instance)
                problems.push_back("outer fold " + std::to_string(fold.test_instance) +
                                   " uses its test instance for validation");
            if (!inner_seen.insert(j).second)
                problems.push_back("outer fold " + std::to_string(fold.test_instance) +
                                   " validates on instance " + std::to_string(j) +
                                   " more than once");
        }
        for (int j : plan.instances)
            if (j != fold.test_instance && !inner_seen.count(j))
                problems.push_back("outer fold " + std::to_string(fold.test_instance) +
                                   " never validates on instance " + std::to_string(j));
    }
    for (int j : plan.instances)
        if (!outer_seen.count(j))
            problems.push_back("instance " + std::to_string(j) + " is never the test instance");
    return problems;
}

struct FoldMasks {
    ad::Mask train, val, test;        // over performance nodes
    ad::Mask problem_train;           // over problem nodes (standardizer rows)
};

/// Masks for one fit. `val_instance == kFinalFit` marks the final refit,
/// where training and validation both cover every non-test instance.
inline FoldMasks fold_masks(const HeteroGraph& g, int test_instance, int val_instance) {
    if (val_instance == test_instance)
        throw ConfigError("fold_masks: validation and test instance coincide (" +
                          std::to_string(test_instance) + ")");
    auto perf_iids = performance_instance_ids(g);
    auto prob_iids = problem_instance_ids(g);
    FoldMasks m;
    m.train.resize(perf_iids.size());
    m.val.resize(perf_iids.size());
    m.test.resize(perf_iids.size());
    for (size_t i = 0; i < perf_iids.size(); ++i) {
        int iid = perf_iids[i];
        bool is_test = iid == test_instance;
        bool is_val = val_instance == kFinalFit ? !is_test : iid == val_instance;
        bool is_train = !is_test && (val_instance == kFinalFit || iid != val_instance);
        m.test[i] = is_test;
        m.val[i] = is_val;
        m.train[i] = is_train;
    }
    m.problem_train.resize(prob_iids.size());
    for (size_t i = 0; i < prob_iids.size(); ++i) {
        int iid = prob_iids[i];
        m.problem_train[i] =
            iid != test_instance && (val_instance == kFinalFit || iid != val_instance);
    }
    return m;
}

// ---------------------------------------------------------------------------

struct TrainResult {
    ModelParams best_params;
    int best_epoch = 0;         // 1-based epoch with the lowest validation loss
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> train_history;  // loss per epoch (training mode)
    std::vector<double> val_history;    // loss per epoch (eval mode)
    std::vector<int> lr_cut_epochs;     // 1-based epochs after which lr was cut
    double final_lr = 0.0;
};

inline ModelParams clone_params(const ModelParams& p) {
    ModelParams q = p;
    auto copy = [](ad::Tensor& t) { t = ad::Tensor::param(t.value()); };
    copy(q.input_proj_w);
    copy(q.input_proj_b);
    copy(q.perf_embedding);
    for (NodeType t : ModelParams::kEmbeddedTypes) copy(q.embeddings[static_cast<size_t>(t)]);
    for (auto& layer : q.layers)
        for (auto& rp : layer.relations) {
            copy(rp.w_neigh);
            copy(rp.w_self);
            copy(rp.bias);
        }
    copy(q.head_w);
    copy(q.head_b);
    return q;
}

namespace train_detail {

inline void check_masks(const ad::Mask& train, const ad::Mask& val, size_t n) {
    if (train.size() != n || val.size() != n)
        throw ShapeError("train/validation masks must cover all performance nodes");
    bool any_train = false, any_val = false, overlap = false, equal = true;
    for (size_t i = 0; i < n; ++i) {
        any_train |= train[i] != 0;
        any_val |= val[i] != 0;
        if (train[i] && val[i]) overlap = true;
        if ((train[i] != 0) != (val[i] != 0)) equal = false;
    }
    if (!any_train) throw ConfigError("training mask selects no performance nodes");
    if (!any_val) throw ConfigError("validation mask selects no performance nodes");
    if (overlap && !equal)
        throw ConfigError(
            "training and validation masks overlap; they must be disjoint or identical");
}

inline double masked_l1(const ad::Matrix& pred, const std::vector<double>& targets,
                        const ad::Mask& mask) {
    double total = 0.0, n = 0.0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i)
        if (mask[static_cast<size_t>(i)]) {
            total += std::abs(pred(i, 0) - targets[static_cast<size_t>(i)]);
            n += 1.0;
        }
    return total / n;
}

}  // namespace train_detail

/// Adam + plateau schedule over the full graph. Keeps (a deep copy of) the
/// parameters from the epoch with the lowest validation loss; earlier epochs
/// win ties. The validation mask may equal the training mask exactly (final
/// refit) but may not partially overlap it.
inline TrainResult train_model(const HeteroGraph& g, const ModelParams& init,
                               const ad::Matrix& problem_features_std, const ad::Mask& train_mask,
                               const ad::Mask& val_mask, const TrainConfig& cfg, const Rng& rng) {
    validate_train_config(cfg);
    check_model_compatible(init, g);
    const size_t n_perf = static_cast<size_t>(g.count(NodeType::Performance));
    train_detail::check_masks(train_mask, val_mask, n_perf);
    if (g.targets.size() != n_perf)
        throw ShapeError("graph targets do not cover all performance nodes");

    ModelParams params = clone_params(init);
    std::vector<ad::NamedParam> named = params.named_params();
    ad::Adam adam(named);
    PlateauScheduler scheduler(cfg.lr0, cfg.plateau_patience, cfg.lr_factor,
                               cfg.plateau_tolerance);

    ad::Matrix target_m(static_cast<Eigen::Index>(n_perf), 1);
    for (size_t i = 0; i < n_perf; ++i) target_m(static_cast<Eigen::Index>(i), 0) = g.targets[i];
    ad::Tensor targets = ad::Tensor::constant(target_m);

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng = rng.child("dropout", static_cast<uint64_t>(epoch));
        ad::Tensor pred = model_forward(g, params, problem_features_std, true, epoch_rng);
        ad::Tensor loss = l1_loss(pred, targets, train_mask);
        const double train_loss = loss.value()(0, 0);
        if (!std::isfinite(train_loss))
            throw TrainError("training loss became non-finite at epoch " +
                             std::to_string(epoch));
        loss.backward();
        // Parameters without a path to the loss (possible under shallow layer
        // stacks) step with a zero gradient instead of failing.
        for (auto& np : named) np.tensor.ensure_zero_grad();
        adam.step(scheduler.lr());

        double val_loss;
        {
            ad::NoGradGuard eval;
            Rng unused(0);
            ad::Tensor eval_pred =
                model_forward(g, params, problem_features_std, false, unused);
            val_loss = train_detail::masked_l1(eval_pred.value(), g.targets, val_mask);
        }
        if (!std::isfinite(val_loss))
            throw TrainError("validation loss became non-finite at epoch " +
                             std::to_string(epoch));
        result.train_history.push_back(train_loss);
        result.val_history.push_back(val_loss);
        if (val_loss < result.best_val) {
            result.best_val = val_loss;
            result.best_epoch = epoch;
            result.best_params = clone_params(params);
        }
        scheduler.observe(val_loss);
    }
    result.lr_cut_epochs = scheduler.cut_points();
    result.final_lr = scheduler.lr();
    return result;
}

struct MseResult {
    double mse = 0.0;
    int count = 0;
};

/// Mean squared error on the transformed target scale over mask-selected
/// performance nodes, eval mode.
inline MseResult evaluate_mse(const HeteroGraph& g, const ModelParams& p,
                              const ad::Matrix& problem_features_std, const ad::Mask& mask) {
    if (mask.size() != static_cast<size_t>(g.count(NodeType::Performance)))
        throw ShapeError("evaluate_mse: mask does not cover all performance nodes");
    ad::NoGradGuard eval;
    Rng unused(0);
    ad::Matrix pred = model_forward(g, p, problem_features_std, false, unused).value();
    MseResult r;
    double total = 0.0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i)
        if (mask[static_cast<size_t>(i)]) {
            double diff = pred(i, 0) - g.targets[static_cast<size_t>(i)];
            total += diff * diff;
            ++r.count;
        }
    if (r.count == 0) throw ConfigError("evaluate_mse: mask selects no performance nodes");
    r.mse = total / r.count;
    return r;
}

// ---------------------------------------------------------------------------
// Hyperparameter grid and the nested cross-validation driver.

/// Grid in embedding-major, dropout-minor order, so the deterministic
/// tie-break "first strictly better wins" prefers smaller embeddings and then
/// smaller dropout rates.
inline std::vector<Hyperparams> make_grid(const std::vector<int>& embeddings,
                                          const std::vector<double>& dropouts,
                                          int num_layers = 4, bool final_gelu = true) {
    if (embeddings.empty() || dropouts.empty())
        throw ConfigError("hyperparameter grid must not be empty");
    std::vector<Hyperparams> grid;
    for (int e : embeddings)
        for (double d : dropouts) {
            Hyperparams hp{e, d, num_layers, final_gelu};
            validate_hyperparams(hp);
            grid.push_back(hp);
        }
    return grid;
}

struct InnerFitRecord {
    int val_instance = 0;
    double best_val = 0.0;
    int best_epoch = 0;
};

struct CellRecord {
    Hyperparams hp;
    double mean_val = 0.0;
    std::vector<InnerFitRecord> inner;
};

struct OuterFoldResult {
    int test_instance = 0;
    Hyperparams chosen;
    double test_mse = 0.0;
    int test_count = 0;
    int final_best_epoch = 0;
    std::vector<CellRecord> cells;
    std::optional<ModelParams> final_params;  // only kept when requested
};

struct NestedCvResult {
    CvPlan plan;
    std::vector<OuterFoldResult> outer;
    double pooled_mse = 0.0;  // over every test prediction across folds
    long total_test_count = 0;
};

using LogFn = std::function<void(const std::string&)>;

/// Full nested leave-one-instance-out run on one graph. `root` seeds
/// everything; derived streams are keyed by fold/cell indices so results do
/// not depend on evaluation order. Set `keep_models` to retain each outer
/// fold's refit parameters.
inline NestedCvResult nested_cv(const HeteroGraph& g, const std::vector<Hyperparams>& grid,
                                const TrainConfig& cfg, const Rng& root,
                                bool keep_models = false, const LogFn& log = {}) {
    if (!g.has_reverse_relations())
        throw ConfigError("nested_cv: graph must carry reverse relations");
    if (grid.empty()) throw ConfigError("nested_cv: empty hyperparameter grid");
    const auto& raw_features = g.features[static_cast<size_t>(NodeType::Problem)];
    if (!raw_features) throw DataError("nested_cv: graph has no problem features");

    NestedCvResult result;
    result.plan = make_cv_plan(performance_instance_ids(g));

    double pooled_sse = 0.0;
    for (size_t fold_idx = 0; fold_idx < result.plan.outer.size(); ++fold_idx) {
        const OuterFold& fold = result.plan.outer[fold_idx];
        Rng fold_rng = root.child("outer", static_cast<uint64_t>(fold.test_instance));
        OuterFoldResult outer;
        outer.test_instance = fold.test_instance;

        size_t best_cell = 0;
        double best_score = std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < grid.size(); ++c) {
            CellRecord cell;
            cell.hp = grid[c];
            double total = 0.0;
            for (int j : fold.inner_val_instances) {
                FoldMasks m = fold_masks(g, fold.test_instance, j);
                Standardizer st = Standardizer::fit(*raw_features, m.problem_train);
                ad::Matrix feat = st.transform(*raw_features);
                Rng fit_rng = fold_rng.child("cell", static_cast<uint64_t>(c))
                                  .child("val", static_cast<uint64_t>(j));
                ModelParams init = init_model(g, grid[c], fit_rng.child("init"));
                TrainResult tr =
                    train_model(g, init, feat, m.train, m.val, cfg, fit_rng.child("fit"));
                cell.inner.push_back({j, tr.best_val, tr.best_epoch});
                total += tr.best_val;
            }
            cell.mean_val = total / static_cast<double>(cell.inner.size());
            if (log)
                log("fold " + std::to_string(fold.test_instance) + " cell d=" +
                    std::to_string(grid[c].embedding_size) + " p=" +
                    csv::format_double(grid[c].dropout) + " mean val " +
                    csv::format_double(cell.mean_val));
            if (cell.mean_val < best_score) {
                best_score = cell.mean_val;
                best_cell = c;
            }
            outer.cells.push_back(std::move(cell));
        }
        outer.chosen = grid[best_cell];

        // Refit on everything except the test instance; the plateau signal is
        // the eval-mode loss on the training instances themselves.
        FoldMasks m = fold_masks(g, fold.test_instance, kFinalFit);
        Standardizer st = Standardizer::fit(*raw_features, m.problem_train);
        ad::Matrix feat = st.transform(*raw_features);
        Rng final_rng = fold_rng.child("final");
        ModelParams init = init_model(g, outer.chosen, final_rng.child("init"));
        TrainResult tr =
            train_model(g, init, feat, m.train, m.val, cfg, final_rng.child("fit"));
        outer.final_best_epoch = tr.best_epoch;
        MseResult mse = evaluate_mse(g, tr.best_params, feat, m.test);
        outer.test_mse = mse.mse;
        outer.test_count = mse.count;
        if (keep_models) outer.final_params = clone_params(tr.best_params);
        if (log)
            log("fold " + std::to_string(fold.test_instance) + " chose d=" +
                std::to_string(outer.chosen.embedding_size) + " p=" +
                csv::format_double(outer.chosen.dropout) + " test mse " +
                csv::format_double(outer.test_mse));

        pooled_sse += outer.test_mse * outer.test_count;
        result.total_test_count += outer.test_count;
        result.outer.push_back(std::move(outer));
    }
    result.pooled_mse = pooled_sse / static_cast<double>(result.total_test_count);
    return result;
}

}  // namespace perfgraph
