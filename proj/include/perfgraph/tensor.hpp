#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "perfgraph/errors.hpp"
#include "perfgraph/rng.hpp"

namespace perfgraph::ad {

using Matrix = Eigen::MatrixXd;
using Mask = std::vector<std::uint8_t>;

/// Thread-local switch: when false, operations produce constants and no tape
/// is recorded. Used for evaluation passes.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Gather-and-average map: row k of the input is taken from
/// source_indices[k] and averaged into output row segment_ids[k].
/// Empty segments produce a zero row.
struct SegmentMap {
    std::vector<int> source_indices;
    std::vector<int> segment_ids;
    int num_segments = 0;

    void validate(int num_rows) const {
        if (source_indices.size() != segment_ids.size())
            throw ShapeError("SegmentMap: source_indices and segment_ids differ in length");
        for (int s : source_indices)
            if (s < 0 || s >= num_rows)
                throw ShapeError("SegmentMap: source index " + std::to_string(s) +
                                 " out of range for " + std::to_string(num_rows) + " rows");
        for (int d : segment_ids)
            if (d < 0 || d >= num_segments)
                throw ShapeError("SegmentMap: segment id " + std::to_string(d) +
                                 " out of range for " + std::to_string(num_segments) +
                                 " segments");
    }
};

/// Dense 2-D tensor participating in a reverse-mode tape.
///
/// A Tensor is a shared handle to a tape node holding the value, the gradient
/// accumulator and the backward closure. Results of operations keep their
/// inputs alive; parameters are long-lived nodes whose gradients accumulate
/// across the backward pass. The tape is implicit in the parent links and is
/// confined to a single thread.
class Tensor {
  public:
    Tensor() = default;

    static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
    static Tensor param(Matrix value) { return Tensor(std::move(value), true); }
    static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false) {
        return Tensor(Matrix::Zero(rows, cols), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    const Matrix& value() const { return node_->value; }
    Matrix& value() { return node_->value; }
    bool requires_grad() const { return node_->requires_grad; }

    bool has_grad() const { return node_->grad.size() > 0; }
    const Matrix& grad() const {
        if (!has_grad()) throw ConfigError("Tensor: gradient not populated");
        return node_->grad;
    }
    void zero_grad() { node_->grad.resize(0, 0); }

    /// Materialize a zero gradient when the backward pass never reached this
    /// parameter (legitimate for weights with no path to the loss, e.g. deep
    /// embeddings under a shallow layer stack).
    void ensure_zero_grad() {
        if (node_->requires_grad && node_->grad.size() == 0)
            node_->grad = Matrix::Zero(rows(), cols());
    }

    /// Reverse pass from a 1x1 scalar: seeds d(self)=1 and propagates through
    /// every reachable requires_grad node in reverse topological order.
    void backward() {
        if (rows() != 1 || cols() != 1)
            throw ShapeError("backward: tensor is " + shape_str() + ", expected 1x1 scalar");
        if (!requires_grad())
            throw ConfigError("backward: tensor does not require gradients");

        std::vector<Node*> order = topo_order();
        accumulate(*node_, Matrix::Ones(1, 1));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
        }
    }

    std::string shape_str() const {
        return std::to_string(rows()) + "x" + std::to_string(cols());
    }

  private:
    struct Node {
        Matrix value;
        Matrix grad;  // empty until touched by a backward pass
        bool requires_grad = false;
        std::vector<Tensor> parents;
        std::function<void(Node&)> backward_fn;
    };

    explicit Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static void accumulate(Node& n, const Matrix& g) {
        if (!n.requires_grad) return;
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }

    static Tensor make_result(Matrix value, std::vector<Tensor> parents,
                              std::function<void(Node&)> backward_fn) {
        bool req = false;
        if (grad_mode())
            for (const auto& p : parents) req = req || p.requires_grad();
        Tensor t(std::move(value), req);
        if (req) {
            t.node_->parents = std::move(parents);
            t.node_->backward_fn = std::move(backward_fn);
        }
        return t;
    }

    std::vector<Node*> topo_order() const {
        std::vector<Node*> order;
        std::unordered_set<Node*> visited;
        // Iterative postorder DFS over parent links; reverse postorder is a
        // topological order of the tape DAG.
        std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node* p = n->parents[next++].node_.get();
                if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        return order;
    }

    std::shared_ptr<Node> node_;

    friend Tensor matmul(const Tensor&, const Tensor&);
    friend Tensor add(const Tensor&, const Tensor&);
    friend Tensor add_bias(const Tensor&, const Tensor&);
    friend Tensor repeat_rows(const Tensor&, Eigen::Index);
    friend Tensor mul(const Tensor&, const Tensor&);
    friend Tensor sum(const Tensor&);
    friend Tensor segment_mean(const Tensor&, const SegmentMap&);
    friend Tensor gelu(const Tensor&);
    friend Tensor dropout(const Tensor&, double, bool, Rng&);
    friend Tensor l1_loss(const Tensor&, const Tensor&, const Mask&);
};

/// C = A * B. Backward: dA += dC * B^T, dB += A^T * dC.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " +
                         b.shape_str());
    Matrix out = a.value() * b.value();
    return Tensor::make_result(std::move(out), {a, b}, [a, b](Tensor::Node& self) {
        if (a.requires_grad()) Tensor::accumulate(*a.node_, self.grad * b.value().transpose());
        if (b.requires_grad()) Tensor::accumulate(*b.node_, a.value().transpose() * self.grad);
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("add: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
    Matrix out = a.value() + b.value();
    return Tensor::make_result(std::move(out), {a, b}, [a, b](Tensor::Node& self) {
        Tensor::accumulate(*a.node_, self.grad);
        Tensor::accumulate(*b.node_, self.grad);
    });
}

/// x (n x d) plus a bias row (1 x d) broadcast over rows.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols())
        throw ShapeError("add_bias: bias is " + bias.shape_str() + ", expected 1x" +
                         std::to_string(x.cols()));
    Matrix out = x.value().rowwise() + bias.value().row(0);
    return Tensor::make_result(std::move(out), {x, bias}, [x, bias](Tensor::Node& self) {
        Tensor::accumulate(*x.node_, self.grad);
        if (bias.requires_grad())
            Tensor::accumulate(*bias.node_, self.grad.colwise().sum());
    });
}

/// Broadcast a 1 x d row vector to n x d.
inline Tensor repeat_rows(const Tensor& v, Eigen::Index n) {
    if (v.rows() != 1) throw ShapeError("repeat_rows: input is " + v.shape_str() + ", expected one row");
    Matrix out = v.value().replicate(n, 1);
    return Tensor::make_result(std::move(out), {v}, [v](Tensor::Node& self) {
        Tensor::accumulate(*v.node_, self.grad.colwise().sum());
    });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("mul: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
    Matrix out = a.value().cwiseProduct(b.value());
    return Tensor::make_result(std::move(out), {a, b}, [a, b](Tensor::Node& self) {
        if (a.requires_grad())
            Tensor::accumulate(*a.node_, self.grad.cwiseProduct(b.value()));
        if (b.requires_grad())
            Tensor::accumulate(*b.node_, self.grad.cwiseProduct(a.value()));
    });
}

/// Sum of all entries, as a 1x1 tensor.
inline Tensor sum(const Tensor& x) {
    Matrix out(1, 1);
    out(0, 0) = x.value().sum();
    return Tensor::make_result(std::move(out), {x}, [x](Tensor::Node& self) {
        Tensor::accumulate(*x.node_,
                           Matrix::Constant(x.rows(), x.cols(), self.grad(0, 0)));
    });
}

/// Row j of the output is the mean of input rows {source_indices[k] :
/// segment_ids[k] == j}; empty segments yield zero rows. Backward scatters
/// dOut/|segment| back to the contributing rows.
inline Tensor segment_mean(const Tensor& x, const SegmentMap& seg) {
    seg.validate(static_cast<int>(x.rows()));
    const auto d = x.cols();
    Matrix out = Matrix::Zero(seg.num_segments, d);
    std::vector<double> count(static_cast<size_t>(seg.num_segments), 0.0);
    for (size_t k = 0; k < seg.source_indices.size(); ++k) {
        out.row(seg.segment_ids[k]) += x.value().row(seg.source_indices[k]);
        count[static_cast<size_t>(seg.segment_ids[k])] += 1.0;
    }
    for (int j = 0; j < seg.num_segments; ++j)
        if (count[static_cast<size_t>(j)] > 0.0) out.row(j) /= count[static_cast<size_t>(j)];
    return Tensor::make_result(std::move(out), {x}, [x, seg, count](Tensor::Node& self) {
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        for (size_t k = 0; k < seg.source_indices.size(); ++k) {
            int j = seg.segment_ids[k];
            dx.row(seg.source_indices[k]) +=
                self.grad.row(j) / count[static_cast<size_t>(j)];
        }
        Tensor::accumulate(*x.node_, dx);
    });
}

namespace detail {
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }
inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) * 0.3989422804014326779;  // 1/sqrt(2*pi)
}
}  // namespace detail

/// Exact GELU, x * Phi(x) with Phi the standard normal CDF (erf form, not the
/// tanh approximation). Backward: Phi(x) + x * phi(x).
inline Tensor gelu(const Tensor& x) {
    Matrix out = x.value().unaryExpr([](double v) { return v * detail::normal_cdf(v); });
    return Tensor::make_result(std::move(out), {x}, [x](Tensor::Node& self) {
        Matrix dx = x.value().unaryExpr([](double v) {
            return detail::normal_cdf(v) + v * detail::normal_pdf(v);
        });
        Tensor::accumulate(*x.node_, self.grad.cwiseProduct(dx));
    });
}

/// Inverted dropout: in training mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); in eval mode the identity.
inline Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const double scale = 1.0 / (1.0 - rate);
    Matrix mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            mask(i, j) = rng.uniform() < rate ? 0.0 : scale;
    Matrix out = x.value().cwiseProduct(mask);
    return Tensor::make_result(std::move(out), {x}, [x, mask](Tensor::Node& self) {
        Tensor::accumulate(*x.node_, self.grad.cwiseProduct(mask));
    });
}

/// Mean absolute error over mask-selected rows of two n x 1 columns.
inline Tensor l1_loss(const Tensor& pred, const Tensor& target, const Mask& mask) {
    if (pred.rows() != target.rows() || pred.cols() != 1 || target.cols() != 1)
        throw ShapeError("l1_loss: expected matching nx1 columns, got " + pred.shape_str() +
                         " vs " + target.shape_str());
    if (static_cast<Eigen::Index>(mask.size()) != pred.rows())
        throw ShapeError("l1_loss: mask length " + std::to_string(mask.size()) +
                         " does not match " + std::to_string(pred.rows()) + " rows");
    double n = 0.0, total = 0.0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        total += std::abs(pred.value()(i, 0) - target.value()(i, 0));
        n += 1.0;
    }
    if (n == 0.0) throw ConfigError("l1_loss: mask selects no elements");
    Matrix out(1, 1);
    out(0, 0) = total / n;
    return Tensor::make_result(std::move(out), {pred, target},
                               [pred, target, mask, n](Tensor::Node& self) {
        const double g = self.grad(0, 0) / n;
        Matrix dp = Matrix::Zero(pred.rows(), 1);
        for (Eigen::Index i = 0; i < pred.rows(); ++i) {
            if (!mask[static_cast<size_t>(i)]) continue;
            double diff = pred.value()(i, 0) - target.value()(i, 0);
            dp(i, 0) = diff > 0 ? g : (diff < 0 ? -g : 0.0);
        }
        if (pred.requires_grad()) Tensor::accumulate(*pred.node_, dp);
        if (target.requires_grad()) Tensor::accumulate(*target.node_, -dp);
    });
}

}  // namespace perfgraph::ad
