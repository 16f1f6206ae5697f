#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "perfgraph/errors.hpp"
#include "perfgraph/rng.hpp"
#include "perfgraph/tensor.hpp"

namespace perfgraph::ad {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Adam with bias correction over a fixed parameter list.
/// Moments have the same shape as their parameters; the step count increases
/// by exactly one per step(). Gradients are consumed and cleared by step().
class Adam {
  public:
    explicit Adam(std::vector<NamedParam> params, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
        for (const auto& p : params_) {
            first_moment_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
            second_moment_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
        }
    }

    void step(double lr) {
        for (const auto& p : params_)
            if (!p.tensor.has_grad())
                throw TrainError("adam: missing gradient for parameter '" + p.name + "'");
        ++step_count_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
        for (size_t i = 0; i < params_.size(); ++i) {
            const Matrix& g = params_[i].tensor.grad();
            first_moment_[i] = beta1_ * first_moment_[i] + (1.0 - beta1_) * g;
            second_moment_[i] =
                beta2_ * second_moment_[i].array() + (1.0 - beta2_) * g.array().square();
            Matrix m_hat = first_moment_[i] / bc1;
            Matrix v_hat = second_moment_[i] / bc2;
            params_[i].tensor.value().array() -=
                lr * m_hat.array() / (v_hat.array().sqrt() + epsilon_);
            params_[i].tensor.zero_grad();
        }
    }

    long step_count() const { return step_count_; }

  private:
    std::vector<NamedParam> params_;
    std::vector<Matrix> first_moment_;
    std::vector<Matrix> second_moment_;
    long step_count_ = 0;
    double beta1_, beta2_, epsilon_;
};

/// I.i.d. uniform on [-b, b] with b = sqrt(6 / fan_in) (fan-in mode, gain 1).
/// Fill order is row-major, so the result is a pure function of (shape, seed).
inline Tensor kaiming_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                              Rng& rng) {
    if (fan_in < 1)
        throw ConfigError("kaiming_uniform: fan_in must be >= 1, got " + std::to_string(fan_in));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return Tensor::param(std::move(m));
}

}  // namespace perfgraph::ad
