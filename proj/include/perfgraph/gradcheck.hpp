#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "perfgraph/errors.hpp"
#include "perfgraph/tensor.hpp"

namespace perfgraph::ad {

/// Compare the tape gradient of a scalar-valued function against central
/// finite differences, elementwise. Returns the maximum relative error with
/// denominator max(|analytic|, |numeric|, 1e-8). The function must be
/// deterministic (seed any internal randomness per call).
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Matrix& point,
                         double eps) {
    Tensor x = Tensor::param(point);
    Tensor y = f(x);
    if (y.rows() != 1 || y.cols() != 1)
        throw ShapeError("grad_check: function must return a 1x1 scalar");
    if (!std::isfinite(y.value()(0, 0))) throw TrainError("grad_check: non-finite value");
    y.backward();
    Matrix analytic = x.has_grad() ? x.grad() : Matrix::Zero(point.rows(), point.cols());

    auto eval = [&](const Matrix& at) {
        NoGradGuard ng;
        Tensor t = Tensor::constant(at);
        double v = f(t).value()(0, 0);
        if (!std::isfinite(v)) throw TrainError("grad_check: non-finite value");
        return v;
    };

    double max_rel = 0.0;
    Matrix shifted = point;
    for (Eigen::Index i = 0; i < point.rows(); ++i) {
        for (Eigen::Index j = 0; j < point.cols(); ++j) {
            shifted(i, j) = point(i, j) + eps;
            const double up = eval(shifted);
            shifted(i, j) = point(i, j) - eps;
            const double down = eval(shifted);
            shifted(i, j) = point(i, j);
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic(i, j);
            if (!std::isfinite(a) || !std::isfinite(numeric))
                throw TrainError("grad_check: non-finite gradient");
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace perfgraph::ad
