#pragma once

// L1/L2-regularized logistic regression.
//
// Objective over parameters (w, b):
//     F(w, b) = sum_i log(1 + exp(-s_i (w.x_i + b))) + (1/C) * R(w)
// with s_i = +1 for positives, -1 otherwise, R = 0.5 |w|^2 (L2) or |w|_1 (L1),
// and an unpenalized intercept. L2 uses damped Newton steps; L1 uses a proximal
// Newton outer loop whose quadratic subproblem is solved by cyclic coordinate
// descent with soft-thresholding. Both stop when the largest parameter change
// of an accepted step is below `tolerance`, or after `max_iterations`.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "../error.hpp"
#include "hyperparams.hpp"

namespace ntpdetect {

struct LogRegFit {
    Eigen::VectorXd weights;
    double bias = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Objective value before the first and after every accepted step.
    std::vector<double> objective_trace;

    [[nodiscard]] Eigen::VectorXd decision(const Eigen::MatrixXd& x) const {
        return (x * weights).array() + bias;
    }
};

struct LogRegOptions {
    double tolerance = 1e-6;
    int max_iterations = 1000;
};

namespace detail {

/// log(1 + exp(-m)) without overflow.
inline double log1p_exp_neg(double m) {
    return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double logistic_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& target, const Eigen::VectorXd& w,
                                 double b, double inv_c, Penalty penalty) {
    const Eigen::VectorXd margin = (x * w).array() + b;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < margin.size(); ++i)
        loss += log1p_exp_neg(target(i) > 0.5 ? margin(i) : -margin(i));
    const double reg = penalty == Penalty::l2 ? 0.5 * w.squaredNorm() : w.lpNorm<1>();
    return loss + inv_c * reg;
}

inline void check_binary(std::span<const bool> y, std::size_t rows) {
    if (y.size() != rows) throw InvalidArgument("label count does not match row count");
    const auto pos = std::count(y.begin(), y.end(), true);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size()))
        throw TrainingError("training data contains a single class");
}

} // namespace detail

inline LogRegFit train_logreg(const Eigen::MatrixXd& x, std::span<const bool> y, const LogRegParams& hp,
                              const LogRegOptions& opt = {}) {
    detail::check_binary(y, static_cast<std::size_t>(x.rows()));
    if (!(hp.C > 0.0)) throw InvalidArgument("logreg: C must be positive");
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    const double inv_c = 1.0 / hp.C;
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

    LogRegFit fit;
    fit.weights = Eigen::VectorXd::Zero(d);
    double objective = detail::logistic_objective(x, target, fit.weights, fit.bias, inv_c, hp.penalty);
    fit.objective_trace.push_back(objective);

    Eigen::VectorXd p(n), curvature(n), residual(n);
    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        fit.iterations = iter;
        const Eigen::VectorXd margin = (x * fit.weights).array() + fit.bias;
        for (Eigen::Index i = 0; i < n; ++i) {
            p(i) = detail::sigmoid(margin(i));
            curvature(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
            residual(i) = p(i) - target(i);
        }
        // Loss gradient and Hessian over [w; b].
        Eigen::VectorXd grad(d + 1);
        grad.head(d) = x.transpose() * residual;
        grad(d) = residual.sum();
        Eigen::MatrixXd hess(d + 1, d + 1);
        hess.topLeftCorner(d, d) = x.transpose() * curvature.asDiagonal() * x;
        hess.block(0, d, d, 1) = x.transpose() * curvature;
        hess.block(d, 0, 1, d) = hess.block(0, d, d, 1).transpose();
        hess(d, d) = curvature.sum();

        Eigen::VectorXd step(d + 1);
        double predicted; // directional decrease used by the Armijo test
        if (hp.penalty == Penalty::l2) {
            grad.head(d) += inv_c * fit.weights;
            hess.topLeftCorner(d, d).diagonal().array() += inv_c;
            hess(d, d) += 1e-10;
            step = -hess.ldlt().solve(grad);
            predicted = grad.dot(step);
        } else {
            // Coordinate descent on g.s + 0.5 s'Hs + inv_c |w + s|_1.
            step.setZero();
            Eigen::VectorXd hs = Eigen::VectorXd::Zero(d + 1);
            for (int pass = 0; pass < 200; ++pass) {
                double largest = 0.0;
                for (Eigen::Index j = 0; j <= d; ++j) {
                    const double hjj = hess(j, j);
                    if (hjj <= 1e-12) continue;
                    const double g = grad(j) + hs(j);
                    double delta;
                    if (j == d) {
                        delta = -g / hjj;
                    } else {
                        const double z = fit.weights(j) + step(j) - g / hjj;
                        const double thresh = inv_c / hjj;
                        const double shrunk = z > thresh ? z - thresh : (z < -thresh ? z + thresh : 0.0);
                        delta = shrunk - (fit.weights(j) + step(j));
                    }
                    if (delta == 0.0) continue;
                    step(j) += delta;
                    hs += delta * hess.col(j);
                    largest = std::max(largest, std::abs(delta));
                }
                if (largest < 1e-10) break;
            }
            predicted = grad.dot(step) + inv_c * ((fit.weights + step.head(d)).lpNorm<1>() - fit.weights.lpNorm<1>());
        }

        if (step.lpNorm<Eigen::Infinity>() < opt.tolerance) {
            fit.converged = true;
            break;
        }
        // Backtracking line search on the exact objective.
        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd w_new;
        double b_new = 0.0, obj_new = 0.0;
        for (int k = 0; k < 50; ++k) {
            w_new = fit.weights + t * step.head(d);
            b_new = fit.bias + t * step(d);
            obj_new = detail::logistic_objective(x, target, w_new, b_new, inv_c, hp.penalty);
            if (obj_new <= objective + 1e-4 * t * predicted) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            fit.converged = true; // no descent available at machine precision
            break;
        }
        const double change = t * step.lpNorm<Eigen::Infinity>();
        fit.weights = std::move(w_new);
        fit.bias = b_new;
        objective = obj_new;
        fit.objective_trace.push_back(objective);
        if (change < opt.tolerance) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

} // namespace ntpdetect
