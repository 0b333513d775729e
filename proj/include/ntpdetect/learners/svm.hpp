#pragma once

// Soft-margin C-SVM trained on the dual
//     min_a 0.5 a'Qa - sum(a),  Q_ij = y_i y_j K(x_i, x_j),
//     0 <= a_i <= C,  sum_i y_i a_i = 0,
// by sequential pairwise optimization with second-order working-set selection
// (maximal violating i, then the j with the largest guaranteed decrease). The
// full kernel matrix is held in memory; training sets here are ~1000 rows.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "../error.hpp"
#include "hyperparams.hpp"

namespace ntpdetect {

/// scale = 1 / (n_features * variance of all entries), auto = 1 / n_features.
inline double resolve_gamma(const GammaSpec& g, const Eigen::MatrixXd& x) {
    const double d = static_cast<double>(std::max<Eigen::Index>(x.cols(), 1));
    switch (g.mode) {
    case GammaSpec::Mode::automatic: return 1.0 / d;
    case GammaSpec::Mode::scale: {
        if (x.size() == 0) return 1.0 / d;
        const double mean = x.mean();
        const double var = (x.array() - mean).square().mean();
        return var > 0.0 ? 1.0 / (d * var) : 1.0;
    }
    case GammaSpec::Mode::value: return g.value;
    }
    return 1.0;
}

/// Pairwise squared distances between rows of a and rows of b.
inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const Eigen::VectorXd na = a.rowwise().squaredNorm();
    const Eigen::VectorXd nb = b.rowwise().squaredNorm();
    Eigen::MatrixXd d = -2.0 * a * b.transpose();
    d.colwise() += na;
    d.rowwise() += nb.transpose();
    return d.cwiseMax(0.0);
}

inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Kernel kernel, double gamma) {
    if (kernel == Kernel::linear) return a * b.transpose();
    return (-gamma * squared_distances(a, b)).array().exp().matrix();
}

struct SmoOptions {
    double tolerance = 1e-3;
    long max_iterations = 0; // 0: max(10'000'000, 100 n)
};

struct SmoResult {
    std::vector<double> alpha;
    double bias = 0.0;
    long iterations = 0;
    bool converged = false;
};

/// Solves the dual for a precomputed kernel matrix. labels are +1 / -1.
inline SmoResult solve_svm_dual(const Eigen::MatrixXd& kernel, std::span<const double> labels, double c,
                                const SmoOptions& opt = {}) {
    const Eigen::Index n = kernel.rows();
    if (kernel.cols() != n || static_cast<Eigen::Index>(labels.size()) != n)
        throw InvalidArgument("svm: kernel/label size mismatch");
    if (!(c > 0.0)) throw InvalidArgument("svm: C must be positive");
    if (!kernel.allFinite()) throw TrainingError("svm: kernel matrix has non-finite values");
    constexpr double tau = 1e-12;
    const double inf = std::numeric_limits<double>::infinity();
    const long max_iter = opt.max_iterations > 0 ? opt.max_iterations : std::max<long>(10'000'000, 100 * n);

    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
    std::vector<double> grad(static_cast<std::size_t>(n), -1.0);
    const auto y = [&](Eigen::Index i) { return labels[static_cast<std::size_t>(i)]; };
    const auto a = [&](Eigen::Index i) -> double& { return alpha[static_cast<std::size_t>(i)]; };
    const auto g = [&](Eigen::Index i) -> double& { return grad[static_cast<std::size_t>(i)]; };
    const auto at_upper = [&](Eigen::Index i) { return a(i) >= c; };
    const auto at_lower = [&](Eigen::Index i) { return a(i) <= 0.0; };

    // Shrinking as in libsvm: bounded variables that cannot join a violating
    // pair leave the active set; gradients are rebuilt before the final check.
    std::vector<Eigen::Index> active(static_cast<std::size_t>(n));
    std::iota(active.begin(), active.end(), Eigen::Index{0});
    const auto rebuild_gradient = [&] {
        std::fill(grad.begin(), grad.end(), -1.0);
        for (Eigen::Index s = 0; s < n; ++s) {
            if (a(s) == 0.0) continue;
            const double ys = y(s) * a(s);
            const auto col = kernel.col(s);
            for (Eigen::Index t = 0; t < n; ++t) g(t) += y(t) * ys * col(t);
        }
    };
    const auto reactivate = [&] {
        rebuild_gradient();
        active.resize(static_cast<std::size_t>(n));
        std::iota(active.begin(), active.end(), Eigen::Index{0});
    };
    const auto violation_bounds = [&] {
        double up = -inf, low = -inf; // max -yG over I_up, max yG over I_low
        for (auto t : active) {
            if (y(t) > 0) {
                if (!at_upper(t)) up = std::max(up, -g(t));
                if (!at_lower(t)) low = std::max(low, g(t));
            } else {
                if (!at_lower(t)) up = std::max(up, g(t));
                if (!at_upper(t)) low = std::max(low, -g(t));
            }
        }
        return std::pair{up, low};
    };
    bool unshrunk = false;
    const auto shrink = [&] {
        auto [up, low] = violation_bounds();
        if (!unshrunk && up + low <= 10.0 * opt.tolerance) {
            unshrunk = true;
            reactivate();
            std::tie(up, low) = violation_bounds();
        }
        std::erase_if(active, [&](Eigen::Index t) {
            if (at_upper(t)) return y(t) > 0 ? -g(t) > up : -g(t) > low;
            if (at_lower(t)) return y(t) > 0 ? g(t) > low : g(t) > up;
            return false;
        });
    };

    // Working pair: i maximal violator in I_up, j the best second-order
    // decrease in I_low. False when the active set satisfies the tolerance.
    const auto select = [&](Eigen::Index& i, Eigen::Index& j) {
        double gmax = -inf;
        i = -1;
        for (auto t : active) {
            if (y(t) > 0) {
                if (!at_upper(t) && -g(t) >= gmax) { gmax = -g(t); i = t; }
            } else {
                if (!at_lower(t) && g(t) >= gmax) { gmax = g(t); i = t; }
            }
        }
        double gmax2 = -inf;
        double best = inf;
        j = -1;
        if (i < 0) return false;
        const auto ki = kernel.col(i); // K is symmetric; columns are contiguous
        for (auto t : active) {
            if (y(t) > 0) {
                if (at_lower(t)) continue;
                const double diff = gmax + g(t);
                gmax2 = std::max(gmax2, g(t));
                if (diff > 0) {
                    const double quad = kernel(i, i) + kernel(t, t) - 2.0 * y(i) * ki(t);
                    const double obj = -(diff * diff) / (quad > 0 ? quad : tau);
                    if (obj <= best) { best = obj; j = t; }
                }
            } else {
                if (at_upper(t)) continue;
                const double diff = gmax - g(t);
                gmax2 = std::max(gmax2, -g(t));
                if (diff > 0) {
                    const double quad = kernel(i, i) + kernel(t, t) + 2.0 * y(i) * ki(t);
                    const double obj = -(diff * diff) / (quad > 0 ? quad : tau);
                    if (obj <= best) { best = obj; j = t; }
                }
            }
        }
        return j >= 0 && gmax + gmax2 >= opt.tolerance;
    };

    SmoResult res;
    const long shrink_every = std::min<long>(static_cast<long>(n), 1000);
    long countdown = shrink_every;
    for (long iter = 0; iter < max_iter; ++iter) {
        res.iterations = iter;
        if (--countdown == 0) {
            countdown = shrink_every;
            shrink();
        }
        Eigen::Index i = -1, j = -1;
        if (!select(i, j)) {
            if (static_cast<Eigen::Index>(active.size()) == n) {
                res.converged = true;
                break;
            }
            reactivate();
            if (!select(i, j)) {
                res.converged = true;
                break;
            }
            countdown = 1; // shrink again on the next iteration
        }

        const double old_ai = a(i), old_aj = a(j);
        const double qij = y(i) * y(j) * kernel(i, j);
        if (y(i) != y(j)) {
            double quad = kernel(i, i) + kernel(j, j) + 2.0 * qij;
            if (quad <= 0) quad = tau;
            const double delta = (-g(i) - g(j)) / quad;
            const double diff = a(i) - a(j);
            a(i) += delta;
            a(j) += delta;
            if (diff > 0) {
                if (a(j) < 0) { a(j) = 0; a(i) = diff; }
            } else {
                if (a(i) < 0) { a(i) = 0; a(j) = -diff; }
            }
            if (diff > 0) {
                if (a(i) > c) { a(i) = c; a(j) = c - diff; }
            } else {
                if (a(j) > c) { a(j) = c; a(i) = c + diff; }
            }
        } else {
            double quad = kernel(i, i) + kernel(j, j) - 2.0 * qij;
            if (quad <= 0) quad = tau;
            const double delta = (g(i) - g(j)) / quad;
            const double sum = a(i) + a(j);
            a(i) -= delta;
            a(j) += delta;
            if (sum > c) {
                if (a(i) > c) { a(i) = c; a(j) = sum - c; }
            } else {
                if (a(j) < 0) { a(j) = 0; a(i) = sum; }
            }
            if (sum > c) {
                if (a(j) > c) { a(j) = c; a(i) = sum - c; }
            } else {
                if (a(i) < 0) { a(i) = 0; a(j) = sum; }
            }
        }
        const double dai = y(i) * (a(i) - old_ai);
        const double daj = y(j) * (a(j) - old_aj);
        const auto ki = kernel.col(i);
        const auto kj = kernel.col(j);
        for (auto t : active) g(t) += y(t) * (ki(t) * dai + kj(t) * daj);
    }
    if (!res.converged) rebuild_gradient();

    // Offset from free vectors, or the midpoint of the feasible interval.
    double ub = inf, lb = -inf, sum_free = 0.0;
    long n_free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = y(t) * g(t);
        if (at_upper(t)) {
            if (y(t) < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (at_lower(t)) {
            if (y(t) > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
    res.bias = -rho;
    res.alpha = std::move(alpha);
    return res;
}

struct SvmFit {
    Kernel kernel = Kernel::rbf;
    double gamma = 0.0;
    Eigen::MatrixXd support_vectors;
    Eigen::VectorXd coef; // alpha_i * y_i
    double bias = 0.0;
    std::vector<double> alpha; // full dual vector of the training run
    long iterations = 0;

    [[nodiscard]] Eigen::VectorXd decision(const Eigen::MatrixXd& x) const {
        if (support_vectors.rows() == 0) return Eigen::VectorXd::Constant(x.rows(), bias);
        return (kernel_matrix(x, support_vectors, kernel, gamma) * coef).array() + bias;
    }
};

/// `gram`, when given, must be kernel_matrix(x, x, hp.kernel, resolved gamma).
inline SvmFit train_svm(const Eigen::MatrixXd& x, std::span<const bool> y, const SvmParams& hp,
                        const Eigen::MatrixXd* gram = nullptr, const SmoOptions& opt = {}) {
    if (y.size() != static_cast<std::size_t>(x.rows())) throw InvalidArgument("label count does not match row count");
    const auto pos = std::count(y.begin(), y.end(), true);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) throw TrainingError("training data contains a single class");

    SvmFit fit;
    fit.kernel = hp.kernel;
    fit.gamma = hp.kernel == Kernel::rbf ? resolve_gamma(hp.gamma, x) : 0.0;
    if (hp.kernel == Kernel::rbf && !(std::isfinite(fit.gamma) && fit.gamma > 0))
        throw TrainingError("svm: gamma must be a positive finite number");
    std::optional<Eigen::MatrixXd> own;
    if (!gram) {
        own = kernel_matrix(x, x, hp.kernel, fit.gamma);
        gram = &*own;
    }
    std::vector<double> labels(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) labels[i] = y[i] ? 1.0 : -1.0;
    auto dual = solve_svm_dual(*gram, labels, hp.C, opt);

    std::vector<Eigen::Index> sv;
    for (std::size_t i = 0; i < dual.alpha.size(); ++i)
        if (dual.alpha[i] > 0.0) sv.push_back(static_cast<Eigen::Index>(i));
    fit.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
    fit.coef.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t k = 0; k < sv.size(); ++k) {
        fit.support_vectors.row(static_cast<Eigen::Index>(k)) = x.row(sv[k]);
        fit.coef(static_cast<Eigen::Index>(k)) = dual.alpha[static_cast<std::size_t>(sv[k])] * labels[static_cast<std::size_t>(sv[k])];
    }
    fit.bias = dual.bias;
    fit.alpha = std::move(dual.alpha);
    fit.iterations = dual.iterations;
    return fit;
}

} // namespace ntpdetect
