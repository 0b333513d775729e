#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "../error.hpp"

namespace ntpdetect {

/// Per-column mean and population standard deviation from a training matrix.
/// A column with zero spread in training maps to 0 everywhere; `std` holds 0
/// for such columns and apply() treats it as "drop to zero".
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;

    [[nodiscard]] bool empty() const noexcept { return mean.size() == 0; }

    [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        if (empty()) return x;
        if (x.cols() != mean.size())
            throw InvalidArgument("standardize: expected " + std::to_string(mean.size()) + " columns, got " +
                                  std::to_string(x.cols()));
        Eigen::MatrixXd out(x.rows(), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (std(j) > 0.0) out.col(j) = (x.col(j).array() - mean(j)) / std(j);
            else out.col(j).setZero();
        }
        return out;
    }
};

inline Standardizer standardize_fit(const Eigen::MatrixXd& x) {
    if (x.rows() == 0) throw InvalidArgument("standardize_fit: empty matrix");
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.std.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - s.mean(j)).square().mean();
        const double sd = std::sqrt(var);
        // Spread at rounding level of the column's magnitude counts as constant.
        s.std(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? sd : 0.0;
    }
    return s;
}

} // namespace ntpdetect
