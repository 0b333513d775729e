#pragma once

// Small synthetic problems shared by the unit tests and the acceptance suite.

#include <cstdint>

#include <Eigen/Dense>

#include <ntpdetect/data_model.hpp>
#include <ntpdetect/rng.hpp>

namespace fixture {

struct Toy {
    Eigen::MatrixXd x;
    ntpdetect::LabelVector y;
};

/// Two overlapping Gaussian blobs in `dims` dimensions.
inline Toy blobs(std::size_t n, int dims, double separation, std::uint64_t seed) {
    ntpdetect::Rng rng(seed);
    Toy t{Eigen::MatrixXd(static_cast<Eigen::Index>(n), dims), ntpdetect::LabelVector(n)};
    for (std::size_t i = 0; i < n; ++i) {
        t.y[i] = i % 2 == 0;
        for (int j = 0; j < dims; ++j)
            t.x(static_cast<Eigen::Index>(i), j) = rng.normal() + (t.y[i] ? separation : 0.0) * (j == 0 ? 1.0 : 0.5);
    }
    return t;
}

} // namespace fixture
