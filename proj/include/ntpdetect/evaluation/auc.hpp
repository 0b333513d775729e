#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "../error.hpp"
#include "../stats.hpp"

namespace ntpdetect {

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(s+ > s-) + 0.5 P(s+ = s-), from average-rank sums. Positive = true.
inline double auc_roc(std::span<const double> scores, std::span<const bool> labels) {
    if (scores.size() != labels.size()) throw InvalidArgument("auc_roc: scores and labels differ in length");
    std::size_t n_pos = 0;
    for (bool l : labels) n_pos += l ? 1 : 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw InvalidArgument("auc_roc: both classes must be present");
    const auto ranks = average_ranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i)
        if (labels[i]) rank_sum += ranks[i];
    const double np = static_cast<double>(n_pos);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

} // namespace ntpdetect
