#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "data_model.hpp"
#include "error.hpp"

namespace ntpdetect {

/// 1-based ranks; tied values share the average of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

/// Spearman rank correlation with average-rank ties. Returns nullopt when either
/// sequence is constant (correlation undefined).
inline std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("spearman: sequences differ in length");
    if (a.size() < 2) throw InvalidArgument("spearman: need at least two values");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean;
        const double db = rb[i] - mean;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct DatasetStats {
    std::size_t n_records = 0;
    std::size_t n_positive = 0;
    double positive_rate = 0.0;
    std::size_t max_seq_len = 0;
    std::map<std::size_t, std::size_t> seq_len_histogram;
    std::map<std::string, std::size_t> generator_counts;
    /// Records whose Description/Linguistic correlation is defined (length >= 2, neither constant).
    std::size_t n_correlation_defined = 0;
    std::optional<double> mean_spearman;
    std::optional<double> median_spearman;
    std::size_t n_llava_pred = 0;
    std::size_t n_paligemma_pred = 0;
};

inline DatasetStats dataset_stats(const Dataset& d) {
    if (d.empty()) throw InvalidArgument("dataset_stats: dataset is empty");
    DatasetStats s;
    s.n_records = d.size();
    s.max_seq_len = d.max_seq_len();
    std::vector<double> correlations;
    for (const auto& r : d.records()) {
        if (r.label) ++s.n_positive;
        ++s.seq_len_histogram[r.description_ntps.size()];
        ++s.generator_counts[std::string(to_string(r.generator_model))];
        if (r.llava_pred) ++s.n_llava_pred;
        if (r.paligemma_pred) ++s.n_paligemma_pred;
        if (r.description_ntps.size() >= 2) {
            if (auto rho = spearman(r.description_ntps, r.linguistic_ntps)) correlations.push_back(*rho);
        }
    }
    s.positive_rate = static_cast<double>(s.n_positive) / static_cast<double>(s.n_records);
    s.n_correlation_defined = correlations.size();
    if (!correlations.empty()) {
        s.mean_spearman = std::accumulate(correlations.begin(), correlations.end(), 0.0) /
                          static_cast<double>(correlations.size());
        std::sort(correlations.begin(), correlations.end());
        const std::size_t m = correlations.size();
        s.median_spearman = m % 2 == 1 ? correlations[m / 2]
                                       : 0.5 * (correlations[m / 2 - 1] + correlations[m / 2]);
    }
    return s;
}

inline nlohmann::ordered_json to_json(const DatasetStats& s) {
    nlohmann::ordered_json j;
    j["n_records"] = s.n_records;
    j["n_positive"] = s.n_positive;
    j["positive_rate"] = s.positive_rate;
    j["max_seq_len"] = s.max_seq_len;
    nlohmann::ordered_json hist = nlohmann::ordered_json::object();
    for (const auto& [len, count] : s.seq_len_histogram) hist[std::to_string(len)] = count;
    j["seq_len_histogram"] = hist;
    nlohmann::ordered_json gens = nlohmann::ordered_json::object();
    for (const auto& [name, count] : s.generator_counts) gens[name] = count;
    j["generator_counts"] = gens;
    j["n_correlation_defined"] = s.n_correlation_defined;
    j["mean_spearman"] = s.mean_spearman ? nlohmann::ordered_json(*s.mean_spearman) : nlohmann::ordered_json(nullptr);
    j["median_spearman"] =
        s.median_spearman ? nlohmann::ordered_json(*s.median_spearman) : nlohmann::ordered_json(nullptr);
    j["n_llava_pred"] = s.n_llava_pred;
    j["n_paligemma_pred"] = s.n_paligemma_pred;
    return j;
}

} // namespace ntpdetect
