#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "data_model.hpp"
#include "error.hpp"

namespace ntpdetect {

enum class FeatureKind { raw, statistical, predictors_only };

/// How Description and Linguistic NTPs combine into one raw vector.
enum class Aggregation { description_only, linguistic_only, concat, subtract, divide };

inline std::string_view to_string(FeatureKind k) {
    switch (k) {
    case FeatureKind::raw: return "raw";
    case FeatureKind::statistical: return "statistical";
    case FeatureKind::predictors_only: return "predictors_only";
    }
    return "?";
}

inline std::string_view to_string(Aggregation a) {
    switch (a) {
    case Aggregation::description_only: return "description_only";
    case Aggregation::linguistic_only: return "linguistic_only";
    case Aggregation::concat: return "concat";
    case Aggregation::subtract: return "subtract";
    case Aggregation::divide: return "divide";
    }
    return "?";
}

inline FeatureKind parse_feature_kind(std::string_view s) {
    if (s == "raw") return FeatureKind::raw;
    if (s == "statistical") return FeatureKind::statistical;
    if (s == "predictors_only") return FeatureKind::predictors_only;
    throw InvalidArgument("unknown feature kind '" + std::string(s) + "'");
}

inline Aggregation parse_aggregation(std::string_view s) {
    if (s == "description_only") return Aggregation::description_only;
    if (s == "linguistic_only") return Aggregation::linguistic_only;
    if (s == "concat") return Aggregation::concat;
    if (s == "subtract") return Aggregation::subtract;
    if (s == "divide") return Aggregation::divide;
    throw InvalidArgument("unknown aggregation '" + std::string(s) + "'");
}

inline constexpr int kMaxDftK = 5;

struct FeatureConfig {
    FeatureKind kind = FeatureKind::statistical;
    Aggregation aggregation = Aggregation::description_only; // raw kind only
    bool use_linguistic = false;                             // statistical kind only
    int dft_k = 0;
    bool include_llava_pred = false;
    bool include_paligemma_pred = false;
    std::set<std::string> excluded_features;
    std::size_t pad_len = 0; // raw kind only

    bool operator==(const FeatureConfig&) const = default;
};

struct FeatureVector {
    std::vector<std::string> names;
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    void push(std::string name, double value) {
        names.push_back(std::move(name));
        values.push_back(value);
    }
    void append(const FeatureVector& other) {
        names.insert(names.end(), other.names.begin(), other.names.end());
        values.insert(values.end(), other.values.begin(), other.values.end());
    }
};

// ---------------------------------------------------------------------------
// Primitive feature operations
// ---------------------------------------------------------------------------

inline std::vector<double> pad(std::span<const double> seq, std::size_t length) {
    if (seq.size() > length)
        throw InvalidArgument("pad: sequence of length " + std::to_string(seq.size()) + " exceeds target " +
                              std::to_string(length));
    std::vector<double> out(length, 0.0);
    std::copy(seq.begin(), seq.end(), out.begin());
    return out;
}

inline FeatureVector aggregate_raw(std::span<const double> desc, std::span<const double> ling, Aggregation mode,
                                   std::size_t length) {
    if (desc.size() != ling.size()) throw InvalidArgument("aggregate_raw: description and linguistic lengths differ");
    std::vector<double> values;
    switch (mode) {
    case Aggregation::description_only: values = pad(desc, length); break;
    case Aggregation::linguistic_only: values = pad(ling, length); break;
    case Aggregation::concat: {
        values = pad(desc, length);
        const auto second = pad(ling, length);
        values.insert(values.end(), second.begin(), second.end());
        break;
    }
    case Aggregation::subtract:
    case Aggregation::divide: {
        std::vector<double> combined(desc.size());
        for (std::size_t i = 0; i < desc.size(); ++i)
            combined[i] = mode == Aggregation::subtract ? desc[i] - ling[i] : desc[i] / (1.0 + ling[i]);
        values = pad(combined, length);
        break;
    }
    }
    FeatureVector fv;
    const auto prefix = "raw." + std::string(to_string(mode)) + ".";
    fv.names.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) fv.names.push_back(prefix + std::to_string(i));
    fv.values = std::move(values);
    return fv;
}

/// Normalized frequencies (bin / n) of the k strongest non-DC bins among
/// 1..floor(n/2), strongest first, ties to the lower bin. Bins with no energy
/// do not count; missing slots are zero.
inline std::vector<double> dft_topk(std::span<const double> seq, int k) {
    if (k < 0 || k > kMaxDftK) throw InvalidArgument("dft_topk: k must lie in [0, 5]");
    if (seq.empty()) throw InvalidArgument("dft_topk: empty sequence");
    std::vector<double> out(static_cast<std::size_t>(k), 0.0);
    if (k == 0) return out;

    const std::size_t n = seq.size();
    const double mean = std::accumulate(seq.begin(), seq.end(), 0.0) / static_cast<double>(n);
    double scale = 0.0;
    for (double v : seq) scale += std::abs(v);
    // Energies below this are rounding noise of an exactly-zero bin.
    const double floor_power = std::pow(1e-10 * std::max(scale, 1e-300), 2);

    struct Bin {
        std::size_t index;
        double power;
    };
    std::vector<Bin> bins;
    for (std::size_t b = 1; b <= n / 2; ++b) {
        // Goertzel recurrence on the centred signal.
        const double coeff = 2.0 * std::cos(2.0 * std::numbers::pi * static_cast<double>(b) / static_cast<double>(n));
        double s1 = 0.0, s2 = 0.0;
        for (double v : seq) {
            const double s0 = (v - mean) + coeff * s1 - s2;
            s2 = s1;
            s1 = s0;
        }
        const double power = std::max(0.0, s1 * s1 + s2 * s2 - coeff * s1 * s2);
        if (power > floor_power) bins.push_back({b, power});
    }
    std::stable_sort(bins.begin(), bins.end(), [](const Bin& a, const Bin& b) { return a.power > b.power; });
    for (std::size_t i = 0; i < out.size() && i < bins.size(); ++i)
        out[i] = static_cast<double>(bins[i].index) / static_cast<double>(n);
    return out;
}

/// mean, population std, mean of ln, mean of exp, then the DFT frequencies.
inline FeatureVector stat_features(std::span<const double> seq, int k, std::string_view prefix = "desc") {
    if (seq.empty()) throw InvalidArgument("stat_features: empty sequence");
    const double n = static_cast<double>(seq.size());
    double sum = 0.0, sum_log = 0.0, sum_exp = 0.0;
    for (double v : seq) {
        if (!(v > 0.0)) throw InvalidArgument("stat_features: non-positive probability " + std::to_string(v));
        sum += v;
        sum_log += std::log(v);
        sum_exp += std::exp(v);
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : seq) ss += (v - mean) * (v - mean);

    const std::string p(prefix);
    FeatureVector fv;
    fv.push(p + ".mean", mean);
    fv.push(p + ".std", std::sqrt(ss / n));
    fv.push(p + ".mean_log", sum_log / n);
    fv.push(p + ".mean_exp", sum_exp / n);
    const auto freqs = dft_topk(seq, k);
    for (std::size_t i = 0; i < freqs.size(); ++i) fv.push(p + ".dft." + std::to_string(i), freqs[i]);
    return fv;
}

inline FeatureVector cross_features(std::span<const double> desc, std::span<const double> ling) {
    if (desc.size() != ling.size()) throw InvalidArgument("cross_features: lengths differ");
    if (desc.empty()) throw InvalidArgument("cross_features: empty sequences");
    double product = 0.0, ling_over_desc = 0.0, desc_over_ling = 0.0;
    for (std::size_t i = 0; i < desc.size(); ++i) {
        product += desc[i] * ling[i];
        ling_over_desc += ling[i] / desc[i];
        desc_over_ling += desc[i] / ling[i];
    }
    const double n = static_cast<double>(desc.size());
    FeatureVector fv;
    fv.push("cross.mean_product", product / n);
    fv.push("cross.min_ratio", std::min(ling_over_desc / n, desc_over_ling / n));
    return fv;
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

namespace detail {

inline void check_config(const FeatureConfig& c) {
    if (c.dft_k < 0 || c.dft_k > kMaxDftK) throw InvalidArgument("feature config: dft_k must lie in [0, 5]");
    if (c.kind == FeatureKind::raw && c.pad_len == 0) throw InvalidArgument("feature config: raw features need pad_len > 0");
}

inline std::vector<std::string> stat_names(std::string_view prefix, int k) {
    std::vector<std::string> names;
    for (const char* s : {".mean", ".std", ".mean_log", ".mean_exp"}) names.push_back(std::string(prefix) + s);
    for (int i = 0; i < k; ++i) names.push_back(std::string(prefix) + ".dft." + std::to_string(i));
    return names;
}

} // namespace detail

/// Every name the config produces before exclusions, in output order.
inline std::vector<std::string> produced_feature_names(const FeatureConfig& c) {
    detail::check_config(c);
    std::vector<std::string> names;
    switch (c.kind) {
    case FeatureKind::statistical: {
        names = detail::stat_names("desc", c.dft_k);
        if (c.use_linguistic) {
            auto ling = detail::stat_names("ling", c.dft_k);
            names.insert(names.end(), ling.begin(), ling.end());
            names.emplace_back("cross.mean_product");
            names.emplace_back("cross.min_ratio");
        }
        break;
    }
    case FeatureKind::raw: {
        const std::size_t count = c.aggregation == Aggregation::concat ? 2 * c.pad_len : c.pad_len;
        const auto prefix = "raw." + std::string(to_string(c.aggregation)) + ".";
        for (std::size_t i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i));
        break;
    }
    case FeatureKind::predictors_only: break;
    }
    if (c.include_llava_pred) names.emplace_back("pred.llava");
    if (c.include_paligemma_pred) names.emplace_back("pred.paligemma");
    return names;
}

inline void check_exclusions(const FeatureConfig& c, const std::vector<std::string>& produced) {
    for (const auto& name : c.excluded_features)
        if (std::find(produced.begin(), produced.end(), name) == produced.end())
            throw InvalidArgument("excluded feature '" + name + "' is not produced by this feature config");
}

/// Names after exclusions, i.e. the columns build_features emits.
inline std::vector<std::string> feature_names(const FeatureConfig& c) {
    auto names = produced_feature_names(c);
    check_exclusions(c, names);
    std::erase_if(names, [&](const std::string& n) { return c.excluded_features.contains(n); });
    return names;
}

inline FeatureVector build_features(const ProbeRecord& r, const FeatureConfig& c) {
    detail::check_config(c);
    FeatureVector fv;
    switch (c.kind) {
    case FeatureKind::statistical:
        fv = stat_features(r.description_ntps, c.dft_k, "desc");
        if (c.use_linguistic) {
            if (r.linguistic_ntps.size() != r.description_ntps.size())
                throw ValidationError(r.record_id, "linguistic_ntps", "required and must match description length");
            fv.append(stat_features(r.linguistic_ntps, c.dft_k, "ling"));
            fv.append(cross_features(r.description_ntps, r.linguistic_ntps));
        }
        break;
    case FeatureKind::raw:
        if (r.description_ntps.size() > c.pad_len)
            throw ValidationError(r.record_id, "description_ntps",
                                  "length " + std::to_string(r.description_ntps.size()) + " exceeds pad_len " +
                                      std::to_string(c.pad_len));
        fv = aggregate_raw(r.description_ntps, r.linguistic_ntps, c.aggregation, c.pad_len);
        break;
    case FeatureKind::predictors_only: break;
    }
    if (c.include_llava_pred) {
        if (!r.llava_pred) throw ValidationError(r.record_id, "llava_pred", "required by the feature config but missing");
        fv.push("pred.llava", *r.llava_pred);
    }
    if (c.include_paligemma_pred) {
        if (!r.paligemma_pred)
            throw ValidationError(r.record_id, "paligemma_pred", "required by the feature config but missing");
        fv.push("pred.paligemma", *r.paligemma_pred);
    }
    if (!c.excluded_features.empty()) {
        check_exclusions(c, fv.names);
        FeatureVector kept;
        for (std::size_t i = 0; i < fv.size(); ++i)
            if (!c.excluded_features.contains(fv.names[i])) kept.push(fv.names[i], fv.values[i]);
        fv = std::move(kept);
    }
    for (std::size_t i = 0; i < fv.size(); ++i)
        if (!std::isfinite(fv.values[i]))
            throw ValidationError(r.record_id, fv.names[i], "feature value is not finite");
    return fv;
}

/// Row-major view of the dataset under one feature config: row i is record rows[i].
struct FeatureMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd values;
};

inline FeatureMatrix build_feature_matrix(const Dataset& d, std::span<const std::size_t> rows, const FeatureConfig& c) {
    FeatureMatrix m;
    m.names = feature_names(c);
    m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto fv = build_features(d[rows[i]], c);
        for (std::size_t j = 0; j < fv.size(); ++j)
            m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fv.values[j];
    }
    return m;
}

inline FeatureMatrix build_feature_matrix(const Dataset& d, const FeatureConfig& c) {
    std::vector<std::size_t> all(d.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return build_feature_matrix(d, all, c);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const FeatureConfig& c) {
    nlohmann::ordered_json j;
    j["kind"] = std::string(to_string(c.kind));
    if (c.kind == FeatureKind::raw) {
        j["aggregation"] = std::string(to_string(c.aggregation));
        j["pad_len"] = c.pad_len;
    }
    if (c.kind == FeatureKind::statistical) {
        j["use_linguistic"] = c.use_linguistic;
        j["dft_k"] = c.dft_k;
    }
    j["include_llava_pred"] = c.include_llava_pred;
    j["include_paligemma_pred"] = c.include_paligemma_pred;
    j["excluded_features"] = std::vector<std::string>(c.excluded_features.begin(), c.excluded_features.end());
    return j;
}

template <typename Json>
FeatureConfig feature_config_from_json(const Json& j) {
    static const std::set<std::string> known = {"kind",          "aggregation",        "pad_len",
                                                "use_linguistic", "dft_k",              "include_llava_pred",
                                                "include_paligemma_pred", "excluded_features"};
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw InvalidArgument("feature config: unknown key '" + key + "'");
    FeatureConfig c;
    c.kind = parse_feature_kind(j.at("kind").template get<std::string>());
    if (auto it = j.find("aggregation"); it != j.end()) c.aggregation = parse_aggregation(it->template get<std::string>());
    if (auto it = j.find("pad_len"); it != j.end()) c.pad_len = it->template get<std::size_t>();
    if (auto it = j.find("use_linguistic"); it != j.end()) c.use_linguistic = it->template get<bool>();
    if (auto it = j.find("dft_k"); it != j.end() && it->is_number_integer()) c.dft_k = it->template get<int>();
    if (auto it = j.find("include_llava_pred"); it != j.end()) c.include_llava_pred = it->template get<bool>();
    if (auto it = j.find("include_paligemma_pred"); it != j.end()) c.include_paligemma_pred = it->template get<bool>();
    if (auto it = j.find("excluded_features"); it != j.end())
        for (const auto& name : *it) c.excluded_features.insert(name.template get<std::string>());
    return c;
}

} // namespace ntpdetect
