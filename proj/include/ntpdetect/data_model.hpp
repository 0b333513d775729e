#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"

namespace ntpdetect {

/// Contiguous bool storage; std::vector<bool> is bit-packed and cannot be
/// viewed as std::span<const bool>.
class LabelVector {
public:
    LabelVector() = default;
    explicit LabelVector(std::size_t n) : size_(n), data_(std::make_unique<bool[]>(n)) {}
    LabelVector(std::initializer_list<bool> values) : LabelVector(values.size()) {
        std::copy(values.begin(), values.end(), data_.get());
    }
    LabelVector(const LabelVector& other) : LabelVector(other.size_) {
        std::copy(other.begin(), other.end(), data_.get());
    }
    LabelVector(LabelVector&&) noexcept = default;
    LabelVector& operator=(const LabelVector& other) {
        if (this != &other) *this = LabelVector(other);
        return *this;
    }
    LabelVector& operator=(LabelVector&&) noexcept = default;

    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] bool* data() noexcept { return data_.get(); }
    [[nodiscard]] const bool* data() const noexcept { return data_.get(); }
    bool& operator[](std::size_t i) { return data_[i]; }
    bool operator[](std::size_t i) const { return data_[i]; }
    [[nodiscard]] const bool* begin() const noexcept { return data_.get(); }
    [[nodiscard]] const bool* end() const noexcept { return data_.get() + size_; }
    operator std::span<const bool>() const noexcept { return {data_.get(), size_}; }

private:
    std::size_t size_ = 0;
    std::unique_ptr<bool[]> data_;
};

enum class GeneratorModel { llava_1_5, llava_1_6 };

inline std::string_view to_string(GeneratorModel m) {
    return m == GeneratorModel::llava_1_5 ? "llava-1.5" : "llava-1.6";
}

inline std::optional<GeneratorModel> parse_generator_model(std::string_view s) {
    if (s == "llava-1.5") return GeneratorModel::llava_1_5;
    if (s == "llava-1.6") return GeneratorModel::llava_1_6;
    return std::nullopt;
}

/// One annotated probe. `label == true` means the probe contains a hallucination.
struct ProbeRecord {
    std::string record_id;
    std::string image_id;
    GeneratorModel generator_model = GeneratorModel::llava_1_5;
    std::string probe_text;
    std::string context_span;
    bool label = false;
    std::vector<double> description_ntps;
    std::vector<double> linguistic_ntps;
    /// P(Yes)/(P(Yes)+P(No)) that the probe is correct, from each predictor VLM.
    std::optional<double> llava_pred;
    std::optional<double> paligemma_pred;

    bool operator==(const ProbeRecord&) const = default;
};

/// Throws ValidationError on the first broken invariant.
inline void validate(const ProbeRecord& r) {
    if (r.record_id.empty()) throw ValidationError(r.record_id, "record_id", "must be non-empty");
    if (r.description_ntps.empty())
        throw ValidationError(r.record_id, "description_ntps", "must contain at least one value");
    if (r.linguistic_ntps.size() != r.description_ntps.size())
        throw ValidationError(r.record_id, "linguistic_ntps",
                              "length " + std::to_string(r.linguistic_ntps.size()) +
                                  " differs from description_ntps length " +
                                  std::to_string(r.description_ntps.size()));
    auto check_ntps = [&](const std::vector<double>& seq, const char* field) {
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const double v = seq[i];
            if (!(v > 0.0 && v <= 1.0))
                throw ValidationError(r.record_id, field,
                                      "value at position " + std::to_string(i) + " is " +
                                          std::to_string(v) + ", outside (0, 1]");
        }
    };
    check_ntps(r.description_ntps, "description_ntps");
    check_ntps(r.linguistic_ntps, "linguistic_ntps");
    auto check_pred = [&](const std::optional<double>& p, const char* field) {
        if (p && !(*p >= 0.0 && *p <= 1.0))
            throw ValidationError(r.record_id, field, "must lie in [0, 1]");
    };
    check_pred(r.llava_pred, "llava_pred");
    check_pred(r.paligemma_pred, "paligemma_pred");
}

/// Immutable, validated collection of probe records.
class Dataset {
public:
    Dataset() = default;

    explicit Dataset(std::vector<ProbeRecord> records) : records_(std::move(records)) {
        std::unordered_set<std::string> seen;
        for (const auto& r : records_) {
            validate(r);
            if (!seen.insert(r.record_id).second)
                throw ValidationError(r.record_id, "record_id", "duplicate record_id");
            max_seq_len_ = std::max(max_seq_len_, r.description_ntps.size());
        }
    }

    [[nodiscard]] const std::vector<ProbeRecord>& records() const noexcept { return records_; }
    [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
    [[nodiscard]] bool empty() const noexcept { return records_.empty(); }
    [[nodiscard]] std::size_t max_seq_len() const noexcept { return max_seq_len_; }
    [[nodiscard]] const ProbeRecord& operator[](std::size_t i) const { return records_[i]; }

    [[nodiscard]] bool has_llava_pred() const {
        return std::all_of(records_.begin(), records_.end(),
                           [](const ProbeRecord& r) { return r.llava_pred.has_value(); });
    }
    [[nodiscard]] bool has_paligemma_pred() const {
        return std::all_of(records_.begin(), records_.end(),
                           [](const ProbeRecord& r) { return r.paligemma_pred.has_value(); });
    }

    [[nodiscard]] LabelVector labels() const {
        LabelVector out(records_.size());
        for (std::size_t i = 0; i < records_.size(); ++i) out[i] = records_[i].label;
        return out;
    }

    bool operator==(const Dataset&) const = default;

private:
    std::vector<ProbeRecord> records_;
    std::size_t max_seq_len_ = 0;
};

// ---------------------------------------------------------------------------
// JSONL encoding
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const ProbeRecord& r) {
    nlohmann::ordered_json j;
    j["record_id"] = r.record_id;
    j["image_id"] = r.image_id;
    j["generator_model"] = std::string(to_string(r.generator_model));
    j["probe_text"] = r.probe_text;
    j["context_span"] = r.context_span;
    j["label"] = r.label;
    j["description_ntps"] = r.description_ntps;
    j["linguistic_ntps"] = r.linguistic_ntps;
    j["llava_pred"] = r.llava_pred ? nlohmann::ordered_json(*r.llava_pred) : nlohmann::ordered_json(nullptr);
    j["paligemma_pred"] =
        r.paligemma_pred ? nlohmann::ordered_json(*r.paligemma_pred) : nlohmann::ordered_json(nullptr);
    return j;
}

namespace detail {

template <typename Json>
const Json& require_field(const Json& j, const char* name, std::size_t line) {
    auto it = j.find(name);
    if (it == j.end()) throw ParseError(line, std::string("missing field '") + name + "'");
    return *it;
}

template <typename Json>
std::string string_field(const Json& j, const char* name, std::size_t line) {
    const auto& v = require_field(j, name, line);
    if (!v.is_string()) throw ParseError(line, std::string("field '") + name + "' must be a string");
    return v.template get<std::string>();
}

template <typename Json>
std::vector<double> ntp_field(const Json& j, const char* name, std::size_t line) {
    const auto& v = require_field(j, name, line);
    if (!v.is_array()) throw ParseError(line, std::string("field '") + name + "' must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number())
            throw ParseError(line, std::string("field '") + name + "' must contain only numbers");
        out.push_back(x.template get<double>());
    }
    return out;
}

template <typename Json>
std::optional<double> pred_field(const Json& j, const char* name, std::size_t line) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw ParseError(line, std::string("field '") + name + "' must be a number or null");
    return it->template get<double>();
}

} // namespace detail

/// Decodes one JSON object. Schema (type) problems raise ParseError; invariant
/// checks are left to validate().
inline ProbeRecord record_from_json(const nlohmann::json& j, std::size_t line = 0) {
    if (!j.is_object()) throw ParseError(line, "expected a JSON object");
    static const std::unordered_set<std::string> known = {
        "record_id",  "image_id",        "generator_model", "probe_text", "context_span",
        "label",      "description_ntps", "linguistic_ntps", "llava_pred", "paligemma_pred"};
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw ParseError(line, "unknown field '" + key + "'");

    ProbeRecord r;
    r.record_id = detail::string_field(j, "record_id", line);
    r.image_id = detail::string_field(j, "image_id", line);
    const auto gm = detail::string_field(j, "generator_model", line);
    const auto parsed = parse_generator_model(gm);
    if (!parsed) throw ParseError(line, "unknown generator_model '" + gm + "'");
    r.generator_model = *parsed;
    r.probe_text = detail::string_field(j, "probe_text", line);
    r.context_span = detail::string_field(j, "context_span", line);
    const auto& label = detail::require_field(j, "label", line);
    if (!label.is_boolean()) throw ParseError(line, "field 'label' must be a boolean");
    r.label = label.get<bool>();
    r.description_ntps = detail::ntp_field(j, "description_ntps", line);
    r.linguistic_ntps = detail::ntp_field(j, "linguistic_ntps", line);
    r.llava_pred = detail::pred_field(j, "llava_pred", line);
    r.paligemma_pred = detail::pred_field(j, "paligemma_pred", line);
    return r;
}

enum class DatasetFormat { jsonl };

/// Parses JSONL text. Blank lines are skipped.
inline Dataset parse_dataset(std::istream& in) {
    std::vector<ProbeRecord> records;
    std::unordered_set<std::string> seen;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line, e.what());
        }
        auto r = record_from_json(j, line);
        validate(r);
        if (!seen.insert(r.record_id).second)
            throw ValidationError(r.record_id, "record_id", "duplicate record_id (line " + std::to_string(line) + ")");
        records.push_back(std::move(r));
    }
    if (records.empty()) throw InvalidArgument("dataset contains no records");
    return Dataset(std::move(records));
}

inline Dataset load_dataset(const std::filesystem::path& path, DatasetFormat = DatasetFormat::jsonl) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open dataset file '" + path.string() + "'");
    return parse_dataset(in);
}

inline void write_dataset(std::ostream& out, const Dataset& d) {
    for (const auto& r : d.records()) out << to_json(r).dump() << '\n';
}

inline std::string serialize_dataset(const Dataset& d) {
    std::ostringstream out;
    write_dataset(out, d);
    return out.str();
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write dataset file '" + path.string() + "'");
    write_dataset(out, d);
}

} // namespace ntpdetect
