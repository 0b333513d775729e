#pragma once

// Adapter from the publicly released description-level table (one row per
// generated description, four probes per row) to ProbeRecord JSONL.
//
// The source directory holds .json or .jsonl files. A .json file may be an array
// of row objects, an object wrapping such an array under "data"/"rows"/"train",
// or a columnar object (column name -> array of values). Column names are matched
// after lower-casing and dropping non-alphanumerics, so "LLaVA Pred (1)",
// "llava_pred_1" and "LLaVAPred1" are the same column.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "data_model.hpp"
#include "error.hpp"

namespace ntpdetect {

/// What a true value in the published Label(i) column means.
enum class LabelSemantics { probe_is_correct, probe_is_hallucinated };

struct ConvertOptions {
    LabelSemantics label_semantics = LabelSemantics::probe_is_correct;
    int probes_per_row = 4;
    GeneratorModel default_generator = GeneratorModel::llava_1_5;
};

struct ConvertResult {
    Dataset dataset;
    std::size_t rows = 0;
    std::vector<std::string> notes;
};

namespace detail {

inline std::string normalize_column(std::string_view name) {
    std::string out;
    for (char c : name)
        if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

using Row = std::map<std::string, nlohmann::json>;

inline Row normalize_row(const nlohmann::json& obj) {
    Row row;
    for (const auto& [k, v] : obj.items()) row[normalize_column(k)] = v;
    return row;
}

inline std::vector<Row> rows_from_json(const nlohmann::json& j, const std::string& file) {
    std::vector<Row> rows;
    if (j.is_array()) {
        for (const auto& item : j) {
            if (!item.is_object()) throw Error(file + ": array element is not an object");
            rows.push_back(normalize_row(item));
        }
        return rows;
    }
    if (!j.is_object()) throw Error(file + ": expected an array or object at top level");
    for (const char* key : {"data", "rows", "train"})
        if (auto it = j.find(key); it != j.end() && it->is_array()) return rows_from_json(*it, file);

    // Columnar: every value is an array of equal length (or a {"0": v, ...} map).
    std::size_t n = 0;
    bool first = true;
    std::map<std::string, std::vector<nlohmann::json>> columns;
    for (const auto& [k, v] : j.items()) {
        std::vector<nlohmann::json> values;
        if (v.is_array()) {
            values.assign(v.begin(), v.end());
        } else if (v.is_object()) {
            std::vector<std::pair<long, nlohmann::json>> indexed;
            for (const auto& [ik, iv] : v.items()) indexed.emplace_back(std::stol(ik), iv);
            std::sort(indexed.begin(), indexed.end(), [](auto& a, auto& b) { return a.first < b.first; });
            for (auto& [_, iv] : indexed) values.push_back(iv);
        } else {
            throw Error(file + ": column '" + k + "' is not an array");
        }
        if (first) n = values.size();
        else if (values.size() != n) throw Error(file + ": column '" + k + "' has a different length");
        first = false;
        columns[normalize_column(k)] = std::move(values);
    }
    rows.resize(n);
    for (auto& [name, values] : columns)
        for (std::size_t i = 0; i < n; ++i) rows[i][name] = values[i];
    return rows;
}

inline std::vector<Row> read_rows(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    const auto ext = file.extension().string();
    try {
        if (ext == ".jsonl") {
            std::vector<Row> rows;
            std::string line;
            while (std::getline(in, line)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                const auto j = nlohmann::json::parse(line);
                if (!j.is_object()) throw Error(file.string() + ": line is not an object");
                rows.push_back(normalize_row(j));
            }
            return rows;
        }
        return rows_from_json(nlohmann::json::parse(in), file.string());
    } catch (const nlohmann::json::exception& e) {
        throw Error(file.string() + ": " + e.what());
    }
}

/// Values stored as JSON text inside a string cell are decoded.
inline nlohmann::json unwrap(const nlohmann::json& v) {
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        const auto first = s.find_first_not_of(" \t");
        if (first != std::string::npos && (s[first] == '[' || s[first] == '{')) {
            try {
                return nlohmann::json::parse(s);
            } catch (const nlohmann::json::exception&) {
            }
        }
    }
    return v;
}

inline std::optional<double> as_number(const nlohmann::json& raw) {
    const auto v = unwrap(raw);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        try {
            std::size_t used = 0;
            const auto& s = v.get_ref<const std::string&>();
            const double d = std::stod(s, &used);
            if (used == s.size()) return d;
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

/// Accepts a list of numbers, [token, prob] pairs, or {"prob": x} objects.
inline std::optional<std::vector<double>> as_probability_list(const nlohmann::json& raw) {
    const auto v = unwrap(raw);
    if (!v.is_array()) return std::nullopt;
    std::vector<double> out;
    for (const auto& item : v) {
        if (item.is_number()) {
            out.push_back(item.get<double>());
        } else if (item.is_array() && item.size() == 2 && item[1].is_number()) {
            out.push_back(item[1].get<double>());
        } else if (item.is_object()) {
            bool found = false;
            for (const char* key : {"prob", "probability", "p"}) {
                if (auto it = item.find(key); it != item.end() && it->is_number()) {
                    out.push_back(it->get<double>());
                    found = true;
                    break;
                }
            }
            if (!found) return std::nullopt;
        } else {
            return std::nullopt;
        }
    }
    return out;
}

inline const nlohmann::json* find_column(const Row& row, std::initializer_list<const char*> names) {
    for (const char* n : names)
        if (auto it = row.find(n); it != row.end()) return &it->second;
    return nullptr;
}

inline std::optional<bool> as_bool(const nlohmann::json& raw) {
    const auto v = unwrap(raw);
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number_integer()) {
        const auto i = v.get<long>();
        if (i == 0 || i == 1) return i == 1;
    }
    if (v.is_string()) {
        auto s = normalize_column(v.get<std::string>());
        if (s == "true" || s == "yes" || s == "1") return true;
        if (s == "false" || s == "no" || s == "0") return false;
    }
    return std::nullopt;
}

inline std::string as_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    return v.dump();
}

/// NTPs for probe `i` (1-based): a per-probe column wins; otherwise a list of
/// per-probe lists; otherwise the whole description sequence.
inline std::vector<double> probe_ntps(const Row& row, const std::string& base, int i, std::size_t row_index,
                                      std::vector<std::string>& notes, bool& whole_used) {
    if (auto it = row.find(base + std::to_string(i)); it != row.end()) {
        auto list = as_probability_list(it->second);
        if (!list) throw Error("row " + std::to_string(row_index) + ": column '" + it->first + "' is not a probability list");
        return *list;
    }
    auto it = row.find(base);
    if (it == row.end()) throw Error("row " + std::to_string(row_index) + ": missing column '" + base + "'");
    const auto v = unwrap(it->second);
    if (v.is_array() && !v.empty() && v[0].is_array() && !(v[0].size() == 2 && v[0][1].is_number() && !v[0][0].is_number())) {
        if (static_cast<int>(v.size()) < i)
            throw Error("row " + std::to_string(row_index) + ": column '" + base + "' has fewer than " + std::to_string(i) + " probe lists");
        auto list = as_probability_list(v[i - 1]);
        if (!list) throw Error("row " + std::to_string(row_index) + ": column '" + base + "' entry is not a probability list");
        return *list;
    }
    auto list = as_probability_list(v);
    if (!list) throw Error("row " + std::to_string(row_index) + ": column '" + base + "' is not a probability list");
    if (!whole_used) {
        notes.push_back("column '" + base + "' holds one sequence per description; each probe uses the whole sequence");
        whole_used = true;
    }
    return *list;
}

} // namespace detail

inline ConvertResult convert_published(const std::filesystem::path& source_dir, const ConvertOptions& opt = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(source_dir)) throw Error("source '" + source_dir.string() + "' is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(source_dir)) {
        const auto ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".json" || ext == ".jsonl")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error("source '" + source_dir.string() + "' contains no .json or .jsonl files");

    ConvertResult result;
    std::vector<ProbeRecord> records;
    bool whole_desc = false, whole_ling = false;
    std::size_t row_index = 0;
    for (const auto& file : files) {
        for (const auto& row : detail::read_rows(file)) {
            const auto* image_col = detail::find_column(row, {"imageid", "image", "imagename", "imagepath", "imagefile", "id"});
            std::string image_id = image_col ? detail::as_text(*image_col) : "row-" + std::to_string(row_index);
            if (image_col && (image_col->is_object() || image_col->is_array())) image_id = "row-" + std::to_string(row_index);

            GeneratorModel generator = opt.default_generator;
            if (const auto* m = detail::find_column(row, {"generatormodel", "model", "generator", "vlm"})) {
                const auto text = detail::as_text(*m);
                if (text.find("1.6") != std::string::npos) generator = GeneratorModel::llava_1_6;
                else if (text.find("1.5") != std::string::npos) generator = GeneratorModel::llava_1_5;
            }

            for (int i = 1; i <= opt.probes_per_row; ++i) {
                const auto suffix = std::to_string(i);
                auto need = [&](const std::string& name) -> const nlohmann::json& {
                    auto it = row.find(name);
                    if (it == row.end())
                        throw Error("row " + std::to_string(row_index) + ": missing column '" + name + "'");
                    return it->second;
                };
                ProbeRecord r;
                r.image_id = image_id;
                r.record_id = image_id + "#" + suffix;
                r.generator_model = generator;
                r.probe_text = detail::as_text(need("probe" + suffix));
                if (auto it = row.find("context" + suffix); it != row.end()) r.context_span = detail::as_text(it->second);
                else throw Error("row " + std::to_string(row_index) + ": missing column 'context" + suffix + "'");
                const auto label = detail::as_bool(need("label" + suffix));
                if (!label) throw Error("row " + std::to_string(row_index) + ": column 'label" + suffix + "' is not boolean");
                r.label = opt.label_semantics == LabelSemantics::probe_is_correct ? !*label : *label;
                r.description_ntps = detail::probe_ntps(row, "descriptionntps", i, row_index, result.notes, whole_desc);
                r.linguistic_ntps = detail::probe_ntps(row, "linguisticntps", i, row_index, result.notes, whole_ling);
                if (r.description_ntps.size() != r.linguistic_ntps.size())
                    throw Error("row " + std::to_string(row_index) + ", probe " + suffix + ": description NTPs (" +
                                std::to_string(r.description_ntps.size()) + ") and linguistic NTPs (" +
                                std::to_string(r.linguistic_ntps.size()) + ") differ in length");
                r.llava_pred = detail::as_number(need("llavapred" + suffix));
                r.paligemma_pred = detail::as_number(need("paligemmapred" + suffix));
                records.push_back(std::move(r));
            }
            ++row_index;
        }
    }
    if (records.empty()) throw Error("source '" + source_dir.string() + "' contains no rows");
    result.rows = row_index;
    result.dataset = Dataset(std::move(records));
    return result;
}

/// Converts and writes JSONL. Nothing is written when conversion fails.
inline ConvertResult convert_published_to(const std::filesystem::path& source_dir, const std::filesystem::path& out,
                                          const ConvertOptions& opt = {}) {
    auto result = convert_published(source_dir, opt);
    save_dataset(out, result.dataset);
    return result;
}

} // namespace ntpdetect
