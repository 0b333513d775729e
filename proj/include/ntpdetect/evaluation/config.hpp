#pragma once

// Declarative experiment configuration (JSON). A manifest written by a run
// embeds the fully resolved configuration under "resolved_config" and is itself
// accepted as a configuration, which is how runs are replayed.

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../error.hpp"
#include "../features.hpp"
#include "../learners/hyperparams.hpp"
#include "experiment.hpp"
#include "splits.hpp"

namespace ntpdetect {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

struct ExperimentConfig {
    std::filesystem::path dataset;
    std::filesystem::path output_dir = "results";
    SplitSpec splits;
    std::size_t threads = 1;
    bool matrix = false;   // append the full matrix cells
    bool raw_vlm = false;  // append the training-free predictor rows
    bool save_models = false;
    GridSet grids;
    std::vector<ExperimentCell> cells;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw InvalidArgument(where + ": unknown key '" + key + "'");
}

template <typename T>
void read_list(const nlohmann::json& j, const char* key, std::vector<T>& out) {
    if (auto it = j.find(key); it != j.end()) {
        out = it->get<std::vector<T>>();
        if (out.empty()) throw InvalidArgument(std::string("grid axis '") + key + "' is empty");
    }
}

inline GridSet grids_from_json(const nlohmann::json& j) {
    reject_unknown(j, {"logreg", "svm", "gbt"}, "grids");
    GridSet g;
    if (auto it = j.find("logreg"); it != j.end()) {
        reject_unknown(*it, {"C", "penalty"}, "grids.logreg");
        read_list(*it, "C", g.logreg.C);
        if (auto p = it->find("penalty"); p != it->end()) {
            g.logreg.penalty.clear();
            for (const auto& v : *p) {
                const auto s = v.get<std::string>();
                if (s != "l1" && s != "l2") throw InvalidArgument("unknown penalty '" + s + "'");
                g.logreg.penalty.push_back(s == "l1" ? Penalty::l1 : Penalty::l2);
            }
        }
    }
    if (auto it = j.find("svm"); it != j.end()) {
        reject_unknown(*it, {"C", "kernel", "gamma"}, "grids.svm");
        read_list(*it, "C", g.svm.C);
        if (auto k = it->find("kernel"); k != it->end()) {
            g.svm.kernel.clear();
            for (const auto& v : *k) {
                const auto s = v.get<std::string>();
                if (s != "linear" && s != "rbf") throw InvalidArgument("unknown kernel '" + s + "'");
                g.svm.kernel.push_back(s == "linear" ? Kernel::linear : Kernel::rbf);
            }
        }
        if (auto gm = it->find("gamma"); gm != it->end()) {
            g.svm.gamma.clear();
            for (const auto& v : *gm) g.svm.gamma.push_back(parse_gamma(v));
        }
    }
    if (auto it = j.find("gbt"); it != j.end()) {
        reject_unknown(*it,
                       {"max_depth", "learning_rate", "min_child_weight", "gamma", "subsample", "colsample", "alpha",
                        "lambda", "n_rounds"},
                       "grids.gbt");
        read_list(*it, "max_depth", g.gbt.max_depth);
        read_list(*it, "learning_rate", g.gbt.learning_rate);
        read_list(*it, "min_child_weight", g.gbt.min_child_weight);
        read_list(*it, "gamma", g.gbt.gamma);
        read_list(*it, "subsample", g.gbt.subsample);
        read_list(*it, "colsample", g.gbt.colsample);
        read_list(*it, "alpha", g.gbt.alpha);
        read_list(*it, "lambda", g.gbt.lambda);
        if (auto r = it->find("n_rounds"); r != it->end()) g.gbt.n_rounds = r->get<int>();
    }
    return g;
}

inline nlohmann::ordered_json grids_to_json(const GridSet& g) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json pen = nlohmann::ordered_json::array();
    for (auto p : g.logreg.penalty) pen.push_back(p == Penalty::l1 ? "l1" : "l2");
    j["logreg"] = {{"C", g.logreg.C}, {"penalty", pen}};
    nlohmann::ordered_json kernels = nlohmann::ordered_json::array();
    for (auto k : g.svm.kernel) kernels.push_back(k == Kernel::linear ? "linear" : "rbf");
    nlohmann::ordered_json gammas = nlohmann::ordered_json::array();
    for (const auto& gm : g.svm.gamma) gammas.push_back(gamma_to_json(gm));
    j["svm"] = {{"C", g.svm.C}, {"kernel", kernels}, {"gamma", gammas}};
    j["gbt"] = {{"max_depth", g.gbt.max_depth},   {"learning_rate", g.gbt.learning_rate},
                {"min_child_weight", g.gbt.min_child_weight}, {"gamma", g.gbt.gamma},
                {"subsample", g.gbt.subsample},   {"colsample", g.gbt.colsample},
                {"alpha", g.gbt.alpha},           {"lambda", g.gbt.lambda},
                {"n_rounds", g.gbt.n_rounds}};
    return j;
}

inline ExperimentCell cell_from_json(const nlohmann::json& j, std::size_t index) {
    reject_unknown(j, {"name", "learner", "features"}, "cells[" + std::to_string(index) + "]");
    ExperimentCell c;
    c.learner = parse_learner_kind(j.at("learner").get<std::string>());
    const auto& f = j.at("features");
    c.features = feature_config_from_json(f);
    if (auto k = f.find("dft_k"); k != f.end()) {
        if (k->is_array()) c.dft_k_grid = k->get<std::vector<int>>();
        else c.dft_k_grid = {k->get<int>()};
        if (c.dft_k_grid.empty()) throw InvalidArgument("dft_k list is empty");
        for (int v : c.dft_k_grid)
            if (v < 0 || v > kMaxDftK) throw InvalidArgument("dft_k must lie in [0, 5]");
        c.features.dft_k = c.dft_k_grid.front();
    }
    c.name = j.contains("name") ? j.at("name").get<std::string>()
                                : "cell" + std::to_string(index) + "." + std::string(to_string(c.learner));
    return c;
}

inline nlohmann::ordered_json cell_to_json(const ExperimentCell& c) {
    auto f = to_json(c.features);
    if (c.features.kind == FeatureKind::statistical) f["dft_k"] = c.dft_k_grid;
    return {{"name", c.name}, {"learner", std::string(to_string(c.learner))}, {"features", f}};
}

} // namespace detail

/// Relative dataset/output paths resolve against `base_dir`.
inline ExperimentConfig experiment_config_from_json(nlohmann::json j, const std::filesystem::path& base_dir = {}) {
    if (j.contains("resolved_config")) j = j.at("resolved_config");
    detail::reject_unknown(j,
                           {"schema_version", "dataset", "output_dir", "seed", "threads", "splits", "matrix",
                            "raw_vlm", "save_models", "grids", "cells"},
                           "config");
    if (j.value("schema_version", kConfigSchemaVersion) != kConfigSchemaVersion)
        throw InvalidArgument("config: unsupported schema_version");
    ExperimentConfig c;
    auto resolve = [&](const std::filesystem::path& p) { return p.is_relative() && !base_dir.empty() ? base_dir / p : p; };
    if (auto it = j.find("dataset"); it != j.end()) c.dataset = resolve(it->get<std::string>());
    if (auto it = j.find("output_dir"); it != j.end()) c.output_dir = resolve(it->get<std::string>());
    if (auto it = j.find("threads"); it != j.end()) c.threads = it->get<std::size_t>();
    if (auto it = j.find("splits"); it != j.end()) {
        detail::reject_unknown(*it, {"train_n", "val_n", "test_n", "n_splits", "base_seed", "group_by_image"}, "splits");
        c.splits.train_n = it->value("train_n", c.splits.train_n);
        c.splits.val_n = it->value("val_n", c.splits.val_n);
        c.splits.test_n = it->value("test_n", c.splits.test_n);
        c.splits.n_splits = it->value("n_splits", c.splits.n_splits);
        c.splits.base_seed = it->value("base_seed", c.splits.base_seed);
        c.splits.group_by_image = it->value("group_by_image", c.splits.group_by_image);
    }
    if (auto it = j.find("seed"); it != j.end()) c.splits.base_seed = it->get<std::uint64_t>();
    c.matrix = j.value("matrix", false);
    c.raw_vlm = j.value("raw_vlm", false);
    c.save_models = j.value("save_models", false);
    if (auto it = j.find("grids"); it != j.end()) c.grids = detail::grids_from_json(*it);
    if (auto it = j.find("cells"); it != j.end()) {
        std::set<std::string> names;
        for (std::size_t i = 0; i < it->size(); ++i) {
            auto cell = detail::cell_from_json((*it)[i], i);
            if (!names.insert(cell.name).second) throw InvalidArgument("config: duplicate cell name '" + cell.name + "'");
            c.cells.push_back(std::move(cell));
        }
    }
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config file '" + path.string() + "'");
    try {
        // Comments are allowed so configs can be annotated.
        return experiment_config_from_json(nlohmann::json::parse(in, nullptr, true, true), path.parent_path());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("config file '" + path.string() + "': " + e.what());
    }
}

/// Fully resolved form: every default spelled out, `matrix` already expanded
/// into cells (so the flag is written as false).
inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["dataset"] = c.dataset.string();
    j["output_dir"] = c.output_dir.string();
    j["threads"] = c.threads;
    j["splits"] = to_json(c.splits);
    j["matrix"] = c.matrix;
    j["raw_vlm"] = c.raw_vlm;
    j["save_models"] = c.save_models;
    j["grids"] = detail::grids_to_json(c.grids);
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& cell : c.cells) cells.push_back(detail::cell_to_json(cell));
    j["cells"] = cells;
    return j;
}

} // namespace ntpdetect
