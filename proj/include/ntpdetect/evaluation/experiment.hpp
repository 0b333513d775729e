#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "../data_model.hpp"
#include "../error.hpp"
#include "../features.hpp"
#include "../learners/hyperparams.hpp"
#include "../learners/model.hpp"
#include "auc.hpp"
#include "parallel.hpp"
#include "splits.hpp"

namespace ntpdetect {

/// One row of the experiment matrix: a feature config and a learner. For
/// statistical features `dft_k_grid` lists the DFT sizes searched jointly with
/// the learner's hyperparameters; otherwise it is ignored.
struct ExperimentCell {
    std::string name;
    LearnerKind learner = LearnerKind::logreg;
    FeatureConfig features;
    std::vector<int> dft_k_grid{0, 1, 2, 3, 4, 5};

    [[nodiscard]] std::vector<int> effective_dft_grid() const {
        if (features.kind != FeatureKind::statistical) return {0};
        if (dft_k_grid.empty()) return {features.dft_k};
        return dft_k_grid;
    }
};

struct ExperimentResult {
    std::string name;
    std::string learner; // "logreg" | "svm" | "gbt" | "none" (training-free predictor score)
    FeatureConfig features;
    std::vector<double> test_auc;
    std::vector<double> val_auc;
    std::vector<std::string> chosen_hyperparams;
    std::vector<int> chosen_dft_k;
    double mean_auc = 0.0;
    double ci_half_width = 0.0;
};

/// mean and 1.96 * sample std / sqrt(n).
inline std::pair<double, double> mean_and_ci(const std::vector<double>& values) {
    const double n = static_cast<double>(values.size());
    if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

struct RunOptions {
    GridSet grids;
    std::size_t threads = 1;
};

/// Per-split feature matrices for one dft_k.
struct PreparedSplit {
    FeatureConfig config;
    std::vector<std::string> names;
    Eigen::MatrixXd train, val, test;
    LabelVector y_train, y_val, y_test;
};

/// The cell's config at a given dft_k. Exclusions naming features that only
/// exist at larger k are dropped.
inline FeatureConfig config_at(const ExperimentCell& cell, int k) {
    FeatureConfig c = cell.features;
    c.dft_k = k;
    const auto produced = produced_feature_names(c);
    std::erase_if(c.excluded_features, [&](const std::string& n) {
        return std::find(produced.begin(), produced.end(), n) == produced.end();
    });
    return c;
}

inline LabelVector gather_labels(const Dataset& d, std::span<const std::size_t> rows) {
    LabelVector y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = d[rows[i]].label;
    return y;
}

inline PreparedSplit prepare_split(const Dataset& d, const Split& s, const FeatureConfig& c) {
    PreparedSplit p;
    p.config = c;
    auto train = build_feature_matrix(d, s.train, c);
    p.names = std::move(train.names);
    p.train = std::move(train.values);
    p.val = build_feature_matrix(d, s.val, c).values;
    p.test = build_feature_matrix(d, s.test, c).values;
    p.y_train = gather_labels(d, s.train);
    p.y_val = gather_labels(d, s.val);
    p.y_test = gather_labels(d, s.test);
    return p;
}

struct GridSearchResult {
    std::size_t best_index = 0;   // into the flattened (dft_k outer, hyperparams inner) grid
    int dft_k = 0;
    Hyperparams best;
    double best_val_auc = -1.0;
    std::vector<double> val_aucs; // NaN where training failed
    std::optional<TrainedModel> model;
    std::size_t prepared_index = 0;
};

/// Trains every (dft_k, hyperparams) point on train, scores on val, and keeps the
/// first maximizer in grid order. Points that fail to train are skipped.
inline GridSearchResult grid_search(const std::vector<PreparedSplit>& prepared, const std::vector<Hyperparams>& grid,
                                    std::uint64_t seed) {
    if (grid.empty() || prepared.empty()) throw InvalidArgument("grid_search: empty grid");
    GridSearchResult res;
    std::string last_error;
    for (std::size_t pi = 0; pi < prepared.size(); ++pi) {
        const auto& p = prepared[pi];
        // Kernel matrices depend only on (kernel, gamma); share them across C.
        std::map<std::pair<int, double>, Eigen::MatrixXd> grams;
        std::optional<Eigen::MatrixXd> standardized;
        for (std::size_t hi = 0; hi < grid.size(); ++hi) {
            const auto& hp = grid[hi];
            double val = std::numeric_limits<double>::quiet_NaN();
            try {
                const Eigen::MatrixXd* gram = nullptr;
                if (const auto* svm = std::get_if<SvmParams>(&hp)) {
                    if (!standardized) standardized = standardize_fit(p.train).apply(p.train);
                    const double gamma = svm->kernel == Kernel::rbf ? resolve_gamma(svm->gamma, *standardized) : 0.0;
                    auto key = std::pair{static_cast<int>(svm->kernel), gamma};
                    auto it = grams.find(key);
                    if (it == grams.end())
                        it = grams.emplace(key, kernel_matrix(*standardized, *standardized, svm->kernel, gamma)).first;
                    gram = &it->second;
                }
                auto model = train_model(p.train, p.y_train, hp, seed, gram);
                const Eigen::VectorXd scores = predict_scores(model, p.val);
                val = auc_roc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), p.y_val);
                if (val > res.best_val_auc) {
                    res.best_val_auc = val;
                    res.best_index = res.val_aucs.size();
                    res.best = hp;
                    res.dft_k = p.config.dft_k;
                    res.prepared_index = pi;
                    model.features = p.config;
                    model.feature_names = p.names;
                    res.model = std::move(model);
                }
            } catch (const TrainingError& e) {
                last_error = e.what();
            }
            res.val_aucs.push_back(val);
        }
    }
    if (!res.model) throw TrainingError("grid_search: every grid point failed to train (" + last_error + ")");
    return res;
}

struct SplitOutcome {
    double test_auc = 0.0;
    double val_auc = 0.0;
    std::string hyperparams;
    int dft_k = 0;
    std::optional<TrainedModel> model;
};

inline SplitOutcome run_split(const Dataset& d, const Split& split, std::uint64_t seed, const ExperimentCell& cell,
                              const std::vector<Hyperparams>& grid, bool keep_model = false) {
    std::vector<PreparedSplit> prepared;
    for (int k : cell.effective_dft_grid()) prepared.push_back(prepare_split(d, split, config_at(cell, k)));
    auto gs = grid_search(prepared, grid, seed);
    const auto& p = prepared[gs.prepared_index];
    const Eigen::VectorXd scores = predict_scores(*gs.model, p.test);
    SplitOutcome out;
    out.test_auc = auc_roc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), p.y_test);
    out.val_auc = gs.best_val_auc;
    out.hyperparams = describe(gs.best);
    out.dft_k = gs.dft_k;
    if (keep_model) out.model = std::move(gs.model);
    return out;
}

inline void check_requirements(const Dataset& d, const FeatureConfig& c) {
    if (c.include_llava_pred && !d.has_llava_pred())
        throw InvalidArgument("feature config needs llava_pred but some records lack it");
    if (c.include_paligemma_pred && !d.has_paligemma_pred())
        throw InvalidArgument("feature config needs paligemma_pred but some records lack it");
    if (c.kind == FeatureKind::raw && d.max_seq_len() > c.pad_len)
        throw InvalidArgument("raw pad_len " + std::to_string(c.pad_len) + " is shorter than the longest sequence (" +
                              std::to_string(d.max_seq_len()) + ")");
}

inline ExperimentResult finalize(ExperimentResult r) {
    auto [mean, ci] = mean_and_ci(r.test_auc);
    r.mean_auc = mean;
    r.ci_half_width = ci;
    return r;
}

/// Per split: grid search on train/val, test AUC of the chosen point.
/// `models`, when given, receives the chosen model of every split.
inline ExperimentResult run_experiment(const Dataset& d, const SplitSpec& spec, const std::vector<Split>& splits,
                                       const ExperimentCell& cell, const RunOptions& opt = {},
                                       std::vector<TrainedModel>* models = nullptr) {
    check_requirements(d, cell.features);
    {
        const auto ks = cell.effective_dft_grid();
        FeatureConfig widest = cell.features;
        widest.dft_k = *std::max_element(ks.begin(), ks.end());
        check_exclusions(widest, produced_feature_names(widest));
    }
    const auto grid = expand(opt.grids, cell.learner);
    std::vector<SplitOutcome> outcomes(splits.size());
    parallel_for(splits.size(), opt.threads, [&](std::size_t i) {
        try {
            outcomes[i] = run_split(d, splits[i], split_seed(spec, i), cell, grid, models != nullptr);
        } catch (const Error& e) {
            throw Error("cell '" + cell.name + "', split " + std::to_string(i) + ": " + e.what());
        }
    });
    ExperimentResult r;
    r.name = cell.name;
    r.learner = std::string(to_string(cell.learner));
    r.features = cell.features;
    for (auto& o : outcomes) {
        r.test_auc.push_back(o.test_auc);
        r.val_auc.push_back(o.val_auc);
        r.chosen_hyperparams.push_back(o.hyperparams);
        r.chosen_dft_k.push_back(o.dft_k);
        if (models) models->push_back(std::move(*o.model));
    }
    return finalize(std::move(r));
}

inline ExperimentResult run_experiment(const Dataset& d, const SplitSpec& spec, const ExperimentCell& cell,
                                       const RunOptions& opt = {}) {
    return run_experiment(d, spec, make_splits(d, spec), cell, opt);
}

enum class Predictor { llava, paligemma };

/// Training-free baseline: AUC of 1 - P(correct) from one predictor VLM on each
/// split's test partition.
inline ExperimentResult run_raw_predictor(const Dataset& d, const std::vector<Split>& splits, Predictor which) {
    const bool llava = which == Predictor::llava;
    if (llava ? !d.has_llava_pred() : !d.has_paligemma_pred())
        throw InvalidArgument(std::string("raw predictor row needs ") + (llava ? "llava_pred" : "paligemma_pred") +
                              " on every record");
    ExperimentResult r;
    r.name = llava ? "vlm.llava" : "vlm.paligemma";
    r.learner = "none";
    r.features.kind = FeatureKind::predictors_only;
    r.features.include_llava_pred = llava;
    r.features.include_paligemma_pred = !llava;
    auto score = [&](std::size_t i) { return 1.0 - *(llava ? d[i].llava_pred : d[i].paligemma_pred); };
    auto auc_on = [&](const std::vector<std::size_t>& rows) {
        std::vector<double> s;
        for (auto i : rows) s.push_back(score(i));
        return auc_roc(s, gather_labels(d, rows));
    };
    for (const auto& sp : splits) {
        r.test_auc.push_back(auc_on(sp.test));
        r.val_auc.push_back(auc_on(sp.val));
        r.chosen_hyperparams.emplace_back();
        r.chosen_dft_k.push_back(0);
    }
    return finalize(std::move(r));
}

// ---------------------------------------------------------------------------
// Full matrix
// ---------------------------------------------------------------------------

enum class PredSet { none, llava, paligemma, both };

inline std::string_view to_string(PredSet p) {
    switch (p) {
    case PredSet::none: return "nopred";
    case PredSet::llava: return "llava";
    case PredSet::paligemma: return "paligemma";
    case PredSet::both: return "both";
    }
    return "?";
}

inline constexpr LearnerKind kMatrixLearners[] = {LearnerKind::gbt, LearnerKind::svm, LearnerKind::logreg};
inline constexpr PredSet kMatrixPreds[] = {PredSet::none, PredSet::llava, PredSet::paligemma, PredSet::both};
inline constexpr Aggregation kAggregations[] = {Aggregation::description_only, Aggregation::linguistic_only,
                                                Aggregation::concat, Aggregation::subtract, Aggregation::divide};

inline std::string statistical_cell_name(PredSet preds, bool linguistic, LearnerKind learner) {
    return "stat." + std::string(to_string(preds)) + (linguistic ? ".desc_ling." : ".desc.") +
           std::string(to_string(learner));
}
inline std::string preds_only_cell_name(LearnerKind learner) { return "preds.both." + std::string(to_string(learner)); }
inline std::string raw_cell_name(Aggregation a, LearnerKind learner) {
    return "raw." + std::string(to_string(a)) + "." + std::string(to_string(learner));
}

/// Statistical cells (4 predictor sets x with/without Linguistic x 3 learners),
/// both-predictor-only cells, and raw-aggregation cells (5 modes x 3 learners).
inline std::vector<ExperimentCell> matrix_cells(std::size_t pad_len) {
    std::vector<ExperimentCell> cells;
    for (auto preds : kMatrixPreds)
        for (bool ling : {false, true})
            for (auto learner : kMatrixLearners) {
                ExperimentCell c;
                c.name = statistical_cell_name(preds, ling, learner);
                c.learner = learner;
                c.features.kind = FeatureKind::statistical;
                c.features.use_linguistic = ling;
                c.features.include_llava_pred = preds == PredSet::llava || preds == PredSet::both;
                c.features.include_paligemma_pred = preds == PredSet::paligemma || preds == PredSet::both;
                cells.push_back(std::move(c));
            }
    for (auto learner : kMatrixLearners) {
        ExperimentCell c;
        c.name = preds_only_cell_name(learner);
        c.learner = learner;
        c.features.kind = FeatureKind::predictors_only;
        c.features.include_llava_pred = true;
        c.features.include_paligemma_pred = true;
        cells.push_back(std::move(c));
    }
    for (auto agg : kAggregations)
        for (auto learner : kMatrixLearners) {
            ExperimentCell c;
            c.name = raw_cell_name(agg, learner);
            c.learner = learner;
            c.features.kind = FeatureKind::raw;
            c.features.aggregation = agg;
            c.features.pad_len = pad_len;
            cells.push_back(std::move(c));
        }
    return cells;
}

struct MatrixResult {
    std::vector<ExperimentResult> cells;
    std::vector<ExperimentResult> raw_vlm;
};

/// Runs every matrix cell plus the two training-free predictor rows on one
/// shared split sequence.
inline MatrixResult run_matrix(const Dataset& d, const SplitSpec& spec, const RunOptions& opt = {}) {
    if (!d.has_llava_pred() || !d.has_paligemma_pred())
        throw InvalidArgument("run_matrix: every record needs llava_pred and paligemma_pred");
    const auto splits = make_splits(d, spec);
    MatrixResult m;
    for (const auto& cell : matrix_cells(d.max_seq_len())) m.cells.push_back(run_experiment(d, spec, splits, cell, opt));
    m.raw_vlm.push_back(run_raw_predictor(d, splits, Predictor::llava));
    m.raw_vlm.push_back(run_raw_predictor(d, splits, Predictor::paligemma));
    return m;
}

// ---------------------------------------------------------------------------
// Leave-one-feature-out
// ---------------------------------------------------------------------------

struct AblationEntry {
    std::string feature;
    double mean_auc_without = 0.0;
    double delta = 0.0; // mean AUC(all) - mean AUC(without)
};

struct AblationResult {
    ExperimentResult full;
    std::vector<AblationEntry> entries; // in feature order
};

/// Features considered are those of the cell at its largest searched dft_k.
inline std::vector<std::string> ablation_features(const ExperimentCell& cell) {
    const auto grid = cell.effective_dft_grid();
    return feature_names(config_at(cell, *std::max_element(grid.begin(), grid.end())));
}

inline AblationResult ablation(const Dataset& d, const SplitSpec& spec, const ExperimentCell& cell,
                               const RunOptions& opt = {}) {
    const auto names = ablation_features(cell);
    if (names.size() < 2) throw InvalidArgument("ablation: the feature config must yield at least two features");
    const auto splits = make_splits(d, spec);
    AblationResult out;
    out.full = run_experiment(d, spec, splits, cell, opt);
    for (const auto& name : names) {
        ExperimentCell reduced = cell;
        reduced.name = cell.name + ".minus." + name;
        reduced.features.excluded_features.insert(name);
        const auto r = run_experiment(d, spec, splits, reduced, opt);
        out.entries.push_back({name, r.mean_auc, out.full.mean_auc - r.mean_auc});
    }
    return out;
}

/// Entries by descending delta; equal deltas keep feature order.
inline std::vector<AblationEntry> sorted_by_delta(std::vector<AblationEntry> entries) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const AblationEntry& a, const AblationEntry& b) { return a.delta > b.delta; });
    return entries;
}

} // namespace ntpdetect
