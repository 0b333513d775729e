#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include <ntpdetect/ntpdetect.hpp>

#include "oracles.hpp"

using namespace ntpdetect;

namespace {

std::vector<bool> to_bools(const LabelVector& y) { return std::vector<bool>(y.begin(), y.end()); }

/// Grids small enough for unit tests.
GridSet small_grids() {
    GridSet g;
    g.logreg.C = {0.1, 1.0};
    g.svm.C = {1.0};
    g.svm.gamma = {GammaSpec::scale()};
    g.gbt.max_depth = {2};
    g.gbt.learning_rate = {0.2};
    g.gbt.min_child_weight = {3};
    g.gbt.gamma = {0.1};
    g.gbt.subsample = {0.7};
    g.gbt.colsample = {0.7};
    g.gbt.alpha = {0.1};
    g.gbt.lambda = {1, 10};
    g.gbt.n_rounds = 20;
    return g;
}

ExperimentCell stat_cell(LearnerKind learner, bool ling = false, bool preds = false) {
    ExperimentCell c;
    c.name = "cell";
    c.learner = learner;
    c.features.use_linguistic = ling;
    c.features.include_llava_pred = preds;
    c.features.include_paligemma_pred = preds;
    c.dft_k_grid = {0, 2};
    return c;
}

} // namespace

// ---------------------------------------------------------------------------
// AUC
// ---------------------------------------------------------------------------

TEST(Auc, MatchesPairCountingOracle) {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.index(60);
        std::vector<double> s(n);
        LabelVector y(n);
        const std::uint64_t levels = trial % 3 == 0 ? 3 : (trial % 3 == 1 ? 20 : 1000000);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.index(levels));
            y[i] = rng.bernoulli(0.4);
        }
        y[0] = true;
        y[1] = false;
        EXPECT_NEAR(auc_roc(s, y), oracle::auc_pairs(s, to_bools(y)), 1e-12) << "trial " << trial;
    }
}

TEST(Auc, MonotoneInvarianceAndComplement) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 40;
        std::vector<double> s(n), t(n), neg(n);
        LabelVector y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = std::round(rng.normal() * 4) / 4;
            t[i] = std::exp(3 * s[i]) + 7;
            neg[i] = -s[i];
            y[i] = i % 3 == 0;
        }
        EXPECT_DOUBLE_EQ(auc_roc(s, y), auc_roc(t, y));
        EXPECT_NEAR(auc_roc(s, y) + auc_roc(neg, y), 1.0, 1e-12);
    }
}

TEST(Auc, EdgeCases) {
    const std::vector<double> s{0.1, 0.9, 0.5};
    EXPECT_DOUBLE_EQ(auc_roc(s, LabelVector{false, true, false}), 1.0);
    EXPECT_DOUBLE_EQ(auc_roc(s, LabelVector{true, false, true}), 0.0);
    EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{1, 1}, LabelVector{true, false}), 0.5);
    EXPECT_THROW(auc_roc(s, LabelVector{true, true, true}), InvalidArgument);
    EXPECT_THROW(auc_roc(s, LabelVector{true, false}), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Aggregation and splits
// ---------------------------------------------------------------------------

TEST(Aggregate, MeanAndCi) {
    const auto [mean, ci] = mean_and_ci({0.5, 0.7, 0.6, 0.8});
    EXPECT_DOUBLE_EQ(mean, 0.65);
    // sample std of {0.5,0.6,0.7,0.8} = sqrt(0.05/3)
    EXPECT_NEAR(ci, 1.96 * std::sqrt(0.05 / 3) / 2, 1e-15);
    EXPECT_EQ(mean_and_ci({0.3}).second, 0.0);
}

TEST(Splits, DisjointSizedAndDeterministic) {
    const auto d = synth_generate(120, 1.0, 1);
    SplitSpec spec{60, 20, 30, 5, 42};
    const auto a = make_splits(d, spec);
    const auto b = make_splits(d, spec);
    ASSERT_EQ(a.size(), 5u);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].train, b[k].train);
        EXPECT_EQ(a[k].test, b[k].test);
        EXPECT_EQ(a[k].train.size(), 60u);
        EXPECT_EQ(a[k].val.size(), 20u);
        EXPECT_EQ(a[k].test.size(), 30u);
        std::set<std::size_t> all(a[k].train.begin(), a[k].train.end());
        all.insert(a[k].val.begin(), a[k].val.end());
        all.insert(a[k].test.begin(), a[k].test.end());
        EXPECT_EQ(all.size(), 110u);
    }
    EXPECT_NE(a[0].train, a[1].train);
    // Split i depends only on base_seed + i.
    SplitSpec shifted = spec;
    shifted.base_seed = 43;
    EXPECT_EQ(make_splits(d, shifted)[0].train, a[1].train);
    spec.train_n = 100;
    EXPECT_THROW(make_splits(d, spec), InvalidArgument);
}

TEST(Splits, ImageGroupingKeepsImagesTogether) {
    const auto d = synth_generate(200, 1.0, 1);
    SplitSpec spec{120, 40, 40, 3, 0, true};
    for (const auto& s : make_splits(d, spec)) {
        std::map<std::string, int> part;
        int k = 0;
        for (const auto* rows : {&s.train, &s.val, &s.test}) {
            for (auto i : *rows) {
                auto it = part.emplace(d[i].image_id, k).first;
                EXPECT_EQ(it->second, k) << d[i].image_id;
            }
            ++k;
        }
        EXPECT_LE(s.train.size(), 120u);
    }
}

TEST(Parallel, LowestIndexExceptionWins) {
    std::vector<int> hit(20, 0);
    try {
        parallel_for(20, 4, [&](std::size_t i) {
            hit[i] = 1;
            if (i == 7 || i == 13) throw Error("item " + std::to_string(i));
        });
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "item 7");
    }
    EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 20);
}

// ---------------------------------------------------------------------------
// Grid search and experiments
// ---------------------------------------------------------------------------

TEST(GridSearch, ChoosesFirstMaximumInGridOrder) {
    const auto d = synth_generate(300, 0.8, 2);
    const auto split = make_splits(d, SplitSpec{150, 75, 75, 1, 3})[0];
    const auto cell = stat_cell(LearnerKind::logreg);
    std::vector<PreparedSplit> prepared;
    for (int k : cell.effective_dft_grid()) prepared.push_back(prepare_split(d, split, config_at(cell, k)));
    // Duplicate points guarantee ties; the earliest must win.
    const std::vector<Hyperparams> grid{LogRegParams{1.0, Penalty::l2}, LogRegParams{1.0, Penalty::l2},
                                        LogRegParams{0.01, Penalty::l1}};
    const auto gs = grid_search(prepared, grid, 0);
    ASSERT_EQ(gs.val_aucs.size(), 6u);
    const auto best = std::max_element(gs.val_aucs.begin(), gs.val_aucs.end());
    EXPECT_EQ(gs.best_index, static_cast<std::size_t>(best - gs.val_aucs.begin()));
    EXPECT_EQ(gs.best_val_auc, *best);
    EXPECT_EQ(gs.dft_k, gs.best_index < 3 ? 0 : 2);
    EXPECT_NE(gs.best_index % 3, 1u);
}

TEST(Experiment, ReproducibleAcrossThreadCounts) {
    const auto d = synth_generate(260, 0.8, 4);
    const SplitSpec spec{120, 60, 60, 4, 11};
    for (auto learner : {LearnerKind::logreg, LearnerKind::svm, LearnerKind::gbt}) {
        const auto cell = stat_cell(learner, true, true);
        const auto one = run_experiment(d, spec, cell, {small_grids(), 1});
        const auto three = run_experiment(d, spec, cell, {small_grids(), 3});
        EXPECT_EQ(one.test_auc, three.test_auc) << to_string(learner);
        EXPECT_EQ(one.chosen_hyperparams, three.chosen_hyperparams);
        EXPECT_EQ(one.mean_auc, three.mean_auc);
        const auto [lo, hi] = std::minmax_element(one.test_auc.begin(), one.test_auc.end());
        EXPECT_GE(one.mean_auc, *lo);
        EXPECT_LE(one.mean_auc, *hi);
    }
}

TEST(Experiment, TestAucRecomputesFromSavedModels) {
    const auto d = synth_generate(260, 0.8, 5);
    const SplitSpec spec{120, 60, 60, 3, 0};
    const auto splits = make_splits(d, spec);
    const auto cell = stat_cell(LearnerKind::svm, false, true);
    std::vector<TrainedModel> models;
    const auto r = run_experiment(d, spec, splits, cell, {small_grids(), 1}, &models);
    ASSERT_EQ(models.size(), 3u);
    for (std::size_t i = 0; i < models.size(); ++i) {
        const auto x = build_feature_matrix(d, splits[i].test, models[i].features).values;
        const Eigen::VectorXd s = predict_scores(models[i], x);
        EXPECT_EQ(auc_roc(std::span<const double>(s.data(), splits[i].test.size()), gather_labels(d, splits[i].test)),
                  r.test_auc[i]);
        EXPECT_EQ(models[i].features.dft_k, r.chosen_dft_k[i]);
    }
}

TEST(Experiment, RequirementsAreChecked) {
    auto records = synth_generate(100, 1.0, 1).records();
    records[5].llava_pred.reset();
    const Dataset d(std::move(records));
    const SplitSpec spec{50, 20, 20, 1, 0};
    EXPECT_THROW(run_experiment(d, spec, stat_cell(LearnerKind::logreg, false, true), {small_grids()}), InvalidArgument);
    EXPECT_THROW(run_raw_predictor(d, make_splits(d, spec), Predictor::llava), InvalidArgument);
    ExperimentCell raw;
    raw.features.kind = FeatureKind::raw;
    raw.features.pad_len = 5;
    EXPECT_THROW(run_experiment(d, spec, raw, {small_grids()}), InvalidArgument);
    auto bad = stat_cell(LearnerKind::logreg);
    bad.features.excluded_features = {"nonexistent"};
    EXPECT_THROW(run_experiment(d, spec, bad, {small_grids()}), InvalidArgument);
}

TEST(Experiment, RawPredictorRowIsDirectAuc) {
    const auto d = synth_generate(200, 1.0, 6);
    const auto splits = make_splits(d, SplitSpec{100, 50, 50, 3, 9});
    const auto r = run_raw_predictor(d, splits, Predictor::paligemma);
    ASSERT_EQ(r.test_auc.size(), 3u);
    for (std::size_t k = 0; k < splits.size(); ++k) {
        std::vector<double> s;
        std::vector<bool> y;
        for (auto i : splits[k].test) {
            s.push_back(1.0 - *d[i].paligemma_pred);
            y.push_back(d[i].label);
        }
        EXPECT_NEAR(r.test_auc[k], oracle::auc_pairs(s, y), 1e-12);
    }
    EXPECT_EQ(r.learner, "none");
}

TEST(Matrix, CellInventory) {
    const auto cells = matrix_cells(42);
    EXPECT_EQ(cells.size(), 24u + 3u + 15u);
    std::set<std::string> names;
    for (const auto& c : cells) names.insert(c.name);
    EXPECT_EQ(names.size(), cells.size());
    EXPECT_TRUE(names.contains("stat.nopred.desc.logreg"));
    EXPECT_TRUE(names.contains("stat.both.desc_ling.svm"));
    EXPECT_TRUE(names.contains("raw.subtract.gbt"));
}

TEST(Matrix, SharedSplitsAndReport) {
    const auto d = synth_generate(160, 1.0, 8);
    GridSet g = small_grids();
    g.gbt.lambda = {1};
    g.gbt.n_rounds = 5;
    const auto m = run_matrix(d, SplitSpec{80, 40, 40, 2, 0}, {g, 1});
    EXPECT_EQ(m.cells.size(), 42u);
    ASSERT_EQ(m.raw_vlm.size(), 2u);
    // Paired comparisons: every training-free row sees the same test sets, so
    // recomputing with the shared split sequence reproduces it.
    const auto splits = make_splits(d, SplitSpec{80, 40, 40, 2, 0});
    EXPECT_EQ(run_raw_predictor(d, splits, Predictor::llava).test_auc, m.raw_vlm[0].test_auc);

    std::vector<ExperimentResult> all = m.cells;
    all.insert(all.end(), m.raw_vlm.begin(), m.raw_vlm.end());
    std::ostringstream csv, md;
    write_results_csv(csv, all);
    write_results_markdown(md, all);
    std::size_t lines = 0, split_rows = 0, aggregate_rows = 0;
    std::istringstream in(csv.str());
    for (std::string line; std::getline(in, line); ++lines) {
        if (lines > 0 && line.find(",split,") != std::string::npos) ++split_rows;
        if (line.find(",aggregate,") != std::string::npos) ++aggregate_rows;
    }
    EXPECT_EQ(split_rows, 44u * 2u);
    EXPECT_EQ(aggregate_rows, 44u);
    EXPECT_EQ(lines, 1u + 44u * 3u);
    EXPECT_NE(md.str().find("| LLaVA and PaliGemma | No |"), std::string::npos);
    EXPECT_NE(md.str().find("## Raw NTP aggregation"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

TEST(Ablation, DeltasEqualIndependentRecomputation) {
    const auto d = synth_generate(240, 1.0, 9);
    const SplitSpec spec{120, 60, 60, 3, 2};
    ExperimentCell cell = stat_cell(LearnerKind::logreg, false, true);
    cell.dft_k_grid = {1};
    const auto res = ablation(d, spec, cell, {small_grids()});
    ASSERT_EQ(res.entries.size(), 7u);
    const auto full = run_experiment(d, spec, cell, {small_grids()});
    EXPECT_EQ(full.mean_auc, res.full.mean_auc);
    for (const auto& e : res.entries) {
        ExperimentCell reduced = cell;
        reduced.features.excluded_features = {e.feature};
        const auto r = run_experiment(d, spec, reduced, {small_grids()});
        EXPECT_EQ(e.mean_auc_without, r.mean_auc) << e.feature;
        EXPECT_EQ(e.delta, full.mean_auc - r.mean_auc);
    }
    const auto sorted = sorted_by_delta(res.entries);
    ASSERT_EQ(sorted.size(), res.entries.size());
    for (std::size_t i = 1; i < sorted.size(); ++i) EXPECT_GE(sorted[i - 1].delta, sorted[i].delta);
}

TEST(Ablation, DuplicatedFeatureHasNoEffect) {
    // Linguistic NTPs equal to Description NTPs make every ling.* feature a
    // copy of its desc.* twin.
    auto records = synth_generate(300, 1.0, 10).records();
    for (auto& r : records) r.linguistic_ntps = r.description_ntps;
    const Dataset d(std::move(records));
    ExperimentCell cell = stat_cell(LearnerKind::logreg, true);
    cell.dft_k_grid = {0};
    GridSet g = small_grids();
    g.logreg.penalty = {Penalty::l2};
    const auto res = ablation(d, SplitSpec{150, 75, 75, 3, 0}, cell, {g});
    for (const auto& e : res.entries) {
        if (e.feature != "desc.mean" && e.feature != "ling.mean") continue;
        EXPECT_NEAR(e.delta, 0.0, 0.01) << e.feature;
    }
}

TEST(Ablation, NeedsTwoFeatures) {
    const auto d = synth_generate(100, 1.0, 1);
    ExperimentCell cell;
    cell.features.kind = FeatureKind::predictors_only;
    cell.features.include_llava_pred = true;
    EXPECT_THROW(ablation(d, SplitSpec{50, 20, 20, 1, 0}, cell, {small_grids()}), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST(Config, ParsesCellsAndOverrides) {
    const auto j = nlohmann::json::parse(R"({
        "dataset": "data.jsonl", "seed": 7, "raw_vlm": true,
        "splits": {"n_splits": 5, "base_seed": 1},
        "grids": {"logreg": {"C": [1]}, "gbt": {"n_rounds": 10}},
        "cells": [
          {"name": "a", "learner": "lr", "features": {"kind": "statistical", "dft_k": [0, 3]}},
          {"learner": "xgboost", "features": {"kind": "raw", "aggregation": "subtract", "pad_len": 42}}
        ]})");
    const auto c = experiment_config_from_json(j, "/base");
    EXPECT_EQ(c.dataset, std::filesystem::path("/base/data.jsonl"));
    EXPECT_EQ(c.splits.base_seed, 7u);
    EXPECT_EQ(c.splits.n_splits, 5u);
    EXPECT_EQ(c.splits.train_n, 1000u);
    EXPECT_TRUE(c.raw_vlm);
    EXPECT_EQ(c.grids.logreg.C, (std::vector<double>{1}));
    EXPECT_EQ(c.grids.gbt.n_rounds, 10);
    ASSERT_EQ(c.cells.size(), 2u);
    EXPECT_EQ(c.cells[0].dft_k_grid, (std::vector<int>{0, 3}));
    EXPECT_EQ(c.cells[1].learner, LearnerKind::gbt);
    EXPECT_EQ(c.cells[1].name, "cell1.gbt");
}

TEST(Config, RejectsUnknownKeys) {
    EXPECT_THROW(experiment_config_from_json(nlohmann::json{{"bogus", 1}}), InvalidArgument);
    EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"splits": {"size": 3}})")), InvalidArgument);
    EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"grids": {"svm": {"C": []}}})")),
                 InvalidArgument);
    EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(
                     R"({"cells": [{"name": "x", "learner": "svm", "features": {"kind": "statistical", "dft_k": 9}}]})")),
                 InvalidArgument);
}

TEST(Config, ResolvedFormRoundTrips) {
    const auto j = nlohmann::json::parse(R"({
        "dataset": "/d.jsonl", "output_dir": "/out",
        "grids": {"svm": {"gamma": ["auto", 0.5]}},
        "cells": [{"name": "a", "learner": "svm",
                   "features": {"kind": "statistical", "use_linguistic": true, "dft_k": [1, 2],
                                "excluded_features": ["desc.dft.1"]}}]})");
    const auto c = experiment_config_from_json(j);
    const auto manifest = nlohmann::json{{"format", "ntpdetect-manifest"},
                                         {"resolved_config", nlohmann::json::parse(to_json(c).dump())}};
    const auto back = experiment_config_from_json(manifest);
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
    EXPECT_EQ(back.cells[0].dft_k_grid, (std::vector<int>{1, 2}));
    EXPECT_EQ(back.cells[0].features.excluded_features, (std::set<std::string>{"desc.dft.1"}));
    EXPECT_EQ(back.grids.svm.gamma.size(), 2u);
}

TEST(Config, ExclusionOnlyAppliesWhereFeatureExists) {
    ExperimentCell cell = stat_cell(LearnerKind::logreg);
    cell.dft_k_grid = {0, 2};
    cell.features.excluded_features = {"desc.dft.1"};
    EXPECT_TRUE(config_at(cell, 0).excluded_features.empty());
    EXPECT_EQ(config_at(cell, 2).excluded_features.size(), 1u);
}
