#pragma once

#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "experiment.hpp"

namespace ntpdetect {

namespace detail {

inline std::string fmt_double(double v, const char* spec = "%.10g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string feature_desc(const FeatureConfig& c) {
    std::string s(to_string(c.kind));
    if (c.kind == FeatureKind::raw) s += ":" + std::string(to_string(c.aggregation));
    if (c.kind == FeatureKind::statistical) s += c.use_linguistic ? ":desc+ling" : ":desc";
    if (c.include_llava_pred) s += "+pred.llava";
    if (c.include_paligemma_pred) s += "+pred.paligemma";
    for (const auto& e : c.excluded_features) s += "-" + e;
    return s;
}

inline std::string auc_ci(const ExperimentResult& r) {
    return fmt_double(r.mean_auc, "%.3f") + " ± " + fmt_double(r.ci_half_width, "%.3f");
}

} // namespace detail

/// One row per cell per split, then one aggregate row per cell.
inline void write_results_csv(std::ostream& out, const std::vector<ExperimentResult>& results) {
    out << "cell,learner,features,row,split,test_auc,val_auc,dft_k,hyperparams,mean_auc,ci_half_width\n";
    for (const auto& r : results) {
        const auto prefix = detail::csv_escape(r.name) + "," + r.learner + "," +
                            detail::csv_escape(detail::feature_desc(r.features)) + ",";
        for (std::size_t i = 0; i < r.test_auc.size(); ++i) {
            out << prefix << "split," << i << "," << detail::fmt_double(r.test_auc[i]) << ","
                << detail::fmt_double(r.val_auc[i]) << "," << r.chosen_dft_k[i] << ","
                << detail::csv_escape(r.chosen_hyperparams[i]) << ",,\n";
        }
    }
    for (const auto& r : results) {
        out << detail::csv_escape(r.name) << "," << r.learner << "," << detail::csv_escape(detail::feature_desc(r.features))
            << ",aggregate,,,,,," << detail::fmt_double(r.mean_auc) << "," << detail::fmt_double(r.ci_half_width)
            << "\n";
    }
}

/// Generic table of every result, plus the predictor-by-learner layout and the
/// raw-aggregation table when the matrix cells are present.
inline void write_results_markdown(std::ostream& out, const std::vector<ExperimentResult>& results) {
    std::map<std::string, const ExperimentResult*> by_name;
    for (const auto& r : results) by_name[r.name] = &r;
    const auto cell = [&](const std::string& name) -> std::string {
        auto it = by_name.find(name);
        return it == by_name.end() ? "--" : detail::auc_ci(*it->second);
    };

    const std::size_t n_splits = results.empty() ? 0 : results.front().test_auc.size();
    out << "# Hallucination detection AUC-ROC\n\n";
    out << "Mean test AUC-ROC over " << n_splits << " random splits, with 95% confidence half-widths.\n\n";

    bool has_matrix = false;
    for (auto p : kMatrixPreds)
        for (bool ling : {false, true})
            for (auto l : kMatrixLearners) has_matrix |= by_name.contains(statistical_cell_name(p, ling, l));
    if (has_matrix) {
        out << "## ML models performance\n\n";
        out << "| Preds | Linguistic | XGBoost | SVM | LR |\n|---|---|---|---|---|\n";
        const std::map<PredSet, std::string> label = {{PredSet::none, "No Preds"},
                                                      {PredSet::llava, "LLaVA"},
                                                      {PredSet::paligemma, "PaliGemma"},
                                                      {PredSet::both, "LLaVA and PaliGemma"}};
        for (auto p : kMatrixPreds)
            for (bool ling : {false, true}) {
                out << "| " << (ling ? "" : label.at(p)) << " | " << (ling ? "Yes" : "No");
                for (auto l : kMatrixLearners) out << " | " << cell(statistical_cell_name(p, ling, l));
                out << " |\n";
            }
        out << "\n## VLM performance\n\n";
        out << "| VLM Type | Raw Score | XGBoost | SVM | LR |\n|---|---|---|---|---|\n";
        out << "| LLaVA | " << cell("vlm.llava") << " | -- | -- | -- |\n";
        out << "| PaliGemma | " << cell("vlm.paligemma") << " | -- | -- | -- |\n";
        out << "| LLaVA and PaliGemma | --";
        for (auto l : kMatrixLearners) out << " | " << cell(preds_only_cell_name(l));
        out << " |\n\n";
    }

    bool has_raw = false;
    for (auto a : kAggregations)
        for (auto l : kMatrixLearners) has_raw |= by_name.contains(raw_cell_name(a, l));
    if (has_raw) {
        out << "## Raw NTP aggregation\n\n| Aggregation | XGBoost | SVM | LR |\n|---|---|---|---|\n";
        for (auto a : kAggregations) {
            out << "| " << to_string(a);
            for (auto l : kMatrixLearners) out << " | " << cell(raw_cell_name(a, l));
            out << " |\n";
        }
        out << "\n";
    }

    out << "## All cells\n\n| Cell | Learner | Features | AUC-ROC |\n|---|---|---|---|\n";
    for (const auto& r : results)
        out << "| " << r.name << " | " << r.learner << " | " << detail::feature_desc(r.features) << " | "
            << detail::auc_ci(r) << " |\n";
}

inline void write_ablation_csv(std::ostream& out, const std::vector<AblationResult>& results) {
    out << "cell,learner,feature,full_mean_auc,mean_auc_without,delta_auc\n";
    for (const auto& a : results)
        for (const auto& e : sorted_by_delta(a.entries))
            out << detail::csv_escape(a.full.name) << "," << a.full.learner << "," << e.feature << ","
                << detail::fmt_double(a.full.mean_auc) << "," << detail::fmt_double(e.mean_auc_without) << ","
                << detail::fmt_double(e.delta) << "\n";
}

inline void write_ablation_markdown(std::ostream& out, const std::vector<AblationResult>& results) {
    out << "# Leave-one-feature-out ablation\n\n";
    for (const auto& a : results) {
        out << "## " << a.full.name << " (" << a.full.learner << ", full AUC " << detail::auc_ci(a.full) << ")\n\n";
        out << "| Feature | AUC without | ΔAUC |\n|---|---|---|\n";
        for (const auto& e : sorted_by_delta(a.entries))
            out << "| " << e.feature << " | " << detail::fmt_double(e.mean_auc_without, "%.4f") << " | "
                << detail::fmt_double(e.delta, "%+.4f") << " |\n";
        out << "\n";
    }
}

} // namespace ntpdetect
