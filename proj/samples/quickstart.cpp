// Library walk-through on synthetic data: build features, run one experiment
// cell, print the result table.

#include <iostream>

#include <ntpdetect/ntpdetect.hpp>

int main() {
    using namespace ntpdetect;

    const Dataset d = synth_generate(600, 1.0, 7);
    const auto stats = dataset_stats(d);
    std::cout << d.size() << " records, " << stats.n_positive << " hallucinated, mean Spearman "
              << *stats.mean_spearman << "\n";

    FeatureConfig fc;
    fc.use_linguistic = true;
    fc.dft_k = 2;
    const auto fv = build_features(d[0], fc);
    for (std::size_t i = 0; i < fv.size(); ++i) std::cout << "  " << fv.names[i] << " = " << fv.values[i] << "\n";

    SplitSpec spec{300, 100, 100, 10, 1};
    ExperimentCell cell{"stat.desc_ling.logreg", LearnerKind::logreg, fc, {0, 2}};
    const auto splits = make_splits(d, spec);
    std::vector<ExperimentResult> results{run_experiment(d, spec, splits, cell)};
    results.push_back(run_raw_predictor(d, splits, Predictor::paligemma));
    write_results_markdown(std::cout, results);
}
