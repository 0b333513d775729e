// ntpdetect: command-line front end for the hallucination-detection toolkit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <ntpdetect/ntpdetect.hpp>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> output_dir;
    std::string log_level = "info";
    std::vector<std::string> argv;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ntpdetect::InvalidArgument("cannot write '" + path.string() + "'");
    out << text;
}

template <typename Writer>
void write_with(const fs::path& path, Writer&& writer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ntpdetect::InvalidArgument("cannot write '" + path.string() + "'");
    writer(out);
}

std::string score_text(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_scores(const fs::path& path, const ntpdetect::Dataset& d, const std::vector<std::size_t>& rows,
                  const Eigen::VectorXd& scores) {
    write_with(path, [&](std::ostream& out) {
        out << "record_id,score\n";
        for (std::size_t i = 0; i < rows.size(); ++i)
            out << ntpdetect::detail::csv_escape(d[rows[i]].record_id) << "," << score_text(scores(static_cast<Eigen::Index>(i)))
                << "\n";
    });
}

ordered_json manifest(const Globals& g, const std::string& command) {
    ordered_json m;
    m["format"] = "ntpdetect-manifest";
    m["schema_version"] = ntpdetect::kManifestSchemaVersion;
    m["tool_version"] = kVersion;
    m["command"] = command;
    m["argv"] = g.argv;
    return m;
}

/// Config file plus command-line overrides; paths made absolute so the
/// manifest replays from any working directory.
ntpdetect::ExperimentConfig resolve_config(const Globals& g, const std::string& config_path,
                                           const std::optional<std::string>& data,
                                           const std::optional<std::size_t>& n_splits) {
    auto cfg = ntpdetect::load_experiment_config(config_path);
    if (data) cfg.dataset = *data;
    if (n_splits) cfg.splits.n_splits = *n_splits;
    if (g.seed) cfg.splits.base_seed = *g.seed;
    if (g.threads) cfg.threads = *g.threads;
    if (g.output_dir) cfg.output_dir = *g.output_dir;
    if (cfg.dataset.empty()) throw ntpdetect::InvalidArgument("no dataset given (config 'dataset' or --data)");
    cfg.dataset = fs::absolute(cfg.dataset).lexically_normal();
    cfg.output_dir = fs::absolute(cfg.output_dir).lexically_normal();
    if (cfg.threads == 0) cfg.threads = 1;
    return cfg;
}

ordered_json split_seeds(const ntpdetect::SplitSpec& s) {
    ordered_json seeds = ordered_json::array();
    for (std::size_t i = 0; i < s.n_splits; ++i) seeds.push_back(ntpdetect::split_seed(s, i));
    return seeds;
}

std::string safe_file_name(std::string name) {
    for (char& c : name)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) c = '_';
    return name;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_convert(const std::string& source, const std::string& out, const std::string& semantics) {
    ntpdetect::ConvertOptions opt;
    opt.label_semantics = semantics == "hallucinated" ? ntpdetect::LabelSemantics::probe_is_hallucinated
                                                      : ntpdetect::LabelSemantics::probe_is_correct;
    const auto result = ntpdetect::convert_published_to(source, out, opt);
    for (const auto& note : result.notes) spdlog::warn("{}", note);
    spdlog::info("converted {} rows into {} records -> {}", result.rows, result.dataset.size(), out);
}

void cmd_stats(const std::string& data, bool json) {
    const auto d = ntpdetect::load_dataset(data);
    const auto s = ntpdetect::dataset_stats(d);
    if (json) {
        std::cout << ntpdetect::to_json(s).dump(2) << "\n";
        return;
    }
    auto opt_num = [](const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : std::string("n/a"); };
    std::cout << fmt::format("records            {}\n", s.n_records)
              << fmt::format("hallucinated       {} ({:.1f}%)\n", s.n_positive, 100.0 * s.positive_rate)
              << fmt::format("max sequence len   {}\n", s.max_seq_len)
              << fmt::format("spearman (desc/ling) mean {}  median {}  over {} records\n", opt_num(s.mean_spearman),
                             opt_num(s.median_spearman), s.n_correlation_defined)
              << fmt::format("llava_pred         {}/{}\n", s.n_llava_pred, s.n_records)
              << fmt::format("paligemma_pred     {}/{}\n", s.n_paligemma_pred, s.n_records);
    std::cout << "generators        ";
    for (const auto& [name, count] : s.generator_counts) std::cout << " " << name << "=" << count;
    std::cout << "\nlength histogram  ";
    for (const auto& [len, count] : s.seq_len_histogram) std::cout << " " << len << ":" << count;
    std::cout << "\n";
}

void cmd_synth(const Globals& g, std::size_t n, double signal, const std::string& out) {
    const auto d = ntpdetect::synth_generate(n, signal, g.seed.value_or(0));
    ntpdetect::save_dataset(out, d);
    spdlog::info("wrote {} synthetic records (signal {}) -> {}", d.size(), signal, out);
}

void cmd_run(const Globals& g, const std::string& config_path, const std::optional<std::string>& data,
             const std::optional<std::size_t>& n_splits, bool save_models) {
    auto cfg = resolve_config(g, config_path, data, n_splits);
    if (save_models) cfg.save_models = true;
    const auto d = ntpdetect::load_dataset(cfg.dataset);
    if (cfg.matrix) {
        for (auto& cell : ntpdetect::matrix_cells(d.max_seq_len())) cfg.cells.push_back(std::move(cell));
        cfg.matrix = false;
        std::set<std::string> names;
        for (const auto& c : cfg.cells)
            if (!names.insert(c.name).second) throw ntpdetect::InvalidArgument("duplicate cell name '" + c.name + "'");
    }
    if (cfg.cells.empty() && !cfg.raw_vlm) throw ntpdetect::InvalidArgument("config defines no cells");

    fs::create_directories(cfg.output_dir);
    const auto splits = ntpdetect::make_splits(d, cfg.splits);
    const ntpdetect::RunOptions opt{cfg.grids, cfg.threads};
    spdlog::info("{} records, {} cells, {} splits, {} threads", d.size(), cfg.cells.size(), splits.size(), cfg.threads);

    std::vector<ntpdetect::ExperimentResult> results;
    for (std::size_t i = 0; i < cfg.cells.size(); ++i) {
        const auto& cell = cfg.cells[i];
        std::vector<ntpdetect::TrainedModel> models;
        results.push_back(ntpdetect::run_experiment(d, cfg.splits, splits, cell, opt, cfg.save_models ? &models : nullptr));
        spdlog::info("[{}/{}] {}: AUC {:.4f} ± {:.4f}", i + 1, cfg.cells.size(), cell.name, results.back().mean_auc,
                     results.back().ci_half_width);
        if (cfg.save_models && !models.empty()) {
            const auto dir = cfg.output_dir / "models";
            fs::create_directories(dir);
            const auto base = safe_file_name(cell.name);
            ntpdetect::save_model(dir / (base + ".model.json"), models.front());
            const auto x = ntpdetect::build_feature_matrix(d, splits.front().train, models.front().features).values;
            write_scores(dir / (base + ".train_scores.csv"), d, splits.front().train,
                         ntpdetect::predict_scores(models.front(), x));
        }
    }
    if (cfg.raw_vlm) {
        for (auto which : {ntpdetect::Predictor::llava, ntpdetect::Predictor::paligemma}) {
            results.push_back(ntpdetect::run_raw_predictor(d, splits, which));
            spdlog::info("{}: AUC {:.4f} ± {:.4f}", results.back().name, results.back().mean_auc,
                         results.back().ci_half_width);
        }
    }

    write_with(cfg.output_dir / "results.csv", [&](std::ostream& out) { ntpdetect::write_results_csv(out, results); });
    write_with(cfg.output_dir / "results.md", [&](std::ostream& out) { ntpdetect::write_results_markdown(out, results); });
    auto m = manifest(g, "run");
    m["resolved_config"] = ntpdetect::to_json(cfg);
    m["split_seeds"] = split_seeds(cfg.splits);
    m["outputs"] = {"results.csv", "results.md"};
    write_text(cfg.output_dir / "manifest.json", m.dump(2) + "\n");
    spdlog::info("results written to {}", cfg.output_dir.string());
}

void cmd_ablate(const Globals& g, const std::string& config_path, const std::optional<std::string>& data,
                const std::optional<std::size_t>& n_splits) {
    auto cfg = resolve_config(g, config_path, data, n_splits);
    if (cfg.matrix) throw ntpdetect::InvalidArgument("ablate works on explicit cells; 'matrix' is not supported");
    if (cfg.cells.empty()) throw ntpdetect::InvalidArgument("config defines no cells");
    const auto d = ntpdetect::load_dataset(cfg.dataset);
    fs::create_directories(cfg.output_dir);
    const ntpdetect::RunOptions opt{cfg.grids, cfg.threads};
    std::vector<ntpdetect::AblationResult> results;
    for (const auto& cell : cfg.cells) {
        spdlog::info("ablating {} ({} features)", cell.name, ntpdetect::ablation_features(cell).size());
        results.push_back(ntpdetect::ablation(d, cfg.splits, cell, opt));
        for (const auto& e : ntpdetect::sorted_by_delta(results.back().entries))
            spdlog::debug("  {:<24} delta {:+.4f}", e.feature, e.delta);
    }
    write_with(cfg.output_dir / "ablation.csv", [&](std::ostream& out) { ntpdetect::write_ablation_csv(out, results); });
    write_with(cfg.output_dir / "ablation.md",
               [&](std::ostream& out) { ntpdetect::write_ablation_markdown(out, results); });
    auto m = manifest(g, "ablate");
    m["resolved_config"] = ntpdetect::to_json(cfg);
    m["split_seeds"] = split_seeds(cfg.splits);
    m["outputs"] = {"ablation.csv", "ablation.md"};
    write_text(cfg.output_dir / "manifest.json", m.dump(2) + "\n");
    spdlog::info("ablation written to {}", cfg.output_dir.string());
}

void cmd_score(const Globals& g, const std::string& model_path, const std::string& data, const std::string& out) {
    const auto model = ntpdetect::load_model(model_path);
    const auto d = ntpdetect::load_dataset(data);
    const auto fm = ntpdetect::build_feature_matrix(d, model.features);
    if (!model.feature_names.empty() && fm.names != model.feature_names)
        throw ntpdetect::InvalidArgument("feature names built from the model's config do not match the model");
    const auto scores = ntpdetect::predict_scores(model, fm.values);
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const fs::path out_path = out;
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_scores(out_path, d, rows, scores);
    if (g.output_dir) {
        fs::create_directories(*g.output_dir);
        auto m = manifest(g, "score");
        m["model"] = fs::absolute(model_path).lexically_normal().string();
        m["dataset"] = fs::absolute(data).lexically_normal().string();
        m["scores"] = fs::absolute(out_path).lexically_normal().string();
        write_text(fs::path(*g.output_dir) / "manifest.json", m.dump(2) + "\n");
    }
    spdlog::info("scored {} records -> {}", d.size(), out);
}

} // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("ntpdetect");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");

    Globals g;
    g.argv.assign(argv, argv + argc);

    CLI::App app{"Hallucination detection from next-token probabilities"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.add_option("--seed", g.seed, "Base seed (overrides the config)");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--output-dir", g.output_dir, "Directory for results and the manifest");
    app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

    std::string source, out, semantics = "correct";
    auto* convert = app.add_subcommand("convert", "Convert the published table to JSONL");
    convert->add_option("--source", source, "Directory with .json/.jsonl exports")->required();
    convert->add_option("--out", out, "Output JSONL file")->required();
    convert->add_option("--label-semantics", semantics, "Meaning of a true published label: correct|hallucinated")
        ->check(CLI::IsMember({"correct", "hallucinated"}));

    std::string data;
    bool json = false;
    auto* stats = app.add_subcommand("stats", "Dataset statistics");
    stats->add_option("--data", data, "JSONL dataset")->required();
    stats->add_flag("--json", json, "Print JSON instead of text");

    std::string config;
    std::optional<std::string> data_override;
    std::optional<std::size_t> n_splits;
    bool save_models = false;
    auto* run = app.add_subcommand("run", "Run the experiment cells of a config");
    run->add_option("--config", config, "Experiment config (or a previous manifest)")->required();
    run->add_option("--data", data_override, "Dataset (overrides the config)");
    run->add_option("--splits", n_splits, "Number of random splits")->check(CLI::PositiveNumber);
    run->add_flag("--save-models", save_models, "Save split-0 models and their training scores");

    auto* ablate = app.add_subcommand("ablate", "Leave-one-feature-out ablation for each cell");
    ablate->add_option("--config", config, "Experiment config")->required();
    ablate->add_option("--data", data_override, "Dataset (overrides the config)");
    ablate->add_option("--splits", n_splits, "Number of random splits")->check(CLI::PositiveNumber);

    std::string model;
    auto* score = app.add_subcommand("score", "Score records with a saved model");
    score->add_option("--model", model, "Model JSON")->required();
    score->add_option("--data", data, "JSONL dataset")->required();
    score->add_option("--out", out, "Output CSV")->required();

    std::size_t synth_n = 1400;
    double signal = 1.0;
    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
    synth->add_option("--n", synth_n, "Number of records")->check(CLI::Range(std::size_t{4}, std::size_t{10'000'000}));
    synth->add_option("--signal", signal, "Label signal strength (0 = none)")->check(CLI::NonNegativeNumber);
    synth->add_option("--out", out, "Output JSONL file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        if (*convert) cmd_convert(source, out, semantics);
        else if (*stats) cmd_stats(data, json);
        else if (*run) cmd_run(g, config, data_override, n_splits, save_models);
        else if (*ablate) cmd_ablate(g, config, data_override, n_splits);
        else if (*score) cmd_score(g, model, data, out);
        else if (*synth) cmd_synth(g, synth_n, signal, out);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
