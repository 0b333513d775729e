// End-to-end tests of the command-line tool, run as a subprocess.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include <ntpdetect/ntpdetect.hpp>

namespace fs = std::filesystem;
using namespace ntpdetect;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ntpdetect_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

struct Outcome {
    int status;
    std::string out;
};

/// Runs the CLI with `args`; stdout is returned, stderr lands in work/stderr.txt.
Outcome cli(const std::string& args, const fs::path& work) {
    const auto out_file = work / "stdout.txt";
    const std::string cmd = std::string("\"") + NTPDETECT_CLI + "\" " + args + " > \"" + out_file.string() +
                            "\" 2> \"" + (work / "stderr.txt").string() + "\"";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out_file)};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

/// A fast config: two cells, two splits, compact grids.
std::string small_config(const fs::path& data, const fs::path& out) {
    return nlohmann::json{
        {"dataset", data.string()},
        {"output_dir", out.string()},
        {"raw_vlm", true},
        {"splits", {{"train_n", 120}, {"val_n", 40}, {"test_n", 40}, {"n_splits", 2}}},
        {"grids",
         {{"logreg", {{"C", {0.1, 1}}}},
          {"gbt",
           {{"max_depth", {2}}, {"learning_rate", {0.2}}, {"min_child_weight", {3}}, {"gamma", {0.1}},
            {"subsample", {0.7}}, {"colsample", {0.7}}, {"alpha", {0.1}}, {"lambda", {1}}, {"n_rounds", 10}}}}},
        {"cells",
         {{{"name", "lr"},
           {"learner", "logreg"},
           {"features", {{"kind", "statistical"}, {"use_linguistic", true}, {"dft_k", {0, 1}},
                         {"include_llava_pred", true}}}},
          {{"name", "gbt"},
           {"learner", "gbt"},
           {"features", {{"kind", "statistical"}, {"dft_k", 1}}}}}}}
        .dump(2);
}

std::map<std::string, int> rows_per_cell(const std::string& csv, const std::string& kind) {
    std::map<std::string, int> counts;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
        if (line.find("," + kind + ",") != std::string::npos) ++counts[line.substr(0, line.find(','))];
    return counts;
}

} // namespace

TEST(Cli, SynthThenStatsJson) {
    const auto dir = temp_dir("stats");
    ASSERT_EQ(cli("--seed 3 synth --n 80 --signal 1 --out " + (dir / "d.jsonl").string(), dir).status, 0);
    const auto r = cli("stats --json --data " + (dir / "d.jsonl").string(), dir);
    ASSERT_EQ(r.status, 0);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("n_records").get<int>(), 80);
    const auto d = load_dataset(dir / "d.jsonl");
    EXPECT_EQ(j.at("n_positive").get<std::size_t>(), dataset_stats(d).n_positive);
    EXPECT_EQ(slurp(dir / "d.jsonl"), serialize_dataset(synth_generate(80, 1.0, 3)));

    const auto text = cli("stats --data " + (dir / "d.jsonl").string(), dir);
    EXPECT_EQ(text.status, 0);
    EXPECT_NE(text.out.find("records"), std::string::npos);
}

TEST(Cli, ErrorsExitNonZero) {
    const auto dir = temp_dir("errors");
    write(dir / "empty.jsonl", "");
    EXPECT_NE(cli("stats --data " + (dir / "empty.jsonl").string(), dir).status, 0);
    EXPECT_NE(cli("stats --data " + (dir / "missing.jsonl").string(), dir).status, 0);
    EXPECT_NE(cli("stats --bogus --data x", dir).status, 0);
    EXPECT_NE(cli("", dir).status, 0);
    write(dir / "broken.jsonl", "{\"record_id\": \"a\"\n");
    EXPECT_NE(cli("stats --data " + (dir / "broken.jsonl").string(), dir).status, 0);
    EXPECT_NE(slurp(dir / "stderr.txt").find("line 1"), std::string::npos);

    const auto src = dir / "src";
    fs::create_directories(src);
    write(src / "t.json", "[{\"Image\": \"a\"}]");
    EXPECT_NE(cli("convert --source " + src.string() + " --out " + (dir / "o.jsonl").string(), dir).status, 0);
    EXPECT_FALSE(fs::exists(dir / "o.jsonl"));
}

TEST(Cli, RunWritesResultsAndManifestReplays) {
    const auto dir = temp_dir("run");
    ASSERT_EQ(cli("synth --n 240 --signal 1 --out " + (dir / "d.jsonl").string(), dir).status, 0);
    write(dir / "cfg.json", small_config(dir / "d.jsonl", dir / "a"));
    ASSERT_EQ(cli("run --config " + (dir / "cfg.json").string() + " --splits 5", dir).status, 0);

    const auto csv = slurp(dir / "a" / "results.csv");
    const auto split_rows = rows_per_cell(csv, "split");
    EXPECT_EQ(split_rows, (std::map<std::string, int>{{"lr", 5}, {"gbt", 5}, {"vlm.llava", 5}, {"vlm.paligemma", 5}}));
    EXPECT_EQ(rows_per_cell(csv, "aggregate").size(), 4u);
    EXPECT_TRUE(fs::exists(dir / "a" / "results.md"));

    const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    EXPECT_EQ(manifest.at("format"), "ntpdetect-manifest");
    EXPECT_EQ(manifest.at("split_seeds").size(), 5u);
    EXPECT_EQ(manifest.at("resolved_config").at("splits").at("n_splits"), 5);

    // Replaying the manifest elsewhere, with a different thread count,
    // reproduces the results byte for byte.
    ASSERT_EQ(cli("--threads 2 --output-dir " + (dir / "b").string() + " run --config " +
                      (dir / "a" / "manifest.json").string(),
                  dir)
                  .status,
              0);
    EXPECT_EQ(slurp(dir / "b" / "results.csv"), csv);
}

TEST(Cli, SavedModelRescoresTrainingRows) {
    const auto dir = temp_dir("score");
    ASSERT_EQ(cli("synth --n 240 --signal 1 --out " + (dir / "d.jsonl").string(), dir).status, 0);
    write(dir / "cfg.json", small_config(dir / "d.jsonl", dir / "out"));
    ASSERT_EQ(cli("run --save-models --config " + (dir / "cfg.json").string(), dir).status, 0);
    const auto model = dir / "out" / "models" / "lr.model.json";
    ASSERT_TRUE(fs::exists(model));

    // Score the whole dataset and compare with the training scores written at
    // fit time.
    ASSERT_EQ(cli("--output-dir " + (dir / "score").string() + " score --model " + model.string() + " --data " +
                      (dir / "d.jsonl").string() + " --out " + (dir / "scores.csv").string(),
                  dir)
                  .status,
              0);
    std::map<std::string, std::string> all;
    {
        std::istringstream in(slurp(dir / "scores.csv"));
        std::string line;
        std::getline(in, line);
        EXPECT_EQ(line, "record_id,score");
        while (std::getline(in, line)) {
            const auto comma = line.find(',');
            all[line.substr(0, comma)] = line.substr(comma + 1);
            EXPECT_TRUE(std::isfinite(std::stod(line.substr(comma + 1))));
        }
    }
    EXPECT_EQ(all.size(), 240u);
    std::istringstream train(slurp(dir / "out" / "models" / "lr.train_scores.csv"));
    std::string line;
    std::getline(train, line);
    int n = 0;
    while (std::getline(train, line)) {
        const auto comma = line.find(',');
        EXPECT_EQ(all.at(line.substr(0, comma)), line.substr(comma + 1));
        ++n;
    }
    EXPECT_EQ(n, 120);
    EXPECT_TRUE(fs::exists(dir / "score" / "manifest.json"));

    // A model whose weights do not match its feature config is rejected.
    auto j = nlohmann::json::parse(slurp(model));
    j["features"]["use_linguistic"] = false;
    write(dir / "bad.model.json", j.dump());
    EXPECT_NE(cli("score --model " + (dir / "bad.model.json").string() + " --data " + (dir / "d.jsonl").string() +
                      " --out " + (dir / "bad.csv").string(),
                  dir)
                  .status,
              0);
}

TEST(Cli, AblateSortsByDelta) {
    const auto dir = temp_dir("ablate");
    ASSERT_EQ(cli("synth --n 240 --signal 1 --out " + (dir / "d.jsonl").string(), dir).status, 0);
    auto cfg = nlohmann::json::parse(small_config(dir / "d.jsonl", dir / "out"));
    cfg["cells"].erase(1);
    write(dir / "cfg.json", cfg.dump());
    ASSERT_EQ(cli("ablate --splits 2 --config " + (dir / "cfg.json").string(), dir).status, 0);
    std::istringstream in(slurp(dir / "out" / "ablation.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "cell,learner,feature,full_mean_auc,mean_auc_without,delta_auc");
    double prev = 1e9;
    int rows = 0;
    while (std::getline(in, line)) {
        const double delta = std::stod(line.substr(line.rfind(',') + 1));
        EXPECT_LE(delta, prev);
        prev = delta;
        ++rows;
    }
    // desc+ling stats at dft_k 1 (5 + 5), cross features (2), pred.llava.
    EXPECT_EQ(rows, 13);
    EXPECT_TRUE(fs::exists(dir / "out" / "ablation.md"));
}

TEST(Cli, SampleConfigsParse) {
    const fs::path samples = NTPDETECT_SAMPLES_DIR;
    const auto c = load_experiment_config(samples / "experiment.json");
    EXPECT_EQ(c.cells.size(), 3u);
    EXPECT_TRUE(c.raw_vlm);
    EXPECT_EQ(c.splits.n_splits, 100u);
    EXPECT_EQ(expand(c.grids.gbt).size(), 864u);
    EXPECT_TRUE(load_experiment_config(samples / "matrix.json").matrix);
}
