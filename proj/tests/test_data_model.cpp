#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <ntpdetect/ntpdetect.hpp>

#include "oracles.hpp"

using namespace ntpdetect;
namespace fs = std::filesystem;

namespace {

ProbeRecord sample_record(std::string id = "r1") {
    ProbeRecord r;
    r.record_id = std::move(id);
    r.image_id = "img-1";
    r.generator_model = GeneratorModel::llava_1_6;
    r.probe_text = "There is a red bus.";
    r.context_span = "a red bus";
    r.label = true;
    r.description_ntps = {0.9, 0.5, 0.25};
    r.linguistic_ntps = {0.8, 0.4, 0.3};
    r.llava_pred = 0.7;
    return r;
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ntpdetect_dm_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Dataset parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse_dataset(in);
}

} // namespace

TEST(DataModel, RoundTripIsExact) {
    auto r = sample_record();
    r.description_ntps = {0.1 + 0.2, 1.0 / 3.0, 1e-7};
    r.linguistic_ntps = {std::nextafter(1.0, 0.0), 0.5, 0.123456789012345678};
    Dataset d({r, sample_record("r2")});
    const auto text = serialize_dataset(d);
    const Dataset back = parse_text(text);
    EXPECT_EQ(back, d);
    EXPECT_EQ(serialize_dataset(back), text);
}

TEST(DataModel, NullPredictorsRoundTrip) {
    Dataset d({sample_record()});
    const auto text = serialize_dataset(d);
    EXPECT_NE(text.find("\"paligemma_pred\":null"), std::string::npos);
    EXPECT_FALSE(parse_text(text)[0].paligemma_pred.has_value());
    EXPECT_TRUE(d.has_llava_pred());
    EXPECT_FALSE(d.has_paligemma_pred());
}

TEST(DataModel, LengthMismatchNamesRecordAndField) {
    auto r = sample_record("bad-7");
    r.linguistic_ntps.pop_back();
    try {
        validate(r);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.record_id(), "bad-7");
        EXPECT_EQ(e.field(), "linguistic_ntps");
    }
}

TEST(DataModel, ProbabilityBounds) {
    auto r = sample_record();
    r.description_ntps[1] = 0.0;
    EXPECT_THROW(validate(r), ValidationError);
    r.description_ntps[1] = 1.0;
    EXPECT_NO_THROW(validate(r));
    r.description_ntps[1] = 1.0000001;
    EXPECT_THROW(validate(r), ValidationError);
    r = sample_record();
    r.llava_pred = 1.5;
    EXPECT_THROW(validate(r), ValidationError);
    r.llava_pred = 0.0;
    EXPECT_NO_THROW(validate(r));
}

TEST(DataModel, EmptyAndDuplicateRecords) {
    auto r = sample_record();
    r.description_ntps.clear();
    r.linguistic_ntps.clear();
    EXPECT_THROW(validate(r), ValidationError);
    r = sample_record();
    r.record_id.clear();
    EXPECT_THROW(validate(r), ValidationError);
    EXPECT_THROW(Dataset({sample_record("a"), sample_record("a")}), ValidationError);
}

TEST(DataModel, ParseErrorsCarryLine) {
    const auto good = to_json(sample_record("x")).dump();
    try {
        parse_text(good + "\n\n{not json}\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    auto j = nlohmann::json::parse(good);
    j["label"] = "yes";
    EXPECT_THROW(parse_text(j.dump()), ParseError);
    j = nlohmann::json::parse(good);
    j["extra"] = 1;
    EXPECT_THROW(parse_text(j.dump()), ParseError);
    j = nlohmann::json::parse(good);
    j.erase("image_id");
    EXPECT_THROW(parse_text(j.dump()), ParseError);
    j = nlohmann::json::parse(good);
    j["generator_model"] = "llava-2";
    EXPECT_THROW(parse_text(j.dump()), ParseError);
}

TEST(DataModel, EmptyInputIsAnError) {
    EXPECT_THROW(parse_text(""), InvalidArgument);
    EXPECT_THROW(parse_text("\n  \n"), InvalidArgument);
    EXPECT_THROW(load_dataset("/nonexistent/file.jsonl"), InvalidArgument);
}

TEST(DataModel, DuplicateIdInFileReportsLine) {
    const auto line = to_json(sample_record("dup")).dump();
    try {
        parse_text(line + "\n" + line + "\n");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(DataModel, LabelsAreContiguous) {
    Dataset d({sample_record("a"), [] {
                   auto r = sample_record("b");
                   r.label = false;
                   return r;
               }()});
    const auto y = d.labels();
    std::span<const bool> view = y;
    ASSERT_EQ(view.size(), 2u);
    EXPECT_TRUE(view[0]);
    EXPECT_FALSE(view[1]);
    LabelVector copy = y;
    copy[0] = false;
    EXPECT_TRUE(y[0]);
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

TEST(Stats, SpearmanMatchesExplicitRankOracle) {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.index(40);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            // Coarse values force plenty of ties.
            a[i] = static_cast<double>(rng.index(trial % 2 ? 5 : 1000));
            b[i] = a[i] * 0.5 + static_cast<double>(rng.index(7));
        }
        const auto got = spearman(a, b);
        const bool a_const = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
        const bool b_const = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
        if (a_const || b_const) {
            EXPECT_FALSE(got.has_value());
            continue;
        }
        ASSERT_TRUE(got.has_value());
        EXPECT_NEAR(*got, oracle::spearman(a, b), 1e-12) << "trial " << trial;
    }
}

TEST(Stats, SpearmanEdgeCases) {
    const std::vector<double> up{1, 2, 3, 4}, down{4, 3, 2, 1};
    EXPECT_DOUBLE_EQ(*spearman(up, up), 1.0);
    EXPECT_DOUBLE_EQ(*spearman(up, down), -1.0);
    const std::vector<double> one{1};
    EXPECT_THROW(spearman(one, one), InvalidArgument);
    EXPECT_THROW(spearman(up, one), InvalidArgument);
}

TEST(Stats, DatasetStatsMatchesDirectCount) {
    const auto d = synth_generate(500, 1.0, 5);
    const auto s = dataset_stats(d);
    std::size_t pos = 0, maxlen = 0;
    std::vector<double> rhos;
    for (const auto& r : d.records()) {
        pos += r.label;
        maxlen = std::max(maxlen, r.description_ntps.size());
        rhos.push_back(oracle::spearman(r.description_ntps, r.linguistic_ntps));
    }
    EXPECT_EQ(s.n_records, 500u);
    EXPECT_EQ(s.n_positive, pos);
    EXPECT_EQ(s.max_seq_len, maxlen);
    double mean = 0;
    for (double v : rhos) mean += v / static_cast<double>(rhos.size());
    EXPECT_NEAR(*s.mean_spearman, mean, 1e-9);
    std::size_t hist_total = 0;
    for (const auto& [len, count] : s.seq_len_histogram) hist_total += count;
    EXPECT_EQ(hist_total, 500u);
    EXPECT_EQ(s.generator_counts.at("llava-1.6") + s.generator_counts.at("llava-1.5"), 500u);
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

TEST(Synth, MatchesConstruction) {
    const auto d = synth_generate(4000, 1.0, 9);
    const auto s = dataset_stats(d);
    // Bernoulli(0.429) over 4000 draws: sd ~0.008.
    EXPECT_NEAR(s.positive_rate, 0.429, 0.03);
    EXPECT_LE(s.max_seq_len, 24u);
    for (const auto& r : d.records()) {
        EXPECT_GE(r.description_ntps.size(), 3u);
        EXPECT_TRUE(r.llava_pred && r.paligemma_pred);
    }
    // Shared per-token pattern with variance 0.64 against private noise 0.09
    // makes the two sequences strongly rank-correlated.
    EXPECT_GT(*s.mean_spearman, 0.6);
    EXPECT_EQ(s.generator_counts.at("llava-1.6"), 4u * (1000 * 4 / 7));
}

TEST(Synth, DeterministicAndSeedSensitive) {
    EXPECT_EQ(serialize_dataset(synth_generate(50, 1.0, 1)), serialize_dataset(synth_generate(50, 1.0, 1)));
    EXPECT_NE(serialize_dataset(synth_generate(50, 1.0, 1)), serialize_dataset(synth_generate(50, 1.0, 2)));
}

TEST(Synth, SignalShiftsDescriptionMean) {
    const auto d = synth_generate(3000, 2.0, 4);
    double pos = 0, neg = 0;
    std::size_t np = 0, nn = 0;
    for (const auto& r : d.records()) {
        double m = 0;
        for (double v : r.description_ntps) m += v / static_cast<double>(r.description_ntps.size());
        (r.label ? pos : neg) += m;
        (r.label ? np : nn) += 1;
    }
    EXPECT_LT(pos / static_cast<double>(np), neg / static_cast<double>(nn) - 0.05);
}

// ---------------------------------------------------------------------------
// Published-table converter
// ---------------------------------------------------------------------------

namespace {

nlohmann::json published_row(int image, bool whole_sequence) {
    nlohmann::json row;
    row["Image"] = "COCO_" + std::to_string(image) + ".jpg";
    row["Model"] = image % 2 ? "llava-v1.6-mistral" : "llava-1.5-7b";
    for (int i = 1; i <= 4; ++i) {
        const auto s = std::to_string(i);
        row["Probe " + s] = "probe " + s + " of " + std::to_string(image);
        row["Context " + s] = "span " + s;
        row["Label " + s] = (i + image) % 3 == 0;
        row["LLaVA Pred " + s] = 0.1 * i;
        row["PaliGemma Pred " + s] = 0.2 * i;
        if (!whole_sequence) {
            row["Description NTPs " + s] = std::vector<double>(static_cast<std::size_t>(i + 1), 0.5);
            row["Linguistic NTPs " + s] = std::vector<double>(static_cast<std::size_t>(i + 1), 0.25);
        }
    }
    if (whole_sequence) {
        row["Description NTPs"] = std::vector<double>{0.9, 0.8, 0.7};
        row["Linguistic NTPs"] = std::vector<double>{0.6, 0.5, 0.4};
    }
    return row;
}

} // namespace

TEST(Convert, RowsExpandToFourProbes) {
    const auto dir = temp_dir("convert_rows");
    {
        std::ofstream out(dir / "part-0.json");
        out << nlohmann::json::array({published_row(1, false), published_row(2, false)}).dump();
        std::ofstream out2(dir / "part-1.jsonl");
        out2 << published_row(3, false).dump() << "\n";
    }
    const auto res = convert_published(dir);
    EXPECT_EQ(res.rows, 3u);
    ASSERT_EQ(res.dataset.size(), 12u);
    const auto& r = res.dataset[1];
    EXPECT_EQ(r.image_id, "COCO_1.jpg");
    EXPECT_EQ(r.record_id, "COCO_1.jpg#2");
    EXPECT_EQ(r.generator_model, GeneratorModel::llava_1_6);
    EXPECT_EQ(r.description_ntps.size(), 3u);
    EXPECT_DOUBLE_EQ(*r.paligemma_pred, 0.4);
    // Default semantics: a true published label marks a correct probe.
    EXPECT_EQ(r.label, !((2 + 1) % 3 == 0));
    ConvertOptions flipped;
    flipped.label_semantics = LabelSemantics::probe_is_hallucinated;
    EXPECT_EQ(convert_published(dir, flipped).dataset[1].label, (2 + 1) % 3 == 0);
}

TEST(Convert, ColumnarAndWholeSequence) {
    const auto dir = temp_dir("convert_columnar");
    nlohmann::json columns;
    for (int image : {5, 6}) {
        const auto row = published_row(image, true);
        for (const auto& [k, v] : row.items()) columns[k].push_back(v);
    }
    std::ofstream(dir / "table.json") << columns.dump();
    const auto res = convert_published(dir);
    ASSERT_EQ(res.dataset.size(), 8u);
    EXPECT_EQ(res.dataset[0].description_ntps, (std::vector<double>{0.9, 0.8, 0.7}));
    EXPECT_FALSE(res.notes.empty());
}

TEST(Convert, DeterministicBytesAndNoPartialOutput) {
    const auto dir = temp_dir("convert_bytes");
    std::ofstream(dir / "a.json") << nlohmann::json::array({published_row(1, false)}).dump();
    const auto out_dir = temp_dir("convert_bytes_out");
    const auto out1 = out_dir / "o1.jsonl", out2 = out_dir / "o2.jsonl";
    convert_published_to(dir, out1);
    convert_published_to(dir, out2);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    EXPECT_EQ(slurp(out1), slurp(out2));

    const auto bad = temp_dir("convert_bad");
    auto row = published_row(1, false);
    row.erase("Label 3");
    std::ofstream(bad / "a.json") << nlohmann::json::array({row}).dump();
    EXPECT_THROW(convert_published_to(bad, out_dir / "bad.jsonl"), Error);
    EXPECT_FALSE(fs::exists(out_dir / "bad.jsonl"));
    EXPECT_THROW(convert_published(temp_dir("convert_empty")), Error);
}
