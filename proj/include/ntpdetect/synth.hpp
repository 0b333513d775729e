#pragma once

// Synthetic probe datasets for tests and demos.
//
// Each record has a latent per-probe confidence z ~ N(0,1). Description NTP
// logits are 2 + 0.8 * (z - s * label) plus a per-token pattern shared with the
// Linguistic NTPs and a little private noise, so the two sequences are strongly
// rank-correlated. Hallucinated records (label = true) are shifted down by
// `signal_strength` standard deviations of the latent; predictor scores carry a
// label signal scaled the same way. signal_strength = 0 makes every field
// independent of the label.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace ntpdetect {

struct SynthOptions {
    double positive_rate = 0.429;
    std::size_t min_len = 3;
    std::size_t max_len = 24;
    std::size_t probes_per_image = 4;
};

inline Dataset synth_generate(std::size_t n, double signal_strength, std::uint64_t seed,
                              const SynthOptions& opt = {}) {
    if (n < 4) throw InvalidArgument("synth_generate: n must be at least 4");
    if (!(signal_strength >= 0.0)) throw InvalidArgument("synth_generate: signal_strength must be >= 0");
    if (opt.min_len < 1 || opt.max_len < opt.min_len) throw InvalidArgument("synth_generate: bad length range");

    auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    auto to_ntp = [&](double logit) { return std::clamp(sigmoid(logit), 1e-6, 1.0); };

    Rng rng(seed);
    const std::size_t n_images = (n + opt.probes_per_image - 1) / opt.probes_per_image;
    const std::size_t n_llava16 = n_images * 4 / 7;

    std::vector<ProbeRecord> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t image = i / opt.probes_per_image;
        ProbeRecord r;
        r.record_id = "synth-" + std::to_string(i);
        r.image_id = "img-" + std::to_string(image);
        r.generator_model = image < n_llava16 ? GeneratorModel::llava_1_6 : GeneratorModel::llava_1_5;
        r.probe_text = "synthetic probe " + std::to_string(i);
        r.context_span = "<span>" + std::to_string(i) + "</span>";
        r.label = rng.bernoulli(opt.positive_rate);

        const double shift = r.label ? signal_strength : 0.0;
        const double level = 2.0 + 0.8 * (rng.normal() - shift);
        const auto len = opt.min_len + static_cast<std::size_t>(rng.index(opt.max_len - opt.min_len + 1));
        r.description_ntps.reserve(len);
        r.linguistic_ntps.reserve(len);
        for (std::size_t t = 0; t < len; ++t) {
            const double pattern = 0.8 * rng.normal();
            r.description_ntps.push_back(to_ntp(level + pattern + 0.3 * rng.normal()));
            r.linguistic_ntps.push_back(to_ntp(1.5 + pattern + 0.3 * rng.normal()));
        }
        r.llava_pred = sigmoid(1.0 - 0.4 * shift + rng.normal());
        r.paligemma_pred = sigmoid(1.0 - 0.9 * shift + rng.normal());
        records.push_back(std::move(r));
    }
    return Dataset(std::move(records));
}

} // namespace ntpdetect
