#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "../error.hpp"

namespace ntpdetect {

enum class LearnerKind { logreg, svm, gbt };

inline std::string_view to_string(LearnerKind k) {
    switch (k) {
    case LearnerKind::logreg: return "logreg";
    case LearnerKind::svm: return "svm";
    case LearnerKind::gbt: return "gbt";
    }
    return "?";
}

inline LearnerKind parse_learner_kind(std::string_view s) {
    if (s == "logreg" || s == "lr") return LearnerKind::logreg;
    if (s == "svm") return LearnerKind::svm;
    if (s == "gbt" || s == "xgboost") return LearnerKind::gbt;
    throw InvalidArgument("unknown learner '" + std::string(s) + "'");
}

enum class Penalty { l1, l2 };
enum class Kernel { linear, rbf };

struct LogRegParams {
    double C = 1.0;
    Penalty penalty = Penalty::l2;
    bool operator==(const LogRegParams&) const = default;
};

/// rbf kernel coefficient: a number, or resolved from the training matrix.
struct GammaSpec {
    enum class Mode { scale, automatic, value } mode = Mode::scale;
    double value = 0.0;

    static GammaSpec scale() { return {Mode::scale, 0.0}; }
    static GammaSpec automatic() { return {Mode::automatic, 0.0}; }
    static GammaSpec fixed(double v) { return {Mode::value, v}; }
    bool operator==(const GammaSpec&) const = default;
};

struct SvmParams {
    double C = 1.0;
    Kernel kernel = Kernel::rbf;
    GammaSpec gamma = GammaSpec::scale();
    bool operator==(const SvmParams&) const = default;
};

struct GbtParams {
    int max_depth = 3;
    double learning_rate = 0.1;
    double min_child_weight = 1.0;
    double gamma = 0.0;
    double subsample = 1.0;
    double colsample = 1.0;
    double alpha = 0.0;
    double lambda = 1.0;
    int n_rounds = 100;
    bool operator==(const GbtParams&) const = default;
};

using Hyperparams = std::variant<LogRegParams, SvmParams, GbtParams>;

inline LearnerKind kind_of(const Hyperparams& hp) {
    return static_cast<LearnerKind>(hp.index());
}

// ---------------------------------------------------------------------------
// Search grids. Axes are enumerated in the listed order with the first axis
// outermost; grid_search breaks ties by this order.
// ---------------------------------------------------------------------------

struct LogRegGrid {
    std::vector<double> C{0.1, 1, 10, 100};
    std::vector<Penalty> penalty{Penalty::l1, Penalty::l2};
};

struct SvmGrid {
    std::vector<double> C{0.1, 1, 10, 100};
    std::vector<Kernel> kernel{Kernel::linear, Kernel::rbf};
    std::vector<GammaSpec> gamma{GammaSpec::scale(),      GammaSpec::automatic(),   GammaSpec::fixed(1),
                                 GammaSpec::fixed(0.1),   GammaSpec::fixed(0.01),   GammaSpec::fixed(0.001)};
};

struct GbtGrid {
    std::vector<int> max_depth{3, 5};
    std::vector<double> learning_rate{0.1, 0.2};
    std::vector<double> min_child_weight{3, 5, 7};
    std::vector<double> gamma{0.01, 0.1};
    std::vector<double> subsample{0.6, 0.7};
    std::vector<double> colsample{0.6, 0.7};
    std::vector<double> alpha{0.1, 1, 10};
    std::vector<double> lambda{1, 10, 100};
    int n_rounds = 100;
};

struct GridSet {
    LogRegGrid logreg;
    SvmGrid svm;
    GbtGrid gbt;
};

inline std::vector<Hyperparams> expand(const LogRegGrid& g) {
    std::vector<Hyperparams> out;
    for (double c : g.C)
        for (Penalty p : g.penalty) out.emplace_back(LogRegParams{c, p});
    return out;
}

/// gamma does not enter the linear kernel, so linear points appear once per C.
inline std::vector<Hyperparams> expand(const SvmGrid& g) {
    std::vector<Hyperparams> out;
    for (double c : g.C)
        for (Kernel k : g.kernel) {
            if (k == Kernel::linear) {
                out.emplace_back(SvmParams{c, k, GammaSpec::scale()});
                continue;
            }
            for (const auto& gamma : g.gamma) out.emplace_back(SvmParams{c, k, gamma});
        }
    return out;
}

inline std::vector<Hyperparams> expand(const GbtGrid& g) {
    std::vector<Hyperparams> out;
    for (int depth : g.max_depth)
        for (double lr : g.learning_rate)
            for (double mcw : g.min_child_weight)
                for (double gamma : g.gamma)
                    for (double ss : g.subsample)
                        for (double cs : g.colsample)
                            for (double alpha : g.alpha)
                                for (double lambda : g.lambda)
                                    out.emplace_back(GbtParams{depth, lr, mcw, gamma, ss, cs, alpha, lambda, g.n_rounds});
    return out;
}

inline std::vector<Hyperparams> expand(const GridSet& grids, LearnerKind kind) {
    switch (kind) {
    case LearnerKind::logreg: return expand(grids.logreg);
    case LearnerKind::svm: return expand(grids.svm);
    case LearnerKind::gbt: return expand(grids.gbt);
    }
    return {};
}

// ---------------------------------------------------------------------------
// Text and JSON forms
// ---------------------------------------------------------------------------

inline std::string to_string(const GammaSpec& g) {
    switch (g.mode) {
    case GammaSpec::Mode::scale: return "scale";
    case GammaSpec::Mode::automatic: return "auto";
    case GammaSpec::Mode::value: {
        std::ostringstream s;
        s << g.value;
        return s.str();
    }
    }
    return "?";
}

inline GammaSpec parse_gamma(const nlohmann::json& j) {
    if (j.is_number()) return GammaSpec::fixed(j.get<double>());
    const auto s = j.get<std::string>();
    if (s == "scale") return GammaSpec::scale();
    if (s == "auto") return GammaSpec::automatic();
    throw InvalidArgument("unknown svm gamma '" + s + "'");
}

inline nlohmann::ordered_json gamma_to_json(const GammaSpec& g) {
    if (g.mode == GammaSpec::Mode::value) return g.value;
    return to_string(g);
}

/// Compact "key=value;..." form used in CSV reports.
inline std::string describe(const Hyperparams& hp) {
    std::ostringstream s;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LogRegParams>) {
                s << "C=" << p.C << ";penalty=" << (p.penalty == Penalty::l1 ? "l1" : "l2");
            } else if constexpr (std::is_same_v<T, SvmParams>) {
                s << "C=" << p.C << ";kernel=" << (p.kernel == Kernel::linear ? "linear" : "rbf");
                if (p.kernel == Kernel::rbf) s << ";gamma=" << to_string(p.gamma);
            } else {
                s << "max_depth=" << p.max_depth << ";learning_rate=" << p.learning_rate
                  << ";min_child_weight=" << p.min_child_weight << ";gamma=" << p.gamma << ";subsample=" << p.subsample
                  << ";colsample=" << p.colsample << ";alpha=" << p.alpha << ";lambda=" << p.lambda
                  << ";n_rounds=" << p.n_rounds;
            }
        },
        hp);
    return s.str();
}

inline nlohmann::ordered_json to_json(const Hyperparams& hp) {
    nlohmann::ordered_json j;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LogRegParams>) {
                j["learner"] = "logreg";
                j["C"] = p.C;
                j["penalty"] = p.penalty == Penalty::l1 ? "l1" : "l2";
            } else if constexpr (std::is_same_v<T, SvmParams>) {
                j["learner"] = "svm";
                j["C"] = p.C;
                j["kernel"] = p.kernel == Kernel::linear ? "linear" : "rbf";
                j["gamma"] = gamma_to_json(p.gamma);
            } else {
                j["learner"] = "gbt";
                j["max_depth"] = p.max_depth;
                j["learning_rate"] = p.learning_rate;
                j["min_child_weight"] = p.min_child_weight;
                j["gamma"] = p.gamma;
                j["subsample"] = p.subsample;
                j["colsample"] = p.colsample;
                j["alpha"] = p.alpha;
                j["lambda"] = p.lambda;
                j["n_rounds"] = p.n_rounds;
            }
        },
        hp);
    return j;
}

inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
    const auto kind = parse_learner_kind(j.at("learner").get<std::string>());
    switch (kind) {
    case LearnerKind::logreg: {
        const auto pen = j.at("penalty").get<std::string>();
        if (pen != "l1" && pen != "l2") throw InvalidArgument("unknown penalty '" + pen + "'");
        return LogRegParams{j.at("C").get<double>(), pen == "l1" ? Penalty::l1 : Penalty::l2};
    }
    case LearnerKind::svm: {
        const auto kernel = j.at("kernel").get<std::string>();
        if (kernel != "linear" && kernel != "rbf") throw InvalidArgument("unknown kernel '" + kernel + "'");
        return SvmParams{j.at("C").get<double>(), kernel == "linear" ? Kernel::linear : Kernel::rbf,
                         parse_gamma(j.at("gamma"))};
    }
    case LearnerKind::gbt:
        return GbtParams{j.at("max_depth").get<int>(),        j.at("learning_rate").get<double>(),
                         j.at("min_child_weight").get<double>(), j.at("gamma").get<double>(),
                         j.at("subsample").get<double>(),        j.at("colsample").get<double>(),
                         j.at("alpha").get<double>(),            j.at("lambda").get<double>(),
                         j.at("n_rounds").get<int>()};
    }
    throw InvalidArgument("unknown learner");
}

} // namespace ntpdetect
