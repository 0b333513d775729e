#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "../error.hpp"
#include "../features.hpp"
#include "gbt.hpp"
#include "hyperparams.hpp"
#include "logreg.hpp"
#include "standardize.hpp"
#include "svm.hpp"

namespace ntpdetect {

inline constexpr int kModelSchemaVersion = 1;

/// A fitted classifier plus everything needed to score new records: the
/// training-split standardization (empty for trees) and the feature config.
struct TrainedModel {
    Hyperparams hyperparams;
    Standardizer standardization;
    std::variant<LogRegFit, SvmFit, GbtFit> params;
    FeatureConfig features;
    std::vector<std::string> feature_names;
    std::uint64_t seed = 0;

    [[nodiscard]] LearnerKind kind() const { return kind_of(hyperparams); }
    [[nodiscard]] std::size_t arity() const {
        return std::visit(
            [](const auto& p) -> std::size_t {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, LogRegFit>) return static_cast<std::size_t>(p.weights.size());
                else if constexpr (std::is_same_v<T, SvmFit>) return static_cast<std::size_t>(p.support_vectors.cols());
                else return p.n_features;
            },
            params);
    }
};

/// Fits the learner named by `hp` on raw (unstandardized) features.
/// `svm_gram`, when given, is the kernel matrix of the standardized x.
inline TrainedModel train_model(const Eigen::MatrixXd& x, std::span<const bool> y, const Hyperparams& hp,
                                std::uint64_t seed = 0, const Eigen::MatrixXd* svm_gram = nullptr) {
    TrainedModel m;
    m.hyperparams = hp;
    m.seed = seed;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GbtParams>) {
                m.params = train_gbt(x, y, p, GbtOptions{seed});
            } else {
                m.standardization = standardize_fit(x);
                const Eigen::MatrixXd xs = m.standardization.apply(x);
                if constexpr (std::is_same_v<T, LogRegParams>) m.params = train_logreg(xs, y, p);
                else m.params = train_svm(xs, y, p, svm_gram);
            }
        },
        hp);
    return m;
}

/// Higher score = more likely hallucinated.
inline Eigen::VectorXd predict_scores(const TrainedModel& m, const Eigen::MatrixXd& x) {
    if (static_cast<std::size_t>(x.cols()) != m.arity())
        throw InvalidArgument("predict_scores: model expects " + std::to_string(m.arity()) + " features, got " +
                              std::to_string(x.cols()));
    return std::visit(
        [&](const auto& p) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GbtFit>) return p.decision(x);
            else return p.decision(m.standardization.apply(x));
        },
        m.params);
}

// ---------------------------------------------------------------------------
// JSON document
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json vec_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace detail

inline nlohmann::ordered_json to_json(const TrainedModel& m) {
    nlohmann::ordered_json j;
    j["format"] = "ntpdetect-model";
    j["schema_version"] = kModelSchemaVersion;
    j["kind"] = std::string(to_string(m.kind()));
    j["hyperparams"] = to_json(m.hyperparams);
    j["seed"] = m.seed;
    j["features"] = to_json(m.features);
    j["feature_names"] = m.feature_names;
    j["standardization"] = {{"mean", detail::vec_to_json(m.standardization.mean)},
                            {"std", detail::vec_to_json(m.standardization.std)}};
    nlohmann::ordered_json p;
    std::visit(
        [&](const auto& fit) {
            using T = std::decay_t<decltype(fit)>;
            if constexpr (std::is_same_v<T, LogRegFit>) {
                p["weights"] = detail::vec_to_json(fit.weights);
                p["bias"] = fit.bias;
            } else if constexpr (std::is_same_v<T, SvmFit>) {
                p["kernel"] = fit.kernel == Kernel::linear ? "linear" : "rbf";
                p["gamma"] = fit.gamma;
                p["bias"] = fit.bias;
                p["coef"] = detail::vec_to_json(fit.coef);
                nlohmann::ordered_json sv = nlohmann::ordered_json::array();
                for (Eigen::Index r = 0; r < fit.support_vectors.rows(); ++r)
                    sv.push_back(detail::vec_to_json(fit.support_vectors.row(r).transpose()));
                p["n_features"] = fit.support_vectors.cols();
                p["support_vectors"] = sv;
            } else {
                p["n_features"] = fit.n_features;
                nlohmann::ordered_json trees = nlohmann::ordered_json::array();
                for (const auto& t : fit.trees) {
                    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
                    for (const auto& nd : t.nodes) nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.value});
                    trees.push_back(nodes);
                }
                p["trees"] = trees;
            }
        },
        m.params);
    j["parameters"] = p;
    return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "ntpdetect-model") throw InvalidArgument("not an ntpdetect model document");
    if (j.at("schema_version").get<int>() != kModelSchemaVersion)
        throw InvalidArgument("unsupported model schema_version");
    TrainedModel m;
    m.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.features = feature_config_from_json(j.at("features"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.standardization.mean = detail::vec_from_json(j.at("standardization").at("mean"));
    m.standardization.std = detail::vec_from_json(j.at("standardization").at("std"));
    const auto& p = j.at("parameters");
    switch (m.kind()) {
    case LearnerKind::logreg: {
        LogRegFit fit;
        fit.weights = detail::vec_from_json(p.at("weights"));
        fit.bias = p.at("bias").get<double>();
        m.params = std::move(fit);
        break;
    }
    case LearnerKind::svm: {
        SvmFit fit;
        fit.kernel = p.at("kernel").get<std::string>() == "linear" ? Kernel::linear : Kernel::rbf;
        fit.gamma = p.at("gamma").get<double>();
        fit.bias = p.at("bias").get<double>();
        fit.coef = detail::vec_from_json(p.at("coef"));
        const auto& sv = p.at("support_vectors");
        fit.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), p.at("n_features").get<Eigen::Index>());
        for (std::size_t r = 0; r < sv.size(); ++r)
            fit.support_vectors.row(static_cast<Eigen::Index>(r)) = detail::vec_from_json(sv[r]).transpose();
        m.params = std::move(fit);
        break;
    }
    case LearnerKind::gbt: {
        GbtFit fit;
        fit.n_features = p.at("n_features").get<std::size_t>();
        for (const auto& t : p.at("trees")) {
            Tree tree;
            for (const auto& nd : t)
                tree.nodes.push_back({nd[0].get<int>(), nd[1].get<double>(), nd[2].get<int>(), nd[3].get<int>(),
                                      nd[4].get<double>()});
            fit.trees.push_back(std::move(tree));
        }
        m.params = std::move(fit);
        break;
    }
    }
    return m;
}

inline void save_model(const std::filesystem::path& path, const TrainedModel& m) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write model file '" + path.string() + "'");
    out << to_json(m).dump(1) << '\n';
}

inline TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open model file '" + path.string() + "'");
    try {
        return model_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("model file '" + path.string() + "': " + e.what());
    }
}

} // namespace ntpdetect
