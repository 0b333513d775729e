#pragma once

// Second-order gradient boosted trees on the logistic loss.
//
// Each round fits a depth-limited regression tree to the gradient g = p - y and
// hessian h = p(1 - p) of the current margins. Split candidates come from
// per-feature histograms (at most `max_bins` bins, exact when a feature has
// fewer distinct training values). With T(G) = sign(G) max(|G| - alpha, 0):
//     leaf weight = -T(G) / (H + lambda)
//     gain        = 0.5 [T(G_L)^2/(H_L+lambda) + T(G_R)^2/(H_R+lambda) - T(G)^2/(H+lambda)] - gamma
// A split is kept only when gain > 0 and both children carry hessian mass of at
// least min_child_weight. Row (Bernoulli, `subsample`) and column (`colsample`
// of the features, at least one) sampling are redrawn every round from a seeded
// generator. Scores are margins (sum of scaled leaf values), starting from 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "../error.hpp"
#include "../rng.hpp"
#include "hyperparams.hpp"

namespace ntpdetect {

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0; // rows with value < threshold go left
    int left = -1;
    int right = -1;
    double value = 0.0; // leaf output, already scaled by the learning rate
};

struct Tree {
    std::vector<TreeNode> nodes;

    /// Output for row `i` of x.
    [[nodiscard]] double predict(const Eigen::MatrixXd& x, Eigen::Index i) const {
        int at = 0;
        while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
            const auto& node = nodes[static_cast<std::size_t>(at)];
            at = x(i, node.feature) < node.threshold ? node.left : node.right;
        }
        return nodes[static_cast<std::size_t>(at)].value;
    }
};

struct GbtFit {
    std::vector<Tree> trees;
    std::size_t n_features = 0;
    /// Mean training log-loss after each round (only with GbtOptions::track_loss).
    std::vector<double> loss_trace;

    [[nodiscard]] Eigen::VectorXd decision(const Eigen::MatrixXd& x) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            double m = 0.0;
            for (const auto& t : trees) m += t.predict(x, i);
            out(i) = m;
        }
        return out;
    }
};

struct GbtOptions {
    std::uint64_t seed = 0;
    int max_bins = 256;
    bool track_loss = false;
};

namespace detail {

inline double soft_threshold(double g, double alpha) {
    if (g > alpha) return g - alpha;
    if (g < -alpha) return g + alpha;
    return 0.0;
}

inline double leaf_score(double g, double h, const GbtParams& p) {
    const double t = soft_threshold(g, p.alpha);
    return t * t / (h + p.lambda);
}

/// Per-feature cut points; bin(x) = number of cuts <= x.
struct Binning {
    std::vector<std::vector<double>> cuts;
    std::vector<std::vector<std::uint16_t>> bins; // [feature][row]

    Binning(const Eigen::MatrixXd& x, int max_bins) {
        const auto n = static_cast<std::size_t>(x.rows());
        cuts.resize(static_cast<std::size_t>(x.cols()));
        bins.resize(static_cast<std::size_t>(x.cols()));
        std::vector<double> sorted(n);
        for (Eigen::Index f = 0; f < x.cols(); ++f) {
            for (std::size_t i = 0; i < n; ++i) sorted[i] = x(static_cast<Eigen::Index>(i), f);
            std::sort(sorted.begin(), sorted.end());
            std::vector<double> uniq;
            std::unique_copy(sorted.begin(), sorted.end(), std::back_inserter(uniq));
            auto& c = cuts[static_cast<std::size_t>(f)];
            if (uniq.size() <= static_cast<std::size_t>(max_bins)) {
                for (std::size_t k = 1; k < uniq.size(); ++k) c.push_back(0.5 * (uniq[k - 1] + uniq[k]));
            } else {
                for (int b = 1; b < max_bins; ++b) {
                    const auto pos = static_cast<std::size_t>(static_cast<double>(b) * static_cast<double>(n) / max_bins);
                    const double lo = sorted[pos - 1], hi = sorted[pos];
                    if (lo < hi && (c.empty() || 0.5 * (lo + hi) > c.back())) c.push_back(0.5 * (lo + hi));
                }
            }
            auto& b = bins[static_cast<std::size_t>(f)];
            b.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double v = x(static_cast<Eigen::Index>(i), f);
                b[i] = static_cast<std::uint16_t>(std::upper_bound(c.begin(), c.end(), v) - c.begin());
            }
        }
    }
};

} // namespace detail

inline GbtFit train_gbt(const Eigen::MatrixXd& x, std::span<const bool> y, const GbtParams& hp,
                        const GbtOptions& opt = {}) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (y.size() != n) throw InvalidArgument("label count does not match row count");
    if (n < 2) throw InvalidArgument("gbt: need at least two examples");
    const auto pos = std::count(y.begin(), y.end(), true);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(n)) throw TrainingError("training data contains a single class");
    if (hp.max_depth < 0 || hp.n_rounds < 0 || !(hp.subsample > 0 && hp.subsample <= 1) ||
        !(hp.colsample > 0 && hp.colsample <= 1) || !(hp.lambda >= 0) || !(hp.alpha >= 0))
        throw InvalidArgument("gbt: hyperparameter out of range");
    if (opt.max_bins < 2 || opt.max_bins > 65535) throw InvalidArgument("gbt: max_bins out of range");

    const std::size_t d = static_cast<std::size_t>(x.cols());
    const detail::Binning binning(x, opt.max_bins);
    Rng rng(opt.seed);

    GbtFit fit;
    fit.n_features = d;
    std::vector<double> margin(n, 0.0), grad(n), hess(n);
    std::vector<std::size_t> all_features(d);
    std::iota(all_features.begin(), all_features.end(), std::size_t{0});

    struct Pending {
        int node;
        int depth;
        std::vector<std::size_t> rows;
        double g;
        double h;
    };
    struct Bin {
        double g = 0.0, h = 0.0;
    };
    std::size_t widest = 0;
    for (const auto& c : binning.cuts) widest = std::max(widest, c.size());
    std::vector<Bin> hist(widest + 1); // kept zeroed between uses
    std::vector<std::uint16_t> touched;

    for (int round = 0; round < hp.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-margin[i]));
            grad[i] = p - (y[i] ? 1.0 : 0.0);
            hess[i] = std::max(p * (1.0 - p), 1e-16);
        }
        std::vector<std::size_t> rows;
        rows.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            if (hp.subsample >= 1.0 || rng.bernoulli(hp.subsample)) rows.push_back(i);
        std::vector<std::size_t> features = all_features;
        if (hp.colsample < 1.0) {
            const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(hp.colsample * static_cast<double>(d)));
            // Partial Fisher-Yates, then restore index order.
            for (std::size_t k = 0; k < keep && k + 1 < features.size(); ++k)
                std::swap(features[k], features[k + static_cast<std::size_t>(rng.index(features.size() - k))]);
            features.resize(keep);
            std::sort(features.begin(), features.end());
        }

        Tree tree;
        tree.nodes.emplace_back();
        std::vector<std::size_t> node_cut(1, 0); // split position in bin space
        double g0 = 0.0, h0 = 0.0;
        for (auto i : rows) {
            g0 += grad[i];
            h0 += hess[i];
        }
        std::vector<Pending> stack;
        stack.push_back({0, 0, std::move(rows), g0, h0});
        while (!stack.empty()) {
            Pending cur = std::move(stack.back());
            stack.pop_back();
            const auto make_leaf = [&] {
                tree.nodes[static_cast<std::size_t>(cur.node)].value =
                    -hp.learning_rate * detail::soft_threshold(cur.g, hp.alpha) / (cur.h + hp.lambda);
            };
            if (cur.depth >= hp.max_depth || cur.rows.size() < 2) {
                make_leaf();
                continue;
            }
            const double parent = detail::leaf_score(cur.g, cur.h, hp);
            double best_gain = 0.0;
            int best_feature = -1;
            std::size_t best_cut = 0;
            for (auto f : features) {
                const auto& cuts = binning.cuts[f];
                if (cuts.empty()) continue;
                const auto& fb = binning.bins[f];
                touched.clear();
                for (auto i : cur.rows) {
                    auto& bin = hist[fb[i]];
                    if (bin.h == 0.0) touched.push_back(fb[i]);
                    bin.g += grad[i];
                    bin.h += hess[i];
                }
                // Candidate cut c sends bins <= c left. Only non-empty bins give
                // distinct partitions, so visit just those, in order.
                double gl = 0.0, hl = 0.0;
                const auto consider = [&](std::size_t c) {
                    gl += hist[c].g;
                    hl += hist[c].h;
                    if (c >= cuts.size()) return;
                    const double gr = cur.g - gl, hr = cur.h - hl;
                    if (hl < hp.min_child_weight || hr < hp.min_child_weight) return;
                    if (hl <= 0.0 || hr <= 0.0) return;
                    const double gain =
                        0.5 * (detail::leaf_score(gl, hl, hp) + detail::leaf_score(gr, hr, hp) - parent) - hp.gamma;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feature = static_cast<int>(f);
                        best_cut = c;
                    }
                };
                if (touched.size() * 8 < cuts.size()) {
                    std::sort(touched.begin(), touched.end());
                    for (auto c : touched) consider(c);
                } else {
                    for (std::size_t c = 0; c <= cuts.size(); ++c)
                        if (hist[c].h != 0.0) consider(c);
                }
                for (auto c : touched) hist[c] = Bin{};
            }
            if (best_feature < 0) {
                make_leaf();
                continue;
            }
            const auto bf = static_cast<std::size_t>(best_feature);
            const auto& fb = binning.bins[bf];
            Pending left{static_cast<int>(tree.nodes.size()), cur.depth + 1, {}, 0.0, 0.0};
            Pending right{static_cast<int>(tree.nodes.size() + 1), cur.depth + 1, {}, 0.0, 0.0};
            for (auto i : cur.rows) {
                auto& side = fb[i] <= best_cut ? left : right;
                side.rows.push_back(i);
                side.g += grad[i];
                side.h += hess[i];
            }
            auto& node = tree.nodes[static_cast<std::size_t>(cur.node)];
            node.feature = best_feature;
            node.threshold = binning.cuts[bf][best_cut];
            node.left = left.node;
            node.right = right.node;
            node_cut[static_cast<std::size_t>(cur.node)] = best_cut;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            node_cut.resize(tree.nodes.size(), 0);
            stack.push_back(std::move(right));
            stack.push_back(std::move(left));
        }

        // Same routing as Tree::predict: x < cuts[c] exactly when bin(x) <= c.
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t at = 0;
            while (tree.nodes[at].feature >= 0) {
                const auto& node = tree.nodes[at];
                at = static_cast<std::size_t>(binning.bins[static_cast<std::size_t>(node.feature)][i] <= node_cut[at]
                                                  ? node.left
                                                  : node.right);
            }
            margin[i] += tree.nodes[at].value;
            if (opt.track_loss) {
                const double m = y[i] ? margin[i] : -margin[i];
                loss += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
            }
        }
        if (opt.track_loss) fit.loss_trace.push_back(loss / static_cast<double>(n));
        fit.trees.push_back(std::move(tree));
    }
    return fit;
}

} // namespace ntpdetect
