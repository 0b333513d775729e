#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../data_model.hpp"
#include "../error.hpp"
#include "../rng.hpp"

namespace ntpdetect {

struct SplitSpec {
    std::size_t train_n = 1000;
    std::size_t val_n = 200;
    std::size_t test_n = 200;
    std::size_t n_splits = 100;
    std::uint64_t base_seed = 0;
    /// Keep all probes of one image in the same partition.
    bool group_by_image = false;

    bool operator==(const SplitSpec&) const = default;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

inline std::uint64_t split_seed(const SplitSpec& s, std::size_t index) { return s.base_seed + index; }

/// Split i shuffles record indices with seed base_seed + i and cuts the
/// permutation into train / val / test. With group_by_image, whole images are
/// shuffled and each goes to the first partition with room for all its probes.
inline std::vector<Split> make_splits(const Dataset& d, const SplitSpec& s) {
    if (s.train_n == 0 || s.val_n == 0 || s.test_n == 0) throw InvalidArgument("make_splits: partition sizes must be positive");
    if (s.n_splits == 0) throw InvalidArgument("make_splits: n_splits must be positive");
    if (s.train_n + s.val_n + s.test_n > d.size())
        throw InvalidArgument("make_splits: dataset of " + std::to_string(d.size()) + " records is too small for " +
                              std::to_string(s.train_n) + "/" + std::to_string(s.val_n) + "/" +
                              std::to_string(s.test_n));
    std::vector<std::vector<std::size_t>> groups;
    if (s.group_by_image) {
        std::map<std::string, std::size_t> slot;
        for (std::size_t i = 0; i < d.size(); ++i) {
            auto [it, inserted] = slot.emplace(d[i].image_id, groups.size());
            if (inserted) groups.emplace_back();
            groups[it->second].push_back(i);
        }
    }

    std::vector<Split> out(s.n_splits);
    for (std::size_t k = 0; k < s.n_splits; ++k) {
        Rng rng(split_seed(s, k));
        Split& sp = out[k];
        if (!s.group_by_image) {
            std::vector<std::size_t> perm(d.size());
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            rng.shuffle(std::span<std::size_t>(perm));
            sp.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(s.train_n));
            sp.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(s.train_n),
                          perm.begin() + static_cast<std::ptrdiff_t>(s.train_n + s.val_n));
            sp.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(s.train_n + s.val_n),
                           perm.begin() + static_cast<std::ptrdiff_t>(s.train_n + s.val_n + s.test_n));
        } else {
            std::vector<std::size_t> order(groups.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(std::span<std::size_t>(order));
            for (auto g : order) {
                const auto& members = groups[g];
                for (auto [part, cap] : {std::pair{&sp.train, s.train_n}, std::pair{&sp.val, s.val_n},
                                         std::pair{&sp.test, s.test_n}}) {
                    if (part->size() + members.size() <= cap) {
                        part->insert(part->end(), members.begin(), members.end());
                        break;
                    }
                }
            }
            if (sp.train.empty() || sp.val.empty() || sp.test.empty())
                throw InvalidArgument("make_splits: image grouping left a partition empty");
        }
    }
    return out;
}

inline nlohmann::ordered_json to_json(const SplitSpec& s) {
    return {{"train_n", s.train_n},     {"val_n", s.val_n},           {"test_n", s.test_n},
            {"n_splits", s.n_splits},   {"base_seed", s.base_seed},   {"group_by_image", s.group_by_image}};
}

} // namespace ntpdetect
