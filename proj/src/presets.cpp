// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/presets.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <utility>

#include "duoclip/error.hpp"

namespace duoclip {

namespace {

enum class Size { base, large };

ModelConfig make_vit(const std::string& name, Size size, std::size_t patch, std::size_t resolution) {
    ModelConfig c;
    c.preset_name = name;
    c.text.context_length = kDefaultContextLength;
    c.text.layers = 12;
    c.text.vocab_size = 49408;
    c.image.spec.patch_size = patch;
    c.image.spec.resolution = resolution;
    if (size == Size::base) {
        c.text.width = 512;
        c.text.heads = 8;
        c.image.layers = 12;
        c.image.width = 768;
        c.image.heads = 12;
    } else {
        c.text.width = 768;
        c.text.heads = 12;
        c.image.layers = 24;
        c.image.width = 1024;
        c.image.heads = 16;
    }
    c.joint_dim = c.text.width;
    return c;
}

std::vector<ModelConfig> registry() {
    return {
        make_vit("vit-base-patch16-224", Size::base, 16, 224),
        make_vit("vit-base-patch32-224", Size::base, 32, 224),
        make_vit("vit-base-patch32-384", Size::base, 32, 384),
        make_vit("vit-large-patch14-224", Size::large, 14, 224),
        make_vit("vit-base-patch16-384", Size::base, 16, 384),
        make_vit("vit-large-patch14-336", Size::large, 14, 336),
        tiny_config(),
    };
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

ModelConfig tiny_config(std::size_t patch_size, std::size_t resolution) {
    ModelConfig c;
    c.preset_name = "tiny";
    if (patch_size != 8 || resolution != 32)
        c.preset_name += "-patch" + std::to_string(patch_size) + "-" + std::to_string(resolution);
    c.text.context_length = 16;
    c.text.layers = 2;
    c.text.width = 64;
    c.text.heads = 2;
    c.text.vocab_size = 512;
    c.image.spec.resolution = resolution;
    c.image.spec.patch_size = patch_size;
    c.image.layers = 2;
    c.image.width = 64;
    c.image.heads = 2;
    c.joint_dim = 64;
    return c;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& c : registry()) names.push_back(c.preset_name);
    return names;
}

ModelConfig resolve_preset(const std::string& name) {
    const auto all = registry();
    for (const auto& c : all)
        if (c.preset_name == name) return c;
    unsigned long patch = 0, res = 0;
    char tail = 0;
    if (std::sscanf(name.c_str(), "tiny-patch%lu-%lu%c", &patch, &res, &tail) == 2 && patch > 0) {
        ModelConfig c = tiny_config(patch, res);
        patch_grid(c.image.spec);
        return c;
    }

    std::vector<std::pair<std::size_t, std::string>> ranked;
    for (const auto& c : all) ranked.emplace_back(edit_distance(name, c.preset_name), c.preset_name);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    std::string msg = "unknown preset '" + name + "'; nearest: ";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) {
        if (i) msg += ", ";
        msg += ranked[i].second;
    }
    throw UsageError(msg);
}

}  // namespace duoclip
