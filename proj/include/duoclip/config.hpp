// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "duoclip/image.hpp"
#include "duoclip/tokenizer.hpp"
#include "json.hpp"

namespace duoclip {

struct TextTowerConfig {
    std::size_t context_length = kDefaultContextLength;
    std::size_t layers = 12;
    std::size_t width = 512;
    std::size_t heads = 8;
    std::size_t vocab_size = 49408;

    bool operator==(const TextTowerConfig&) const = default;
};

struct ImageTowerConfig {
    ImageSpec spec;
    std::size_t layers = 12;
    std::size_t width = 768;
    std::size_t heads = 12;

    bool operator==(const ImageTowerConfig&) const = default;
};

/// Weight-initialisation constants, stored with every checkpoint.
struct InitConfig {
    double embedding_std = 0.02;
    double projection_std = 0.02;
    double residual_std = 0.02;  // divided by sqrt(2 * layers)
    double logit_scale = 2.659260036932778;  // ln(1 / 0.07)

    bool operator==(const InitConfig&) const = default;
};

struct ModelConfig {
    std::string preset_name;
    TextTowerConfig text;
    ImageTowerConfig image;
    std::size_t joint_dim = 512;
    /// Two joint_dim x joint_dim linear layers after the image projection.
    bool image_adapter = false;
    InitConfig init;

    bool operator==(const ModelConfig&) const = default;

    /// Throws UsageError on any violated invariant (width % heads, patch grid, ...).
    void validate() const;
};

void to_json(nlohmann::json& j, const ImageSpec& s);
void from_json(const nlohmann::json& j, ImageSpec& s);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace duoclip
