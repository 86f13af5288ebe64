// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/config.hpp"

#include "duoclip/error.hpp"

namespace duoclip {

using nlohmann::json;

void ModelConfig::validate() const {
    auto require = [&](bool ok, const std::string& what) {
        if (!ok) throw UsageError("config '" + preset_name + "': " + what);
    };
    require(text.context_length >= 3, "text context_length must be >= 3");
    require(text.layers >= 1 && image.layers >= 1, "towers need at least one layer");
    require(text.heads >= 1 && text.width % text.heads == 0, "text width must divide by heads");
    require(image.heads >= 1 && image.width % image.heads == 0, "image width must divide by heads");
    require(text.vocab_size >= kMinVocabSize, "vocab_size too small");
    require(joint_dim >= 1, "joint_dim must be positive");
    patch_grid(image.spec);
    for (float s : image.spec.std) require(s > 0.0f, "normalisation std must be positive");
}

void to_json(json& j, const ImageSpec& s) {
    j = json{{"resolution", s.resolution},
             {"patch_size", s.patch_size},
             {"mean", s.mean},
             {"std", s.std}};
}

void from_json(const json& j, ImageSpec& s) {
    j.at("resolution").get_to(s.resolution);
    j.at("patch_size").get_to(s.patch_size);
    if (j.contains("mean")) j.at("mean").get_to(s.mean);
    if (j.contains("std")) j.at("std").get_to(s.std);
}

void to_json(json& j, const ModelConfig& c) {
    j = json{{"preset", c.preset_name},
             {"text",
              {{"context_length", c.text.context_length},
               {"layers", c.text.layers},
               {"width", c.text.width},
               {"heads", c.text.heads},
               {"vocab_size", c.text.vocab_size}}},
             {"image",
              {{"spec", c.image.spec},
               {"layers", c.image.layers},
               {"width", c.image.width},
               {"heads", c.image.heads}}},
             {"joint_dim", c.joint_dim},
             {"image_adapter", c.image_adapter},
             {"init",
              {{"embedding_std", c.init.embedding_std},
               {"projection_std", c.init.projection_std},
               {"residual_std", c.init.residual_std},
               {"logit_scale", c.init.logit_scale}}}};
}

void from_json(const json& j, ModelConfig& c) {
    j.at("preset").get_to(c.preset_name);
    const auto& t = j.at("text");
    t.at("context_length").get_to(c.text.context_length);
    t.at("layers").get_to(c.text.layers);
    t.at("width").get_to(c.text.width);
    t.at("heads").get_to(c.text.heads);
    t.at("vocab_size").get_to(c.text.vocab_size);
    const auto& im = j.at("image");
    im.at("spec").get_to(c.image.spec);
    im.at("layers").get_to(c.image.layers);
    im.at("width").get_to(c.image.width);
    im.at("heads").get_to(c.image.heads);
    j.at("joint_dim").get_to(c.joint_dim);
    c.image_adapter = j.value("image_adapter", false);
    if (j.contains("init")) {
        const auto& in = j.at("init");
        in.at("embedding_std").get_to(c.init.embedding_std);
        in.at("projection_std").get_to(c.init.projection_std);
        in.at("residual_std").get_to(c.init.residual_std);
        in.at("logit_scale").get_to(c.init.logit_scale);
    }
}

}  // namespace duoclip
