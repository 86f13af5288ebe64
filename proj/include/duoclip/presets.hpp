// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "duoclip/config.hpp"

namespace duoclip {

/// The six published model names plus "tiny", in registry order.
std::vector<std::string> preset_names();

/// Also accepts "tiny-patchP-R" variants of the tiny model.
/// Throws UsageError for unknown names, listing the closest registered ones.
ModelConfig resolve_preset(const std::string& name);

/// Desk-scale test model: context 16, 2 layers, width 64, 2 heads, 32 px / patch 8, joint 64.
ModelConfig tiny_config(std::size_t patch_size = 8, std::size_t resolution = 32);

}  // namespace duoclip
