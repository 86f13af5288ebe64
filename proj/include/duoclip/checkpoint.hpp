// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Single-file checkpoints.
//
//   "DCLP" | u32 version | u64 header_bytes | u64 payload_bytes
//   | header (JSON: config, vocab, tensor index, metadata)
//   | payload (float32, little endian, tensors in index order)
//   | u32 CRC-32 of every preceding byte
//
// All integers are little endian.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duoclip/error.hpp"
#include "duoclip/model.hpp"
#include "duoclip/tokenizer.hpp"
#include "json.hpp"

namespace duoclip {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class TruncatedCheckpoint : public DataError {
    using DataError::DataError;
};
class BadCheckpointMagic : public DataError {
    using DataError::DataError;
};
class UnknownCheckpointVersion : public DataError {
    using DataError::DataError;
};
class ChecksumMismatch : public DataError {
    using DataError::DataError;
};

struct LoadedCheckpoint {
    ClipModel<float> model;
    Vocab vocab;
    nlohmann::json metadata;  // free-form run information (seed, steps, ...)
};

/// Double models are rounded to float32 on save.
template <class T>
std::vector<std::uint8_t> serialize_checkpoint(const ClipModel<T>& model, const Vocab& vocab,
                                               const nlohmann::json& metadata = nlohmann::json::object());

LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                        const std::string& name = "checkpoint");

/// Writes to a temporary sibling, then renames over path.
template <class T>
void save_checkpoint(const ClipModel<T>& model, const Vocab& vocab, const std::string& path,
                     const nlohmann::json& metadata = nlohmann::json::object());

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Header JSON only (config, tensor index, metadata), after full validation.
nlohmann::json checkpoint_header(const std::string& path);

}  // namespace duoclip
