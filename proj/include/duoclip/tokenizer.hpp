// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-level BPE tokenizer producing fixed-length rows for the text tower.
//
// Id layout: 0..255 are raw bytes, then <|startoftext|>, <|endoftext|>,
// <|pad|>, then one id per learned merge in merge order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace duoclip {

constexpr std::size_t kDefaultContextLength = 77;
constexpr std::size_t kNumBaseBytes = 256;
constexpr std::size_t kNumSpecials = 3;
constexpr std::size_t kMinVocabSize = kNumBaseBytes + kNumSpecials;

class Vocab {
public:
    /// Byte-only vocabulary (no merges).
    Vocab();

    static Vocab from_json(std::string_view text);
    static Vocab load(const std::string& path);
    /// Canonical serialisation; equal vocabularies give identical bytes.
    std::string to_json() const;
    void save(const std::string& path) const;

    std::size_t size() const { return tokens_.size(); }
    std::int32_t sot_id() const { return static_cast<std::int32_t>(kNumBaseBytes); }
    std::int32_t eot_id() const { return static_cast<std::int32_t>(kNumBaseBytes + 1); }
    std::int32_t pad_id() const { return static_cast<std::int32_t>(kNumBaseBytes + 2); }

    /// Raw bytes of a non-special token.
    const std::string& token_bytes(std::int32_t id) const;
    const std::vector<std::pair<std::int32_t, std::int32_t>>& merges() const { return merges_; }
    /// Rank of the merge (left,right) or -1.
    std::int64_t merge_rank(std::int32_t left, std::int32_t right) const;
    /// Token id produced by the merge of the given rank.
    std::int32_t merge_result(std::size_t rank) const { return merge_results_[rank]; }

    /// FNV-1a 64 of to_json(); used to tie checkpoints to their vocabulary.
    std::uint64_t fingerprint() const;

    bool operator==(const Vocab& other) const { return merges_ == other.merges_; }

private:
    friend Vocab build_vocab(std::span<const std::string> corpus, std::size_t target_size);
    std::int32_t add_merge(std::int32_t left, std::int32_t right);

    std::vector<std::string> tokens_;
    std::vector<std::pair<std::int32_t, std::int32_t>> merges_;
    std::vector<std::int32_t> merge_results_;
    std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> ranks_;
    std::map<std::string, std::int32_t> merged_ids_;
};

/// Learns merges until the vocabulary reaches target_size or no pair remains.
/// Ties on pair frequency go to the lexicographically smallest (left, right) byte strings.
Vocab build_vocab(std::span<const std::string> corpus, std::size_t target_size);

/// Lowercases ASCII and basic Cyrillic; other bytes pass through.
std::string normalize_text(std::string_view text);

/// [SOT, tokens..., EOT, PAD...] of exactly context_length ids.
std::vector<std::int32_t> encode(std::string_view text, const Vocab& vocab,
                                 std::size_t context_length = kDefaultContextLength);

/// Inverse of encode for untruncated input. Specials are dropped.
std::string decode(std::span<const std::int32_t> row, const Vocab& vocab);

struct TokenBatch {
    std::vector<std::int32_t> ids;       // [batch, context_length]
    std::vector<std::size_t> lengths;    // non-pad tokens per row, SOT and EOT included
    std::size_t context_length = kDefaultContextLength;

    std::size_t batch() const { return lengths.size(); }
    std::span<const std::int32_t> row(std::size_t i) const {
        return {ids.data() + i * context_length, context_length};
    }
    /// Position of the EOT token in row i.
    std::size_t eot_position(std::size_t i) const { return lengths[i] - 1; }

    /// Copies the given rows, in order.
    TokenBatch select(std::span<const std::size_t> rows) const;
};

TokenBatch encode_batch(std::span<const std::string> texts, const Vocab& vocab,
                        std::size_t context_length = kDefaultContextLength);

}  // namespace duoclip
