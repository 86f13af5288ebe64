// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "duoclip/error.hpp"
#include "json.hpp"

namespace duoclip {

namespace {

using json = nlohmann::json;

constexpr std::array<const char*, kNumSpecials> kSpecialNames = {
    "<|startoftext|>", "<|endoftext|>", "<|pad|>"};

// Reversible byte -> printable code point mapping so every token is valid UTF-8 in JSON.
const std::array<char32_t, 256>& byte_to_codepoint() {
    static const std::array<char32_t, 256> table = [] {
        std::array<char32_t, 256> t{};
        std::array<bool, 256> direct{};
        for (int b = '!'; b <= '~'; ++b) direct[b] = true;
        for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
        for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
        char32_t next = 256;
        for (int b = 0; b < 256; ++b) t[b] = direct[b] ? static_cast<char32_t>(b) : next++;
        return t;
    }();
    return table;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string bytes_to_printable(std::string_view bytes) {
    std::string out;
    for (unsigned char b : bytes) append_utf8(out, byte_to_codepoint()[b]);
    return out;
}

std::string printable_to_bytes(std::string_view text) {
    static const std::unordered_map<char32_t, unsigned char> inverse = [] {
        std::unordered_map<char32_t, unsigned char> m;
        for (int b = 0; b < 256; ++b) m[byte_to_codepoint()[b]] = static_cast<unsigned char>(b);
        return m;
    }();
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        char32_t cp = 0;
        std::size_t len = 1;
        if (c < 0x80) {
            cp = c;
        } else if ((c & 0xE0) == 0xC0 && i + 1 < text.size()) {
            cp = (static_cast<char32_t>(c & 0x1F) << 6) | (text[i + 1] & 0x3F);
            len = 2;
        } else if ((c & 0xF0) == 0xE0 && i + 2 < text.size()) {
            cp = (static_cast<char32_t>(c & 0x0F) << 12) |
                 (static_cast<char32_t>(text[i + 1] & 0x3F) << 6) | (text[i + 2] & 0x3F);
            len = 3;
        } else {
            throw DataError("vocab: invalid UTF-8 in token");
        }
        const auto it = inverse.find(cp);
        if (it == inverse.end()) throw DataError("vocab: token contains an unmapped code point");
        out.push_back(static_cast<char>(it->second));
        i += len;
    }
    return out;
}

// Splits before every space that follows a non-space; concatenating chunks restores the input.
std::vector<std::string> split_chunks(std::string_view text) {
    std::vector<std::string> chunks;
    std::size_t start = 0;
    for (std::size_t i = 1; i < text.size(); ++i) {
        if (text[i] == ' ' && text[i - 1] != ' ') {
            chunks.emplace_back(text.substr(start, i - start));
            start = i;
        }
    }
    if (start < text.size()) chunks.emplace_back(text.substr(start));
    return chunks;
}

std::vector<std::int32_t> apply_merges(std::string_view chunk, const Vocab& vocab) {
    std::vector<std::int32_t> seq;
    seq.reserve(chunk.size());
    for (unsigned char b : chunk) seq.push_back(b);
    while (seq.size() > 1) {
        std::int64_t best_rank = std::numeric_limits<std::int64_t>::max();
        for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
            const std::int64_t r = vocab.merge_rank(seq[i], seq[i + 1]);
            if (r >= 0 && r < best_rank) best_rank = r;
        }
        if (best_rank == std::numeric_limits<std::int64_t>::max()) break;
        const auto rank = static_cast<std::size_t>(best_rank);
        const auto [left, right] = vocab.merges()[rank];
        const std::int32_t result = vocab.merge_result(rank);
        std::vector<std::int32_t> next;
        next.reserve(seq.size());
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (i + 1 < seq.size() && seq[i] == left && seq[i + 1] == right) {
                next.push_back(result);
                ++i;
            } else {
                next.push_back(seq[i]);
            }
        }
        seq.swap(next);
    }
    return seq;
}

}  // namespace

Vocab::Vocab() {
    tokens_.reserve(kMinVocabSize);
    for (int b = 0; b < 256; ++b) tokens_.emplace_back(1, static_cast<char>(b));
    for (const char* s : kSpecialNames) tokens_.emplace_back(s);
}

const std::string& Vocab::token_bytes(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw DataError("token id " + std::to_string(id) + " out of range for vocab of size " +
                        std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
}

std::int64_t Vocab::merge_rank(std::int32_t left, std::int32_t right) const {
    const auto it = ranks_.find({left, right});
    return it == ranks_.end() ? -1 : it->second;
}

std::int32_t Vocab::add_merge(std::int32_t left, std::int32_t right) {
    std::string merged = tokens_[static_cast<std::size_t>(left)] +
                         tokens_[static_cast<std::size_t>(right)];
    auto [it, inserted] =
        merged_ids_.try_emplace(merged, static_cast<std::int32_t>(tokens_.size()));
    if (inserted) tokens_.push_back(std::move(merged));
    ranks_[{left, right}] = static_cast<std::int64_t>(merges_.size());
    merges_.emplace_back(left, right);
    merge_results_.push_back(it->second);
    return it->second;
}

std::string Vocab::to_json() const {
    json j;
    json tokens = json::array();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (i >= kNumBaseBytes && i < kMinVocabSize) {
            tokens.push_back(tokens_[i]);
        } else {
            tokens.push_back(bytes_to_printable(tokens_[i]));
        }
    }
    json merges = json::array();
    for (const auto& [l, r] : merges_) {
        merges.push_back(json::array({bytes_to_printable(tokens_[static_cast<std::size_t>(l)]),
                                      bytes_to_printable(tokens_[static_cast<std::size_t>(r)])}));
    }
    j["tokens"] = std::move(tokens);
    j["merges"] = std::move(merges);
    j["specials"] = {{"sot", sot_id()}, {"eot", eot_id()}, {"pad", pad_id()}};
    return j.dump(1) + "\n";
}

Vocab Vocab::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("vocab: invalid JSON: ") + e.what());
    }
    Vocab v;
    try {
        const auto& tokens = j.at("tokens");
        const auto& specials = j.at("specials");
        if (specials.at("sot").get<int>() != v.sot_id() ||
            specials.at("eot").get<int>() != v.eot_id() ||
            specials.at("pad").get<int>() != v.pad_id())
            throw DataError("vocab: unsupported special-token layout");
        if (tokens.size() < kMinVocabSize)
            throw DataError("vocab: fewer than " + std::to_string(kMinVocabSize) + " tokens");
        std::unordered_map<std::string, std::int32_t> by_bytes;
        for (std::size_t i = 0; i < kNumBaseBytes; ++i) {
            if (printable_to_bytes(tokens[i].get<std::string>()) != v.tokens_[i])
                throw DataError("vocab: base byte token " + std::to_string(i) + " is wrong");
            by_bytes[v.tokens_[i]] = static_cast<std::int32_t>(i);
        }
        for (std::size_t i = 0; i < kNumSpecials; ++i) {
            if (tokens[kNumBaseBytes + i].get<std::string>() != kSpecialNames[i])
                throw DataError("vocab: special token " + std::to_string(i) + " is wrong");
        }
        for (const auto& m : j.at("merges")) {
            const std::string l = printable_to_bytes(m.at(0).get<std::string>());
            const std::string r = printable_to_bytes(m.at(1).get<std::string>());
            const auto li = by_bytes.find(l);
            const auto ri = by_bytes.find(r);
            if (li == by_bytes.end() || ri == by_bytes.end())
                throw DataError("vocab: merge references a token not derivable from prior merges");
            if (v.merge_rank(li->second, ri->second) >= 0)
                throw DataError("vocab: duplicate merge rule");
            by_bytes[l + r] = v.add_merge(li->second, ri->second);
        }
        if (v.tokens_.size() != tokens.size())
            throw DataError("vocab: token list does not match merges");
        for (std::size_t i = kMinVocabSize; i < tokens.size(); ++i) {
            if (printable_to_bytes(tokens[i].get<std::string>()) != v.tokens_[i])
                throw DataError("vocab: token " + std::to_string(i) + " does not match merge order");
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("vocab: malformed fields: ") + e.what());
    }
    return v;
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocab file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write vocab file: " + path);
    out << to_json();
}

std::uint64_t Vocab::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : to_json()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string normalize_text(std::string_view text) {
    std::string out(text);
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto c = static_cast<unsigned char>(out[i]);
        if (c >= 'A' && c <= 'Z') {
            out[i] = static_cast<char>(c + 32);
        } else if (c == 0xD0 && i + 1 < out.size()) {
            const auto n = static_cast<unsigned char>(out[i + 1]);
            if (n >= 0x90 && n <= 0x9F) {  // А..П -> а..п
                out[i + 1] = static_cast<char>(n + 0x20);
                ++i;
            } else if (n >= 0xA0 && n <= 0xAF) {  // Р..Я -> р..я
                out[i] = static_cast<char>(0xD1);
                out[i + 1] = static_cast<char>(n - 0x20);
                ++i;
            } else if (n >= 0x80 && n <= 0x8F) {  // Ѐ..Џ -> ѐ..џ
                out[i] = static_cast<char>(0xD1);
                out[i + 1] = static_cast<char>(n + 0x10);
                ++i;
            }
        }
    }
    return out;
}

Vocab build_vocab(std::span<const std::string> corpus, std::size_t target_size) {
    if (corpus.empty()) throw UsageError("build_vocab: corpus is empty");
    if (target_size < kMinVocabSize)
        throw UsageError("build_vocab: target_size must be at least " +
                         std::to_string(kMinVocabSize));

    std::map<std::string, std::size_t> word_counts;
    for (const auto& line : corpus)
        for (auto& chunk : split_chunks(normalize_text(line))) ++word_counts[chunk];

    std::vector<std::vector<std::int32_t>> words;
    std::vector<std::size_t> counts;
    for (const auto& [w, c] : word_counts) {
        std::vector<std::int32_t> ids;
        for (unsigned char b : w) ids.push_back(b);
        words.push_back(std::move(ids));
        counts.push_back(c);
    }

    Vocab vocab;
    while (vocab.size() < target_size) {
        std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> pair_counts;
        for (std::size_t w = 0; w < words.size(); ++w)
            for (std::size_t i = 0; i + 1 < words[w].size(); ++i)
                pair_counts[{words[w][i], words[w][i + 1]}] += counts[w];
        if (pair_counts.empty()) break;

        const auto* best = &*pair_counts.begin();
        for (const auto& entry : pair_counts) {
            if (entry.second > best->second) {
                best = &entry;
            } else if (entry.second == best->second) {
                const auto& a = vocab.tokens_[static_cast<std::size_t>(entry.first.first)];
                const auto& b = vocab.tokens_[static_cast<std::size_t>(best->first.first)];
                const auto& a2 = vocab.tokens_[static_cast<std::size_t>(entry.first.second)];
                const auto& b2 = vocab.tokens_[static_cast<std::size_t>(best->first.second)];
                if (std::tie(a, a2) < std::tie(b, b2)) best = &entry;
            }
        }
        const auto [left, right] = best->first;
        const std::int32_t id = vocab.add_merge(left, right);
        for (auto& w : words) {
            std::vector<std::int32_t> next;
            next.reserve(w.size());
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (i + 1 < w.size() && w[i] == left && w[i + 1] == right) {
                    next.push_back(id);
                    ++i;
                } else {
                    next.push_back(w[i]);
                }
            }
            w.swap(next);
        }
    }
    return vocab;
}

std::vector<std::int32_t> encode(std::string_view text, const Vocab& vocab,
                                 std::size_t context_length) {
    if (context_length < 3) throw UsageError("encode: context_length must be at least 3");
    std::vector<std::int32_t> row;
    row.reserve(context_length);
    row.push_back(vocab.sot_id());
    const std::size_t budget = context_length - 2;
    for (const auto& chunk : split_chunks(normalize_text(text))) {
        for (std::int32_t id : apply_merges(chunk, vocab)) {
            if (row.size() - 1 >= budget) break;
            row.push_back(id);
        }
        if (row.size() - 1 >= budget) break;
    }
    row.push_back(vocab.eot_id());
    row.resize(context_length, vocab.pad_id());
    return row;
}

std::string decode(std::span<const std::int32_t> row, const Vocab& vocab) {
    std::string out;
    for (std::int32_t id : row) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
            throw DataError("decode: token id " + std::to_string(id) + " out of range (vocab size " +
                            std::to_string(vocab.size()) + ")");
        if (id == vocab.sot_id() || id == vocab.pad_id()) continue;
        if (id == vocab.eot_id()) continue;
        out += vocab.token_bytes(id);
    }
    return out;
}

TokenBatch TokenBatch::select(std::span<const std::size_t> rows) const {
    TokenBatch out;
    out.context_length = context_length;
    out.ids.reserve(rows.size() * context_length);
    for (std::size_t r : rows) {
        const auto src = row(r);
        out.ids.insert(out.ids.end(), src.begin(), src.end());
        out.lengths.push_back(lengths[r]);
    }
    return out;
}

TokenBatch encode_batch(std::span<const std::string> texts, const Vocab& vocab,
                        std::size_t context_length) {
    TokenBatch batch;
    batch.context_length = context_length;
    batch.ids.reserve(texts.size() * context_length);
    for (const auto& t : texts) {
        const auto row = encode(t, vocab, context_length);
        const auto eot = std::find(row.begin(), row.end(), vocab.eot_id());
        batch.lengths.push_back(static_cast<std::size_t>(eot - row.begin()) + 1);
        batch.ids.insert(batch.ids.end(), row.begin(), row.end());
    }
    return batch;
}

}  // namespace duoclip
