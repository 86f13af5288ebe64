// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace duoclip {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'C', 'L', 'P'};
constexpr std::size_t kPreamble = 4 + 4 + 8 + 8;
constexpr std::size_t kTrailer = 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
    return static_cast<std::uint32_t>(::crc32_z(::crc32_z(0L, Z_NULL, 0), data, size));
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

json tensor_index(const ParamStore<float>& params) {
    json index = json::array();
    for (const auto& t : params.tensors())
        index.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset * sizeof(float)}});
    return index;
}

/// Checks framing and checksum; returns the header JSON and the payload span.
std::pair<json, std::pair<const std::uint8_t*, std::size_t>> open_frame(
    const std::vector<std::uint8_t>& bytes, const std::string& name) {
    if (bytes.size() < 4) throw TruncatedCheckpoint(name + ": truncated checkpoint (" +
                                                    std::to_string(bytes.size()) + " bytes)");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw BadCheckpointMagic(name + ": not a duoclip checkpoint (bad magic)");
    if (bytes.size() < kPreamble + kTrailer)
        throw TruncatedCheckpoint(name + ": truncated checkpoint (" + std::to_string(bytes.size()) + " bytes)");
    const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
    if (version != kCheckpointVersion)
        throw UnknownCheckpointVersion(
            name + ": checkpoint format version " + std::to_string(version) +
            " is not supported (this build reads version " + std::to_string(kCheckpointVersion) +
            "); " + (version > kCheckpointVersion ? "upgrade duoclip to load it"
                                                  : "re-export it with a matching duoclip release"));
    const std::uint64_t header_len = get_le(bytes.data() + 8, 8);
    const std::uint64_t payload_len = get_le(bytes.data() + 16, 8);
    const std::uint64_t body = static_cast<std::uint64_t>(bytes.size() - kPreamble - kTrailer);
    if (header_len > body || payload_len > body - header_len)
        throw TruncatedCheckpoint(name + ": truncated checkpoint (sections need " +
                                  std::to_string(header_len) + " + " + std::to_string(payload_len) +
                                  " bytes, file has " + std::to_string(body) + ")");
    if (header_len + payload_len != body)
        throw DataError(name + ": " + std::to_string(body - header_len - payload_len) +
                        " unexpected trailing bytes");
    const std::size_t crc_at = bytes.size() - kTrailer;
    const auto stored = static_cast<std::uint32_t>(get_le(bytes.data() + crc_at, 4));
    const std::uint32_t actual = crc32_of(bytes.data(), crc_at);
    if (stored != actual)
        throw ChecksumMismatch(name + ": checksum mismatch (stored " + hex64(stored).substr(8) +
                               ", computed " + hex64(actual).substr(8) + "); the file is corrupt");
    json header;
    try {
        header = json::parse(bytes.begin() + kPreamble,
                             bytes.begin() + static_cast<long>(kPreamble + header_len));
    } catch (const json::exception& e) {
        throw DataError(name + ": unreadable checkpoint header: " + e.what());
    }
    return {std::move(header), {bytes.data() + kPreamble + header_len, payload_len}};
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

template <class T>
std::vector<std::uint8_t> serialize_checkpoint(const ClipModel<T>& model, const Vocab& vocab,
                                               const json& metadata) {
    model.check_finite();
    if (vocab.size() > model.config().text.vocab_size)
        throw UsageError("checkpoint: vocabulary has " + std::to_string(vocab.size()) +
                         " tokens but the model embeds only " +
                         std::to_string(model.config().text.vocab_size));
    const ClipModel<float> stored = model.template cast<float>();
    const json header{{"format", "duoclip-checkpoint"},
                      {"dtype", "float32"},
                      {"byte_order", "little"},
                      {"config", model.config()},
                      {"vocab", json::parse(vocab.to_json())},
                      {"vocab_fingerprint", hex64(vocab.fingerprint())},
                      {"tensors", tensor_index(stored.params())},
                      {"metadata", metadata}};
    const std::string header_text = header.dump();
    const auto& values = stored.params().data();

    std::vector<std::uint8_t> out;
    out.reserve(kPreamble + header_text.size() + values.size() * 4 + kTrailer);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, header_text.size());
    put_u64(out, values.size() * sizeof(float));
    out.insert(out.end(), header_text.begin(), header_text.end());
    for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    put_u32(out, crc32_of(out.data(), out.size()));
    return out;
}

LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    auto [header, payload] = open_frame(bytes, name);
    try {
        const ModelConfig config = header.at("config").get<ModelConfig>();
        config.validate();
        Vocab vocab = Vocab::from_json(header.at("vocab").dump());
        if (header.at("vocab_fingerprint").get<std::string>() != hex64(vocab.fingerprint()))
            throw DataError(name + ": embedded vocabulary does not match its fingerprint");
        ClipModel<float> model(config);
        auto& params = model.params();
        const json& index = header.at("tensors");
        if (!index.is_array() || index.size() != params.tensors().size())
            throw DataError(name + ": tensor index has " + std::to_string(index.size()) +
                            " entries, config implies " + std::to_string(params.tensors().size()));
        for (std::size_t i = 0; i < index.size(); ++i) {
            const TensorInfo& want = params.info(i);
            const auto tensor_name = index[i].at("name").get<std::string>();
            const auto shape = index[i].at("shape").get<std::vector<std::size_t>>();
            const auto offset = index[i].at("offset").get<std::size_t>();
            if (tensor_name != want.name || shape != want.shape || offset != want.offset * sizeof(float))
                throw DataError(name + ": tensor " + std::to_string(i) + " ('" + tensor_name +
                                "') does not match the model layout");
        }
        if (payload.second != params.size() * sizeof(float))
            throw DataError(name + ": payload holds " + std::to_string(payload.second) +
                            " bytes, tensor index needs " + std::to_string(params.size() * sizeof(float)));
        for (std::size_t i = 0; i < params.size(); ++i)
            params.data()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(payload.first + 4 * i, 4)));
        try {
            model.check_finite();
        } catch (const NumericError& e) {
            throw DataError(name + ": " + e.what());
        }
        json metadata = header.contains("metadata") ? header.at("metadata") : json::object();
        return {std::move(model), std::move(vocab), std::move(metadata)};
    } catch (const json::exception& e) {
        throw DataError(name + ": malformed checkpoint header: " + e.what());
    } catch (const UsageError& e) {
        throw DataError(name + ": " + e.what());
    }
}

template <class T>
void save_checkpoint(const ClipModel<T>& model, const Vocab& vocab, const std::string& path,
                     const json& metadata) {
    const auto bytes = serialize_checkpoint(model, vocab, metadata);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint: " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("failed writing checkpoint: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

LoadedCheckpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path), path); }

json checkpoint_header(const std::string& path) {
    const auto bytes = read_file(path);
    deserialize_checkpoint(bytes, path);
    json header = open_frame(bytes, path).first;
    header.erase("vocab");
    return header;
}

template std::vector<std::uint8_t> serialize_checkpoint<float>(const ClipModel<float>&, const Vocab&, const json&);
template std::vector<std::uint8_t> serialize_checkpoint<double>(const ClipModel<double>&, const Vocab&, const json&);
template void save_checkpoint<float>(const ClipModel<float>&, const Vocab&, const std::string&, const json&);
template void save_checkpoint<double>(const ClipModel<double>&, const Vocab&, const std::string&, const json&);

}  // namespace duoclip
