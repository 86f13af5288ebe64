// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include <zlib.h>

#include <filesystem>
#include <random>

#include "doctest.h"
#include "duoclip/checkpoint.hpp"
#include "duoclip/presets.hpp"
#include "fixtures.hpp"

using namespace duoclip;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    ClipModel<float> model{tiny_config()};
    Vocab vocab;
    Fixture() {
        model.init_weights(21);
        const std::vector<std::string> corpus{"a red square", "a blue circle", "зелёный круг"};
        vocab = build_vocab(corpus, 280);
    }
};

void reseal(std::vector<std::uint8_t>& bytes) {
    const std::size_t at = bytes.size() - 4;
    const auto crc = static_cast<std::uint32_t>(::crc32_z(::crc32_z(0L, Z_NULL, 0), bytes.data(), at));
    for (int i = 0; i < 4; ++i) bytes[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(crc >> (8 * i));
}

}  // namespace

TEST_CASE("save and load give bitwise identical embeddings") {
    Fixture f;
    const auto path = (fs::temp_directory_path() / "duoclip_ckpt_test.dclp").string();
    save_checkpoint(f.model, f.vocab, path, {{"steps", 12}});
    CHECK_FALSE(fs::exists(path + ".tmp"));
    const LoadedCheckpoint back = load_checkpoint(path);
    CHECK(back.model.config() == f.model.config());
    CHECK(back.model.params().data() == f.model.params().data());
    CHECK(back.vocab == f.vocab);
    CHECK(back.metadata.at("steps") == 12);
    const ImageBatch images = testing::random_images(f.model.config().image.spec, 3, 22);
    const std::vector<std::string> texts{"a red square", "круг"};
    CHECK(back.model.encode_image(images) == f.model.encode_image(images));
    CHECK(back.model.encode_text(encode_batch(texts, back.vocab, 16)) ==
          f.model.encode_text(encode_batch(texts, f.vocab, 16)));

    const auto header = checkpoint_header(path);
    CHECK(header.at("format") == "duoclip-checkpoint");
    CHECK(header.at("dtype") == "float32");
    CHECK_FALSE(header.contains("vocab"));
    fs::remove(path);
}

TEST_CASE("serialisation is deterministic and double models store as float") {
    Fixture f;
    CHECK(serialize_checkpoint(f.model, f.vocab) == serialize_checkpoint(f.model, f.vocab));
    const ClipModel<double> wide = f.model.cast<double>();
    CHECK(serialize_checkpoint(wide, f.vocab) == serialize_checkpoint(f.model, f.vocab));
    ClipModel<float> adapted = with_identity_adapter(f.model);
    const auto back = deserialize_checkpoint(serialize_checkpoint(adapted, f.vocab), "mem");
    CHECK(back.model.config().image_adapter);
    CHECK(back.model.params().data() == adapted.params().data());
}

TEST_CASE("every sampled single-byte corruption is detected") {
    Fixture f;
    const auto clean = serialize_checkpoint(f.model, f.vocab);
    const std::uint64_t header_len = [&] {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(clean[8 + static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }();
    // Every byte of the framing, header and checksum, plus a random sample of the payload.
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < 24 + header_len; ++i) positions.push_back(i);
    for (std::size_t i = clean.size() - 4; i < clean.size(); ++i) positions.push_back(i);
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<std::size_t> pay(24 + header_len, clean.size() - 5);
    for (int i = 0; i < 1000; ++i) positions.push_back(pay(rng));
    std::uniform_int_distribution<int> mask(1, 255);
    std::size_t detected = 0;
    auto bytes = clean;
    for (std::size_t pos : positions) {
        bytes[pos] ^= static_cast<std::uint8_t>(mask(rng));
        try {
            deserialize_checkpoint(bytes, "corrupt");
        } catch (const DataError&) {
            ++detected;
        }
        bytes[pos] = clean[pos];
    }
    CHECK(detected == positions.size());
}

TEST_CASE("truncation, bad magic and unknown versions raise distinct errors") {
    Fixture f;
    const auto clean = serialize_checkpoint(f.model, f.vocab);
    for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{20}, std::size_t{200}, clean.size() - 1}) {
        const std::vector<std::uint8_t> cut(clean.begin(), clean.begin() + static_cast<long>(keep));
        CHECK_THROWS_AS(deserialize_checkpoint(cut, "cut"), TruncatedCheckpoint);
    }
    auto magic = clean;
    magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(magic, "magic"), BadCheckpointMagic);
    auto future = clean;
    future[4] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
    CHECK_THROWS_AS(deserialize_checkpoint(future, "future"), UnknownCheckpointVersion);
    try {
        deserialize_checkpoint(future, "future.dclp");
    } catch (const UnknownCheckpointVersion& e) {
        const std::string msg = e.what();
        CHECK(msg.find("future.dclp") != std::string::npos);
        CHECK(msg.find("version 2") != std::string::npos);
    }
    auto flipped = clean;
    flipped[clean.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(deserialize_checkpoint(flipped, "flip"), ChecksumMismatch);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.dclp"), DataError);
}

TEST_CASE("resealed but inconsistent checkpoints are rejected") {
    Fixture f;
    const auto clean = serialize_checkpoint(f.model, f.vocab);
    // A non-finite weight with a valid checksum.
    auto nan_bytes = clean;
    const std::size_t last_weight = clean.size() - 8;
    nan_bytes[last_weight + 0] = 0x00;
    nan_bytes[last_weight + 1] = 0x00;
    nan_bytes[last_weight + 2] = 0xC0;
    nan_bytes[last_weight + 3] = 0x7F;
    reseal(nan_bytes);
    CHECK_THROWS_AS(deserialize_checkpoint(nan_bytes, "nan"), DataError);
    // A tampered vocabulary fingerprint.
    std::string text(clean.begin(), clean.end());
    const auto at = text.find("\"vocab_fingerprint\":\"") + 21;
    auto tampered = clean;
    tampered[at] = tampered[at] == '0' ? '1' : '0';
    reseal(tampered);
    CHECK_THROWS_AS(deserialize_checkpoint(tampered, "fp"), DataError);
}

TEST_CASE("a vocabulary larger than the embedding table cannot be saved") {
    Fixture f;
    std::vector<std::string> corpus;
    for (int i = 0; i < 200; ++i) corpus.push_back("word" + std::to_string(i * 7919) + " token" + std::to_string(i));
    const Vocab big = build_vocab(corpus, 600);
    REQUIRE(big.size() > 512);
    CHECK_THROWS_AS(serialize_checkpoint(f.model, big), UsageError);
}
