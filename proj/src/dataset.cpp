// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "duoclip/error.hpp"
#include "json.hpp"

namespace duoclip {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path.string() : (base / path).string();
}

std::string where(const std::string& file, std::size_t line) {
    return file + ":" + std::to_string(line) + ": ";
}

/// Parses each non-blank line as a JSON object; errors carry the 1-based line number.
template <class F>
void for_each_jsonl(const std::string& path, F&& on_object) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(where(path, number) + "malformed JSON (" + e.what() + ")");
        }
        if (!j.is_object()) throw DataError(where(path, number) + "expected a JSON object");
        try {
            on_object(j);
        } catch (const json::exception& e) {
            throw DataError(where(path, number) + e.what());
        } catch (const DataError& e) {
            throw DataError(where(path, number) + e.what());
        }
    }
}

const json& require(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
    return *it;
}

}  // namespace

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::vector<LabeledImage> ClassificationDataset::split(const std::string& which) const {
    if (which.empty()) return entries;
    std::vector<LabeledImage> out;
    for (const auto& e : entries)
        if (e.split == which) out.push_back(e);
    return out;
}

ClassificationDataset load_classification_dataset(const std::string& dir) {
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + dir);
    ClassificationDataset ds;
    ds.name = root.filename().string();
    if (ds.name.empty()) ds.name = root.parent_path().filename().string();

    const fs::path meta = root / "dataset.json";
    if (fs::exists(meta)) {
        std::ifstream in(meta);
        try {
            const json j = json::parse(in);
            if (j.contains("name")) ds.name = j.at("name").get<std::string>();
            if (j.contains("metric")) ds.metric = j.at("metric").get<std::string>();
        } catch (const json::exception& e) {
            throw DataError(meta.string() + ": " + e.what());
        }
    }
    ds.classes = read_lines((root / "classes.txt").string());
    if (ds.classes.empty()) throw DataError((root / "classes.txt").string() + ": no classes");
    ds.templates = read_lines((root / "templates.txt").string());

    const std::string manifest = (root / "manifest.jsonl").string();
    for_each_jsonl(manifest, [&](const json& j) {
        LabeledImage e;
        e.path = resolve(root, require(j, "image").get<std::string>());
        const json& label = require(j, "label");
        if (!label.is_number_integer() || label.get<long long>() < 0)
            throw DataError("label must be a non-negative integer");
        e.label = label.get<std::size_t>();
        if (e.label >= ds.classes.size())
            throw DataError("label " + std::to_string(e.label) + " has no entry in classes.txt");
        if (j.contains("split")) e.split = j.at("split").get<std::string>();
        ds.entries.push_back(std::move(e));
    });
    if (ds.entries.empty()) throw DataError(manifest + ": no entries");
    return ds;
}

std::vector<CaptionPair> load_caption_manifest(const std::string& path) {
    const fs::path base = fs::path(path).parent_path();
    std::vector<CaptionPair> out;
    for_each_jsonl(path, [&](const json& j) {
        CaptionPair p;
        p.image = resolve(base, require(j, "image").get<std::string>());
        p.caption = require(j, "caption").get<std::string>();
        out.push_back(std::move(p));
    });
    if (out.empty()) throw DataError(path + ": no entries");
    return out;
}

ImageBatch load_image_batch(const std::vector<std::string>& paths, const ImageSpec& spec) {
    constexpr std::size_t kChunk = 256;
    ImageBatch out;
    out.spec = spec;
    out.pixels.reserve(paths.size() * out.image_size());
    for (std::size_t start = 0; start < paths.size(); start += kChunk) {
        std::vector<Image> decoded;
        const std::size_t end = std::min(paths.size(), start + kChunk);
        for (std::size_t i = start; i < end; ++i) {
            try {
                decoded.push_back(decode_image(paths[i]));
            } catch (const DataError& e) {
                const std::string msg = e.what();
                throw DataError(msg.find(paths[i]) == std::string::npos ? paths[i] + ": " + msg
                                                                         : msg);
            }
        }
        ImageBatch part = preprocess_batch(decoded, spec);
        out.pixels.insert(out.pixels.end(), part.pixels.begin(), part.pixels.end());
        out.count += part.count;
    }
    return out;
}

}  // namespace duoclip
