// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// JSONL manifests for classification datasets and image-caption corpora.
//
// A classification dataset is a directory holding
//   manifest.jsonl   {"image": path, "label": int, "split": "train"|"test"}  (split optional)
//   classes.txt      one class name per line
//   templates.txt    one prompt template per line, each with a single "{}"
//   dataset.json     optional {"name": ..., "metric": ...}
// Image paths are resolved relative to the directory.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "duoclip/image.hpp"

namespace duoclip {

struct LabeledImage {
    std::string path;
    std::size_t label = 0;
    std::string split;  // empty when the manifest does not say
};

struct ClassificationDataset {
    std::string name;
    std::optional<std::string> metric;
    std::vector<std::string> classes;
    std::vector<std::string> templates;
    std::vector<LabeledImage> entries;

    /// Entries whose split matches; an empty split selects everything.
    std::vector<LabeledImage> split(const std::string& which) const;
};

ClassificationDataset load_classification_dataset(const std::string& dir);

struct CaptionPair {
    std::string image;
    std::string caption;
};

/// JSONL of {"image": path, "caption": text}; relative paths resolve against the file's directory.
std::vector<CaptionPair> load_caption_manifest(const std::string& path);

/// Non-empty lines of a text file, trailing CR stripped.
std::vector<std::string> read_lines(const std::string& path);

/// Decodes and preprocesses every path, in order. Errors name the failing path.
ImageBatch load_image_batch(const std::vector<std::string>& paths, const ImageSpec& spec);

}  // namespace duoclip
