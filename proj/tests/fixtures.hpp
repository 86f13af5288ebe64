// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic inputs shared by the test suites.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "duoclip/image.hpp"
#include "duoclip/linear_probe.hpp"
#include "duoclip/tokenizer.hpp"

namespace duoclip::testing {

inline ImageBatch random_images(const ImageSpec& spec, std::size_t count, std::uint64_t seed) {
    ImageBatch b;
    b.spec = spec;
    b.count = count;
    b.pixels.resize(count * b.image_size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (float& v : b.pixels) v = dist(rng);
    return b;
}

/// Rows of random byte tokens framed by SOT/EOT, padded with the pad id.
inline TokenBatch random_tokens(std::size_t count, std::size_t context, std::uint64_t seed,
                                std::size_t vocab_size = 512) {
    TokenBatch t;
    t.context_length = context;
    t.ids.assign(count * context, 258);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len_dist(3, context);
    std::uniform_int_distribution<std::int32_t> id_dist(0, 255);
    std::uniform_int_distribution<std::size_t> merged_dist(259, vocab_size - 1);
    for (std::size_t b = 0; b < count; ++b) {
        const std::size_t len = len_dist(rng);
        std::int32_t* row = t.ids.data() + b * context;
        row[0] = 256;
        for (std::size_t i = 1; i + 1 < len; ++i)
            row[i] = (vocab_size > 259 && (rng() & 3) == 0)
                         ? static_cast<std::int32_t>(merged_dist(rng))
                         : id_dist(rng);
        row[len - 1] = 257;
        t.lengths.push_back(len);
    }
    return t;
}

/// Fixed unit centroids plus isotropic noise of scale sigma, rows renormalised.
/// The centroids depend only on (classes, dim); seed drives the noise.
inline FeatureSet cluster_features(std::size_t classes, std::size_t dim, std::size_t per_class, double sigma,
                                   std::uint64_t seed, FeatureSplit split = FeatureSplit::train_pool) {
    std::mt19937_64 centre_rng(0xC0FFEE + classes * 1000 + dim);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix<double> centres(classes, dim);
    for (double& v : centres.data) v = n(centre_rng);
    centres = normalize_rows(std::move(centres)).vectors;
    std::mt19937_64 rng(seed);
    FeatureSet out;
    out.num_classes = classes;
    out.split = split;
    Matrix<double> raw(classes * per_class, dim);
    for (std::size_t i = 0; i < classes * per_class; ++i) {
        const std::size_t c = i % classes;
        for (std::size_t d = 0; d < dim; ++d) raw(i, d) = centres(c, d) + sigma * n(rng);
        out.labels.push_back(c);
    }
    out.features = normalize_rows(std::move(raw)).vectors;
    return out;
}

}  // namespace duoclip::testing
