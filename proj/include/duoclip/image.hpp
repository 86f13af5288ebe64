// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace duoclip {

/// Decoded 8-bit raster, interleaved channels (HWC).
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 3;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
};

struct ImageSpec {
    std::size_t resolution = 224;
    std::size_t patch_size = 16;
    std::array<float, 3> mean = {0.481f, 0.458f, 0.408f};
    std::array<float, 3> std = {0.269f, 0.261f, 0.276f};

    bool operator==(const ImageSpec&) const = default;
};

struct PatchGrid {
    std::size_t patches_per_side = 0;
    std::size_t num_patches = 0;
    std::size_t sequence_length = 0;  // patches + class token
    std::size_t patch_dim = 0;        // 3 * P * P
};

/// Throws UsageError when resolution is not a multiple of patch_size.
PatchGrid patch_grid(const ImageSpec& spec);

/// Batch of normalised CHW images, all at spec.resolution.
struct ImageBatch {
    ImageSpec spec;
    std::size_t count = 0;
    std::vector<float> pixels;  // [count, 3, R, R]

    std::size_t image_size() const { return 3 * spec.resolution * spec.resolution; }
    std::span<const float> image(std::size_t i) const {
        return {pixels.data() + i * image_size(), image_size()};
    }
    ImageBatch select(std::span<const std::size_t> rows) const;
};

/// Geometry of resize-shorter-side-then-center-crop.
struct CropPlan {
    std::size_t resized_width = 0;
    std::size_t resized_height = 0;
    std::size_t offset_x = 0;
    std::size_t offset_y = 0;
};

CropPlan plan_resize_crop(std::size_t width, std::size_t height, std::size_t resolution);

/// Cubic convolution kernel with free parameter a (-0.5 image resize, -0.75 grid resampling).
double cubic_kernel(double x, double a);

/// Separable bicubic resample (a = -0.5, widened support when downscaling),
/// rounded to 8 bits after each pass. Same-size input is returned unchanged.
Image resize_bicubic(const Image& src, std::size_t width, std::size_t height);

/// Grayscale is replicated, alpha dropped; result is [3, R, R] normalised.
std::vector<float> preprocess(const Image& image, const ImageSpec& spec);

ImageBatch preprocess_batch(std::span<const Image> images, const ImageSpec& spec);

/// PPM/PGM (binary), PNG and JPEG, detected by magic bytes.
Image decode_image(const std::string& path);
Image decode_image_bytes(std::span<const std::uint8_t> bytes, const std::string& name);

/// Writes binary P6 (3 channels) or P5 (1 channel).
void write_ppm(const Image& image, const std::string& path);

}  // namespace duoclip
