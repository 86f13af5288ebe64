// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "duoclip/error.hpp"

#ifdef DUOCLIP_HAVE_PNG
#include <png.h>
#endif
#ifdef DUOCLIP_HAVE_JPEG
#include <jpeglib.h>
#endif

namespace duoclip {

PatchGrid patch_grid(const ImageSpec& spec) {
    if (spec.patch_size == 0 || spec.resolution == 0 || spec.resolution % spec.patch_size != 0)
        throw UsageError("resolution " + std::to_string(spec.resolution) +
                         " is not a multiple of patch size " + std::to_string(spec.patch_size));
    PatchGrid g;
    g.patches_per_side = spec.resolution / spec.patch_size;
    g.num_patches = g.patches_per_side * g.patches_per_side;
    g.sequence_length = g.num_patches + 1;
    g.patch_dim = 3 * spec.patch_size * spec.patch_size;
    return g;
}

ImageBatch ImageBatch::select(std::span<const std::size_t> rows) const {
    ImageBatch out;
    out.spec = spec;
    out.count = rows.size();
    out.pixels.reserve(rows.size() * image_size());
    for (std::size_t r : rows) {
        const auto img = image(r);
        out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    }
    return out;
}

double cubic_kernel(double x, double a) {
    x = std::abs(x);
    if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
    return 0.0;
}

namespace {

struct Taps {
    std::size_t first = 0;
    std::vector<double> weights;
};

std::vector<Taps> compute_taps(std::size_t in_size, std::size_t out_size) {
    const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
    const double filterscale = std::max(scale, 1.0);
    const double support = 2.0 * filterscale;
    std::vector<Taps> taps(out_size);
    for (std::size_t x = 0; x < out_size; ++x) {
        const double center = (static_cast<double>(x) + 0.5) * scale;
        const auto lo = static_cast<long>(std::max(0.0, std::floor(center - support + 0.5)));
        const auto hi = static_cast<long>(
            std::min(static_cast<double>(in_size), std::floor(center + support + 0.5)));
        Taps& t = taps[x];
        t.first = static_cast<std::size_t>(lo);
        double total = 0.0;
        for (long i = lo; i < hi; ++i) {
            const double w = cubic_kernel((static_cast<double>(i) - center + 0.5) / filterscale, -0.5);
            t.weights.push_back(w);
            total += w;
        }
        if (total != 0.0)
            for (double& w : t.weights) w /= total;
    }
    return taps;
}

std::uint8_t clamp_round(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Image to_rgb(const Image& src) {
    if (src.channels == 3) return src;
    Image out;
    out.width = src.width;
    out.height = src.height;
    out.channels = 3;
    out.pixels.resize(src.width * src.height * 3);
    for (std::size_t i = 0; i < src.width * src.height; ++i) {
        const std::uint8_t* p = src.pixels.data() + i * src.channels;
        if (src.channels <= 2) {
            out.pixels[i * 3] = out.pixels[i * 3 + 1] = out.pixels[i * 3 + 2] = p[0];
        } else {
            std::copy_n(p, 3, out.pixels.data() + i * 3);
        }
    }
    return out;
}

}  // namespace

CropPlan plan_resize_crop(std::size_t width, std::size_t height, std::size_t resolution) {
    if (width == 0 || height == 0) throw DataError("image has zero width or height");
    CropPlan p;
    if (width <= height) {
        p.resized_width = resolution;
        p.resized_height = std::max<std::size_t>(resolution, resolution * height / width);
    } else {
        p.resized_height = resolution;
        p.resized_width = std::max<std::size_t>(resolution, resolution * width / height);
    }
    p.offset_x = static_cast<std::size_t>(
        std::lround(static_cast<double>(p.resized_width - resolution) / 2.0));
    p.offset_y = static_cast<std::size_t>(
        std::lround(static_cast<double>(p.resized_height - resolution) / 2.0));
    return p;
}

Image resize_bicubic(const Image& src, std::size_t width, std::size_t height) {
    if (src.width == 0 || src.height == 0) throw DataError("image has zero width or height");
    if (src.width == width && src.height == height) return src;
    const std::size_t c = src.channels;
    const auto htaps = compute_taps(src.width, width);
    const auto vtaps = compute_taps(src.height, height);

    // The horizontal pass is rounded to 8 bits, as common resamplers do.
    std::vector<std::uint8_t> tmp(width * src.height * c);
    for (std::size_t y = 0; y < src.height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const Taps& t = htaps[x];
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weights.size(); ++k)
                    acc += t.weights[k] * src.at(t.first + k, y, ch);
                tmp[(y * width + x) * c + ch] = clamp_round(acc);
            }
        }
    }
    Image out;
    out.width = width;
    out.height = height;
    out.channels = c;
    out.pixels.resize(width * height * c);
    for (std::size_t y = 0; y < height; ++y) {
        const Taps& t = vtaps[y];
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weights.size(); ++k)
                    acc += t.weights[k] * tmp[((t.first + k) * width + x) * c + ch];
                out.pixels[(y * width + x) * c + ch] = clamp_round(acc);
            }
        }
    }
    return out;
}

std::vector<float> preprocess(const Image& image, const ImageSpec& spec) {
    if (image.width == 0 || image.height == 0) throw DataError("image has zero width or height");
    if (image.channels < 1 || image.channels > 4)
        throw DataError("unsupported channel count " + std::to_string(image.channels));
    if (image.pixels.size() != image.width * image.height * image.channels)
        throw DataError("image pixel buffer does not match its dimensions");
    const std::size_t r = spec.resolution;
    const Image rgb = to_rgb(image);
    const CropPlan plan = plan_resize_crop(rgb.width, rgb.height, r);
    const Image resized = resize_bicubic(rgb, plan.resized_width, plan.resized_height);

    std::vector<float> out(3 * r * r);
    for (std::size_t ch = 0; ch < 3; ++ch) {
        const float mean = spec.mean[ch];
        const float stdev = spec.std[ch];
        for (std::size_t y = 0; y < r; ++y) {
            for (std::size_t x = 0; x < r; ++x) {
                const float v = static_cast<float>(resized.at(x + plan.offset_x, y + plan.offset_y, ch));
                out[(ch * r + y) * r + x] = (v / 255.0f - mean) / stdev;
            }
        }
    }
    return out;
}

ImageBatch preprocess_batch(std::span<const Image> images, const ImageSpec& spec) {
    ImageBatch batch;
    batch.spec = spec;
    batch.count = images.size();
    batch.pixels.resize(images.size() * batch.image_size());
    const std::size_t stride = batch.image_size();
    // Each image lands in its own slot, so output order matches input order.
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(images.size()); ++i) {
        try {
            const auto one = preprocess(images[static_cast<std::size_t>(i)], spec);
            std::copy(one.begin(), one.end(), batch.pixels.begin() + i * static_cast<long>(stride));
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return batch;
}

namespace {

Image decode_pnm(std::span<const std::uint8_t> bytes, const std::string& name) {
    std::size_t pos = 2;
    auto next_int = [&]() -> std::size_t {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw DataError(name + ": malformed PNM header");
        return v;
    };
    Image img;
    img.channels = bytes[1] == '6' ? 3 : 1;
    img.width = next_int();
    img.height = next_int();
    const std::size_t maxval = next_int();
    if (maxval == 0 || maxval > 255) throw DataError(name + ": only 8-bit PNM is supported");
    ++pos;  // single whitespace byte before the raster
    const std::size_t need = img.width * img.height * img.channels;
    if (img.width == 0 || img.height == 0) throw DataError(name + ": zero-sized image");
    if (bytes.size() < pos + need) throw DataError(name + ": truncated PNM raster");
    img.pixels.assign(bytes.begin() + static_cast<long>(pos),
                      bytes.begin() + static_cast<long>(pos + need));
    if (maxval != 255)
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(p * 255 / maxval);
    return img;
}

#ifdef DUOCLIP_HAVE_PNG
Image decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
        throw DataError(name + ": " + png.message);
    png.format = PNG_FORMAT_RGB;
    Image img;
    img.width = png.width;
    img.height = png.height;
    img.channels = 3;
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw DataError(name + ": " + png.message);
    }
    return img;
}
#endif

#ifdef DUOCLIP_HAVE_JPEG
struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::span<const std::uint8_t> bytes, const std::string& name) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    Image img;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DataError(name + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    img.width = cinfo.output_width;
    img.height = cinfo.output_height;
    img.channels = 3;
    img.pixels.resize(img.width * img.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + cinfo.output_scanline * img.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}
#endif

}  // namespace

Image decode_image_bytes(std::span<const std::uint8_t> bytes, const std::string& name) {
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
        return decode_pnm(bytes, name);
    if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' &&
        bytes[3] == 'G') {
#ifdef DUOCLIP_HAVE_PNG
        return decode_png(bytes, name);
#else
        throw DataError(name + ": PNG support not compiled in");
#endif
    }
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
#ifdef DUOCLIP_HAVE_JPEG
        return decode_jpeg(bytes, name);
#else
        throw DataError(name + ": JPEG support not compiled in");
#endif
    }
    throw DataError(name + ": unrecognised image format");
}

Image decode_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read image: " + path);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
    return decode_image_bytes(bytes, path);
}

void write_ppm(const Image& image, const std::string& path) {
    if (image.channels != 1 && image.channels != 3)
        throw UsageError("write_ppm: only 1 or 3 channels");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write image: " + path);
    out << (image.channels == 3 ? "P6" : "P5") << "\n"
        << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
}

}  // namespace duoclip
