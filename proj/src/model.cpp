// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "duoclip/error.hpp"
#include "duoclip/kernels.hpp"

namespace duoclip {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool contains(const std::string& s, std::string_view part) { return s.find(part) != std::string::npos; }

template <class T>
void add_into(std::vector<T>& dst, std::span<const T> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <class T>
ClipModel<T>::ClipModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto& t = config_.text;
    const auto& im = config_.image;
    const PatchGrid grid = patch_grid(im.spec);
    const std::size_t joint = config_.joint_dim;

    token_embedding_ = params_.add("token_embedding", {t.vocab_size, t.width}, true);
    text_pos_ = params_.add("positional_embedding", {t.context_length, t.width}, true);
    text_trunk_ = add_trunk("transformer", t.layers, t.width, t.heads, true);
    text_head_.ln_w = params_.add("ln_final.weight", {t.width}, false);
    text_head_.ln_b = params_.add("ln_final.bias", {t.width}, false);
    text_head_.proj = params_.add("text_projection", {t.width, joint}, true);
    text_proj_ = text_head_.proj;
    text_head_.width = t.width;
    text_head_.joint = joint;

    image_first_ = params_.tensors().size();
    patch_embed_ = params_.add("visual.conv1.weight", {grid.patch_dim, im.width}, true);
    class_embedding_ = params_.add("visual.class_embedding", {im.width}, false);
    image_pos_ = params_.add("visual.positional_embedding", {grid.sequence_length, im.width}, true);
    image_trunk_ = add_trunk("visual.transformer", im.layers, im.width, im.heads, false);
    image_head_.ln_w = params_.add("visual.ln_post.weight", {im.width}, false);
    image_head_.ln_b = params_.add("visual.ln_post.bias", {im.width}, false);
    image_head_.proj = params_.add("visual.proj", {im.width, joint}, true);
    image_head_.width = im.width;
    image_head_.joint = joint;
    if (config_.image_adapter) {
        image_head_.adapter = true;
        image_head_.fc1_w = params_.add("visual.adapter.fc1.weight", {joint, joint}, true);
        image_head_.fc1_b = params_.add("visual.adapter.fc1.bias", {joint}, false);
        image_head_.fc2_w = params_.add("visual.adapter.fc2.weight", {joint, joint}, true);
        image_head_.fc2_b = params_.add("visual.adapter.fc2.bias", {joint}, false);
    }
    image_last_ = params_.tensors().size();
    logit_scale_ = params_.add("logit_scale", {1}, false);
}

template <class T>
typename ClipModel<T>::TrunkSlots ClipModel<T>::add_trunk(const std::string& prefix,
                                                         std::size_t layers, std::size_t width,
                                                         std::size_t heads, bool causal) {
    TrunkSlots s;
    s.width = width;
    s.heads = heads;
    s.causal = causal;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = prefix + ".resblocks." + std::to_string(l) + ".";
        LayerSlots ls{};
        ls.ln1_w = params_.add(p + "ln_1.weight", {width}, false);
        ls.ln1_b = params_.add(p + "ln_1.bias", {width}, false);
        ls.qkv_w = params_.add(p + "attn.in_proj_weight", {width, 3 * width}, true);
        ls.qkv_b = params_.add(p + "attn.in_proj_bias", {3 * width}, false);
        ls.out_w = params_.add(p + "attn.out_proj.weight", {width, width}, true);
        ls.out_b = params_.add(p + "attn.out_proj.bias", {width}, false);
        ls.ln2_w = params_.add(p + "ln_2.weight", {width}, false);
        ls.ln2_b = params_.add(p + "ln_2.bias", {width}, false);
        ls.fc_w = params_.add(p + "mlp.c_fc.weight", {width, 4 * width}, true);
        ls.fc_b = params_.add(p + "mlp.c_fc.bias", {4 * width}, false);
        ls.proj_w = params_.add(p + "mlp.c_proj.weight", {4 * width, width}, true);
        ls.proj_b = params_.add(p + "mlp.c_proj.bias", {width}, false);
        s.layers.push_back(ls);
    }
    return s;
}

template <class T>
void ClipModel<T>::init_weights(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto truncated = [&](double stdev) {
        double x = 0;
        do {
            x = normal(rng);
        } while (std::abs(x) > 2.0);
        return static_cast<T>(x * stdev);
    };
    const auto& init = config_.init;
    for (std::size_t i = 0; i < params_.tensors().size(); ++i) {
        const TensorInfo& info = params_.info(i);
        auto v = params_.view(i);
        const std::string& name = info.name;
        const bool visual = name.rfind("visual.", 0) == 0;
        const std::size_t layers = visual ? config_.image.layers : config_.text.layers;
        if (i == logit_scale_) {
            v[0] = static_cast<T>(init.logit_scale);
        } else if (contains(name, "adapter.") && ends_with(name, ".weight")) {
            const std::size_t n = info.shape[0];
            std::fill(v.begin(), v.end(), T(0));
            for (std::size_t d = 0; d < n; ++d) v[d * n + d] = T(1);
        } else if (ends_with(name, "bias")) {
            std::fill(v.begin(), v.end(), T(0));
        } else if (contains(name, "ln_") && ends_with(name, ".weight")) {
            std::fill(v.begin(), v.end(), T(1));
        } else if (contains(name, "out_proj.weight") || contains(name, "c_proj.weight")) {
            const double stdev = init.residual_std / std::sqrt(2.0 * static_cast<double>(layers));
            for (T& x : v) x = truncated(stdev);
        } else if (contains(name, "embedding")) {
            for (T& x : v) x = truncated(init.embedding_std);
        } else {
            for (T& x : v) x = truncated(init.projection_std);
        }
    }
}

template <class T>
T ClipModel<T>::logit_scale() const {
    return std::exp(params_.view(logit_scale_)[0]);
}

template <class T>
void ClipModel<T>::check_finite() const {
    for (const auto& info : params_.tensors()) {
        const auto v = params_[info.name];
        for (T x : v)
            if (!std::isfinite(x)) throw NumericError("non-finite weight in tensor " + info.name);
    }
}

template <class T>
std::vector<std::size_t> ClipModel<T>::adapter_tensors() const {
    if (!image_head_.adapter) return {};
    return {image_head_.fc1_w, image_head_.fc1_b, image_head_.fc2_w, image_head_.fc2_b};
}

template <class T>
std::vector<std::size_t> ClipModel<T>::image_backbone_tensors() const {
    const auto adapter = adapter_tensors();
    std::vector<std::size_t> out;
    for (std::size_t i = image_first_; i < image_last_; ++i)
        if (std::find(adapter.begin(), adapter.end(), i) == adapter.end()) out.push_back(i);
    return out;
}

template <class T>
void ClipModel<T>::trunk_forward(const TrunkSlots& slots, std::vector<T> x,
                                 TrunkActivations<T>& acts) const {
    const std::size_t n = acts.batch * acts.seq;
    const std::size_t w = slots.width;
    const kernels::AttentionShape shape{acts.batch, acts.seq, w, slots.heads, slots.causal};
    const bool keep = acts.blocks.size() == slots.layers.size();
    for (std::size_t l = 0; l < slots.layers.size(); ++l) {
        const LayerSlots& ls = slots.layers[l];
        BlockActivations<T>& b = keep ? acts.blocks[l] : acts.blocks.front();
        b.input = std::move(x);
        b.ln1.resize(n * w);
        b.ln1_mean.resize(n);
        b.ln1_rstd.resize(n);
        kernels::layernorm<T>(b.input, params_.view(ls.ln1_w), params_.view(ls.ln1_b), b.ln1,
                              b.ln1_mean, b.ln1_rstd, n, w);
        b.qkv.resize(n * 3 * w);
        kernels::matmul<T>(b.ln1, params_.view(ls.qkv_w), params_.view(ls.qkv_b), b.qkv, n, w,
                           3 * w);
        b.probs.resize(acts.batch * slots.heads * acts.seq * acts.seq);
        b.attn.resize(n * w);
        kernels::attention<T>(b.qkv, b.attn, b.probs, shape);
        b.mid.resize(n * w);
        kernels::matmul<T>(b.attn, params_.view(ls.out_w), params_.view(ls.out_b), b.mid, n, w, w);
        add_into<T>(b.mid, b.input);

        b.ln2.resize(n * w);
        b.ln2_mean.resize(n);
        b.ln2_rstd.resize(n);
        kernels::layernorm<T>(b.mid, params_.view(ls.ln2_w), params_.view(ls.ln2_b), b.ln2,
                              b.ln2_mean, b.ln2_rstd, n, w);
        b.fc.resize(n * 4 * w);
        kernels::matmul<T>(b.ln2, params_.view(ls.fc_w), params_.view(ls.fc_b), b.fc, n, w, 4 * w);
        b.act.resize(n * 4 * w);
        kernels::gelu<T>(b.fc, b.act);
        x.assign(n * w, T(0));
        kernels::matmul<T>(b.act, params_.view(ls.proj_w), params_.view(ls.proj_b), x, n, 4 * w, w);
        add_into<T>(x, b.mid);
    }
    acts.output = std::move(x);
}

template <class T>
void ClipModel<T>::trunk_backward(const TrunkSlots& slots, const TrunkActivations<T>& acts,
                                  std::vector<T> d_out, std::span<T> d_input,
                                  std::span<T> grads) const {
    const std::size_t n = acts.batch * acts.seq;
    const std::size_t w = slots.width;
    const kernels::AttentionShape shape{acts.batch, acts.seq, w, slots.heads, slots.causal};
    auto g = [&](std::size_t idx) { return params_.slice(grads, idx); };
    std::vector<T> dx = std::move(d_out);
    for (std::size_t l = slots.layers.size(); l-- > 0;) {
        const LayerSlots& ls = slots.layers[l];
        const BlockActivations<T>& b = acts.blocks[l];

        std::vector<T> d_mid = dx;
        std::vector<T> d_act(n * 4 * w, T(0));
        kernels::matmul_backward<T>(dx, b.act, params_.view(ls.proj_w), d_act, g(ls.proj_w),
                                    g(ls.proj_b), n, 4 * w, w);
        std::vector<T> d_fc(n * 4 * w, T(0));
        kernels::gelu_backward<T>(d_act, b.fc, d_fc);
        std::vector<T> d_ln2(n * w, T(0));
        kernels::matmul_backward<T>(d_fc, b.ln2, params_.view(ls.fc_w), d_ln2, g(ls.fc_w),
                                    g(ls.fc_b), n, w, 4 * w);
        kernels::layernorm_backward<T>(d_ln2, b.mid, params_.view(ls.ln2_w), b.ln2_mean,
                                       b.ln2_rstd, d_mid, g(ls.ln2_w), g(ls.ln2_b), n, w);

        std::vector<T> d_in = d_mid;
        std::vector<T> d_attn(n * w, T(0));
        kernels::matmul_backward<T>(d_mid, b.attn, params_.view(ls.out_w), d_attn, g(ls.out_w),
                                    g(ls.out_b), n, w, w);
        std::vector<T> d_qkv(n * 3 * w, T(0));
        kernels::attention_backward<T>(d_attn, b.qkv, b.probs, d_qkv, shape);
        std::vector<T> d_ln1(n * w, T(0));
        kernels::matmul_backward<T>(d_qkv, b.ln1, params_.view(ls.qkv_w), d_ln1, g(ls.qkv_w),
                                    g(ls.qkv_b), n, w, 3 * w);
        kernels::layernorm_backward<T>(d_ln1, b.input, params_.view(ls.ln1_w), b.ln1_mean,
                                       b.ln1_rstd, d_in, g(ls.ln1_w), g(ls.ln1_b), n, w);
        dx = std::move(d_in);
    }
    std::copy(dx.begin(), dx.end(), d_input.begin());
}

template <class T>
Matrix<T> ClipModel<T>::head_forward(const HeadSlots& slots, std::vector<T> pooled,
                                     std::size_t batch, HeadActivations<T>& acts) const {
    const std::size_t w = slots.width;
    const std::size_t j = slots.joint;
    acts.pooled = std::move(pooled);
    acts.ln.resize(batch * w);
    acts.ln_mean.resize(batch);
    acts.ln_rstd.resize(batch);
    kernels::layernorm<T>(acts.pooled, params_.view(slots.ln_w), params_.view(slots.ln_b), acts.ln,
                          acts.ln_mean, acts.ln_rstd, batch, w);
    acts.projected.resize(batch * j);
    kernels::matmul<T>(acts.ln, params_.view(slots.proj), {}, acts.projected, batch, w, j);
    if (slots.adapter) {
        acts.adapter_hidden.resize(batch * j);
        kernels::matmul<T>(acts.projected, params_.view(slots.fc1_w), params_.view(slots.fc1_b),
                           acts.adapter_hidden, batch, j, j);
        acts.raw.resize(batch * j);
        kernels::matmul<T>(acts.adapter_hidden, params_.view(slots.fc2_w),
                           params_.view(slots.fc2_b), acts.raw, batch, j, j);
    } else {
        acts.raw = acts.projected;
    }
    acts.normalized = Matrix<T>(batch, j);
    acts.norms.resize(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const T* r = acts.raw.data() + b * j;
        T ss = 0;
        for (std::size_t d = 0; d < j; ++d) ss += r[d] * r[d];
        const T norm = std::sqrt(ss);
        if (!(norm > T(0)) || !std::isfinite(norm))
            throw NumericError("embedding row " + std::to_string(b) + " has norm " +
                               std::to_string(static_cast<double>(norm)));
        acts.norms[b] = norm;
        for (std::size_t d = 0; d < j; ++d) acts.normalized(b, d) = r[d] / norm;
    }
    return acts.normalized;
}

template <class T>
std::vector<T> ClipModel<T>::head_backward(const HeadSlots& slots, const HeadActivations<T>& acts,
                                           const Matrix<T>& d_emb, std::span<T> grads,
                                           bool backbone) const {
    const std::size_t batch = acts.norms.size();
    const std::size_t w = slots.width;
    const std::size_t j = slots.joint;
    auto g = [&](std::size_t idx) { return params_.slice(grads, idx); };
    if (d_emb.rows != batch || d_emb.cols != j)
        throw UsageError("embedding gradient has the wrong shape");

    std::vector<T> d_raw(batch * j);
    for (std::size_t b = 0; b < batch; ++b) {
        T dot = 0;
        for (std::size_t d = 0; d < j; ++d) dot += acts.normalized(b, d) * d_emb(b, d);
        for (std::size_t d = 0; d < j; ++d)
            d_raw[b * j + d] = (d_emb(b, d) - acts.normalized(b, d) * dot) / acts.norms[b];
    }
    std::vector<T> d_proj;
    if (slots.adapter) {
        std::vector<T> d_hidden(batch * j, T(0));
        kernels::matmul_backward<T>(d_raw, acts.adapter_hidden, params_.view(slots.fc2_w), d_hidden,
                                    g(slots.fc2_w), g(slots.fc2_b), batch, j, j);
        if (backbone) d_proj.assign(batch * j, T(0));
        kernels::matmul_backward<T>(d_hidden, acts.projected, params_.view(slots.fc1_w), d_proj,
                                    g(slots.fc1_w), g(slots.fc1_b), batch, j, j);
    } else {
        d_proj = std::move(d_raw);
    }
    if (!backbone) return {};

    std::vector<T> d_ln(batch * w, T(0));
    kernels::matmul_backward<T>(d_proj, acts.ln, params_.view(slots.proj), d_ln, g(slots.proj), {},
                                batch, w, j);
    std::vector<T> d_pooled(batch * w, T(0));
    kernels::layernorm_backward<T>(d_ln, acts.pooled, params_.view(slots.ln_w), acts.ln_mean,
                                   acts.ln_rstd, d_pooled, g(slots.ln_w), g(slots.ln_b), batch, w);
    return d_pooled;
}

template <class T>
void ClipModel<T>::validate_tokens(const TokenBatch& tokens) const {
    const std::size_t ctx = config_.text.context_length;
    if (tokens.batch() == 0) throw UsageError("encode_text: empty batch");
    if (tokens.context_length != ctx)
        throw UsageError("encode_text: token rows have length " +
                         std::to_string(tokens.context_length) + ", model expects " +
                         std::to_string(ctx));
    if (tokens.ids.size() != tokens.batch() * ctx)
        throw UsageError("encode_text: id buffer does not match batch size");
    for (std::size_t b = 0; b < tokens.batch(); ++b)
        if (tokens.lengths[b] < 2 || tokens.lengths[b] > ctx)
            throw DataError("encode_text: row " + std::to_string(b) + " has invalid length");
    for (std::int32_t id : tokens.ids)
        if (id < 0 || static_cast<std::size_t>(id) >= config_.text.vocab_size)
            throw DataError("encode_text: token id " + std::to_string(id) +
                            " out of range for vocab size " +
                            std::to_string(config_.text.vocab_size));
}

template <class T>
void ClipModel<T>::validate_images(const ImageBatch& images) const {
    const ImageSpec& want = config_.image.spec;
    if (images.spec.resolution != want.resolution || images.spec.patch_size != want.patch_size)
        throw UsageError("encode_image: batch is " + std::to_string(images.spec.resolution) +
                         " px / patch " + std::to_string(images.spec.patch_size) +
                         ", model expects " + std::to_string(want.resolution) + " px / patch " +
                         std::to_string(want.patch_size));
    if (images.count == 0) throw UsageError("encode_image: empty batch");
    if (images.pixels.size() != images.count * images.image_size())
        throw UsageError("encode_image: pixel buffer does not match batch size");
}

template <class T>
EmbeddingMatrix<T> ClipModel<T>::forward_text(const TokenBatch& tokens,
                                              TextActivations<T>& acts) const {
    validate_tokens(tokens);
    const std::size_t batch = tokens.batch();
    const std::size_t ctx = config_.text.context_length;
    const std::size_t w = config_.text.width;
    const auto tok = params_.view(token_embedding_);
    const auto pos = params_.view(text_pos_);

    std::vector<T> x(batch * ctx * w);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < ctx; ++t) {
            const auto id = static_cast<std::size_t>(tokens.ids[b * ctx + t]);
            T* dst = x.data() + (b * ctx + t) * w;
            for (std::size_t d = 0; d < w; ++d) dst[d] = tok[id * w + d] + pos[t * w + d];
        }
    }
    acts.tokens = tokens;
    acts.trunk.batch = batch;
    acts.trunk.seq = ctx;
    if (acts.trunk.blocks.empty()) acts.trunk.blocks.resize(text_trunk_.layers.size());
    trunk_forward(text_trunk_, std::move(x), acts.trunk);

    std::vector<T> pooled(batch * w);
    for (std::size_t b = 0; b < batch; ++b) {
        const T* src = acts.trunk.output.data() + (b * ctx + tokens.eot_position(b)) * w;
        std::copy_n(src, w, pooled.data() + b * w);
    }
    return {head_forward(text_head_, std::move(pooled), batch, acts.head), true};
}

template <class T>
void ClipModel<T>::backward_text(const TextActivations<T>& acts, const Matrix<T>& d_embeddings,
                                 std::span<T> grads) const {
    const std::size_t batch = acts.tokens.batch();
    const std::size_t ctx = config_.text.context_length;
    const std::size_t w = config_.text.width;
    if (acts.trunk.blocks.size() != text_trunk_.layers.size())
        throw UsageError("backward_text: activations were not kept");
    const auto d_pooled = head_backward(text_head_, acts.head, d_embeddings, grads, true);

    std::vector<T> d_out(batch * ctx * w, T(0));
    for (std::size_t b = 0; b < batch; ++b)
        std::copy_n(d_pooled.data() + b * w, w,
                    d_out.data() + (b * ctx + acts.tokens.eot_position(b)) * w);
    std::vector<T> d_x(batch * ctx * w, T(0));
    trunk_backward(text_trunk_, acts.trunk, std::move(d_out), d_x, grads);

    auto d_tok = params_.slice(grads, token_embedding_);
    auto d_pos = params_.slice(grads, text_pos_);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < ctx; ++t) {
            const auto id = static_cast<std::size_t>(acts.tokens.ids[b * ctx + t]);
            const T* src = d_x.data() + (b * ctx + t) * w;
            for (std::size_t d = 0; d < w; ++d) {
                d_tok[id * w + d] += src[d];
                d_pos[t * w + d] += src[d];
            }
        }
    }
}

template <class T>
EmbeddingMatrix<T> ClipModel<T>::forward_image(const ImageBatch& images,
                                               ImageActivations<T>& acts) const {
    validate_images(images);
    const ImageSpec& spec = config_.image.spec;
    const PatchGrid grid = patch_grid(spec);
    const std::size_t batch = images.count;
    const std::size_t w = config_.image.width;
    const std::size_t p = spec.patch_size;
    const std::size_t r = spec.resolution;
    const std::size_t seq = grid.sequence_length;

    acts.batch = batch;
    acts.patches.resize(batch * grid.num_patches * grid.patch_dim);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto img = images.image(b);
        for (std::size_t py = 0; py < grid.patches_per_side; ++py) {
            for (std::size_t px = 0; px < grid.patches_per_side; ++px) {
                T* dst = acts.patches.data() +
                         (b * grid.num_patches + py * grid.patches_per_side + px) * grid.patch_dim;
                for (std::size_t c = 0; c < 3; ++c)
                    for (std::size_t dy = 0; dy < p; ++dy)
                        for (std::size_t dx = 0; dx < p; ++dx)
                            *dst++ = static_cast<T>(img[(c * r + py * p + dy) * r + px * p + dx]);
            }
        }
    }
    std::vector<T> embedded(batch * grid.num_patches * w);
    kernels::matmul<T>(acts.patches, params_.view(patch_embed_), {}, embedded,
                       batch * grid.num_patches, grid.patch_dim, w);

    const auto cls = params_.view(class_embedding_);
    const auto pos = params_.view(image_pos_);
    std::vector<T> x(batch * seq * w);
    for (std::size_t b = 0; b < batch; ++b) {
        T* row = x.data() + b * seq * w;
        for (std::size_t d = 0; d < w; ++d) row[d] = cls[d] + pos[d];
        for (std::size_t t = 1; t < seq; ++t) {
            const T* pe = embedded.data() + (b * grid.num_patches + t - 1) * w;
            for (std::size_t d = 0; d < w; ++d) row[t * w + d] = pe[d] + pos[t * w + d];
        }
    }
    acts.trunk.batch = batch;
    acts.trunk.seq = seq;
    if (acts.trunk.blocks.empty()) acts.trunk.blocks.resize(image_trunk_.layers.size());
    trunk_forward(image_trunk_, std::move(x), acts.trunk);

    std::vector<T> pooled(batch * w);
    for (std::size_t b = 0; b < batch; ++b)
        std::copy_n(acts.trunk.output.data() + b * seq * w, w, pooled.data() + b * w);
    return {head_forward(image_head_, std::move(pooled), batch, acts.head), true};
}

template <class T>
void ClipModel<T>::backward_image(const ImageActivations<T>& acts, const Matrix<T>& d_embeddings,
                                  std::span<T> grads, bool backbone) const {
    const auto d_pooled = head_backward(image_head_, acts.head, d_embeddings, grads, backbone);
    if (!backbone) return;
    if (acts.trunk.blocks.size() != image_trunk_.layers.size())
        throw UsageError("backward_image: activations were not kept");
    const PatchGrid grid = patch_grid(config_.image.spec);
    const std::size_t batch = acts.batch;
    const std::size_t w = config_.image.width;
    const std::size_t seq = grid.sequence_length;

    std::vector<T> d_out(batch * seq * w, T(0));
    for (std::size_t b = 0; b < batch; ++b)
        std::copy_n(d_pooled.data() + b * w, w, d_out.data() + b * seq * w);
    std::vector<T> d_x(batch * seq * w, T(0));
    trunk_backward(image_trunk_, acts.trunk, std::move(d_out), d_x, grads);

    auto d_cls = params_.slice(grads, class_embedding_);
    auto d_pos = params_.slice(grads, image_pos_);
    std::vector<T> d_embedded(batch * grid.num_patches * w);
    for (std::size_t b = 0; b < batch; ++b) {
        const T* row = d_x.data() + b * seq * w;
        for (std::size_t d = 0; d < w; ++d) d_cls[d] += row[d];
        for (std::size_t t = 0; t < seq; ++t)
            for (std::size_t d = 0; d < w; ++d) d_pos[t * w + d] += row[t * w + d];
        std::copy_n(row + w, grid.num_patches * w,
                    d_embedded.data() + b * grid.num_patches * w);
    }
    kernels::matmul_backward<T>(d_embedded, acts.patches, params_.view(patch_embed_), {},
                                params_.slice(grads, patch_embed_), {}, batch * grid.num_patches,
                                grid.patch_dim, w);
}

template <class T>
EmbeddingMatrix<T> ClipModel<T>::encode_text(const TokenBatch& tokens) const {
    check_finite();
    TextActivations<T> acts;
    acts.trunk.blocks.resize(1);  // inference: reuse one block's scratch buffers
    return forward_text(tokens, acts);
}

template <class T>
EmbeddingMatrix<T> ClipModel<T>::encode_image(const ImageBatch& images) const {
    check_finite();
    ImageActivations<T> acts;
    acts.trunk.blocks.resize(1);
    return forward_image(images, acts);
}

template <class T>
std::vector<T> resample_grid(std::span<const T> grid, std::size_t side, std::size_t new_side,
                             std::size_t width) {
    if (grid.size() != side * side * width) throw UsageError("resample_grid: bad grid size");
    if (side == new_side) return {grid.begin(), grid.end()};
    constexpr double a = -0.75;
    struct Tap {
        std::array<std::size_t, 4> idx;
        std::array<double, 4> w;
    };
    std::vector<Tap> taps(new_side);
    const double scale = static_cast<double>(side) / static_cast<double>(new_side);
    for (std::size_t o = 0; o < new_side; ++o) {
        const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        const double base = std::floor(src);
        const double t = src - base;
        for (int k = 0; k < 4; ++k) {
            const long i = static_cast<long>(base) + k - 1;
            taps[o].idx[k] = static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(side) - 1));
            taps[o].w[k] = cubic_kernel(t - static_cast<double>(k - 1), a);
        }
    }
    std::vector<T> out(new_side * new_side * width);
    for (std::size_t y = 0; y < new_side; ++y) {
        for (std::size_t x = 0; x < new_side; ++x) {
            for (std::size_t c = 0; c < width; ++c) {
                double acc = 0.0;
                for (int i = 0; i < 4; ++i) {
                    double row = 0.0;
                    for (int j = 0; j < 4; ++j)
                        row += taps[x].w[j] *
                               static_cast<double>(grid[(taps[y].idx[i] * side + taps[x].idx[j]) * width + c]);
                    acc += taps[y].w[i] * row;
                }
                out[(y * new_side + x) * width + c] = static_cast<T>(acc);
            }
        }
    }
    return out;
}

template <class T>
ClipModel<T> interpolate_pos_embeddings(const ClipModel<T>& model, const ImageSpec& new_spec) {
    const ImageSpec& old_spec = model.config().image.spec;
    if (new_spec.patch_size != old_spec.patch_size)
        throw UsageError("interpolate_pos_embeddings: patch size changes from " +
                         std::to_string(old_spec.patch_size) + " to " +
                         std::to_string(new_spec.patch_size));
    const PatchGrid old_grid = patch_grid(old_spec);
    const PatchGrid new_grid = patch_grid(new_spec);
    if (new_spec == old_spec) return model;

    ModelConfig cfg = model.config();
    cfg.image.spec = new_spec;
    ClipModel<T> out(cfg);
    const std::size_t w = cfg.image.width;
    for (const auto& info : out.params().tensors()) {
        auto dst = out.params()[info.name];
        const auto src = model.params()[info.name];
        if (info.name != "visual.positional_embedding") {
            std::copy(src.begin(), src.end(), dst.begin());
            continue;
        }
        std::copy_n(src.begin(), w, dst.begin());
        const auto resampled = resample_grid<T>(src.subspan(w), old_grid.patches_per_side,
                                                new_grid.patches_per_side, w);
        std::copy(resampled.begin(), resampled.end(), dst.begin() + static_cast<long>(w));
    }
    return out;
}

template <class T>
ClipModel<T> with_identity_adapter(const ClipModel<T>& model) {
    if (model.config().image_adapter) return model;
    ModelConfig cfg = model.config();
    cfg.image_adapter = true;
    ClipModel<T> out(cfg);
    for (const auto& info : model.params().tensors()) {
        const auto src = model.params()[info.name];
        auto dst = out.params()[info.name];
        std::copy(src.begin(), src.end(), dst.begin());
    }
    const std::size_t j = cfg.joint_dim;
    for (const char* name : {"visual.adapter.fc1.weight", "visual.adapter.fc2.weight"}) {
        auto v = out.params()[name];
        for (std::size_t d = 0; d < j; ++d) v[d * j + d] = T(1);
    }
    return out;
}

template class ClipModel<float>;
template class ClipModel<double>;
template std::vector<float> resample_grid<float>(std::span<const float>, std::size_t, std::size_t,
                                                 std::size_t);
template std::vector<double> resample_grid<double>(std::span<const double>, std::size_t,
                                                   std::size_t, std::size_t);
template ClipModel<float> interpolate_pos_embeddings<float>(const ClipModel<float>&, const ImageSpec&);
template ClipModel<double> interpolate_pos_embeddings<double>(const ClipModel<double>&,
                                                              const ImageSpec&);
template ClipModel<float> with_identity_adapter<float>(const ClipModel<float>&);
template ClipModel<double> with_identity_adapter<double>(const ClipModel<double>&);

}  // namespace duoclip
