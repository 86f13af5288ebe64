// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dual-encoder model: a causal transformer over token ids and a ViT over
// image patches, each ending in a projection into a shared joint space and
// L2 normalisation.
//
// Tensor names follow the usual CLIP layout ("token_embedding",
// "transformer.resblocks.N.attn.in_proj_weight", "visual.proj", ...). Linear
// weights are stored [in, out].

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "duoclip/config.hpp"
#include "duoclip/embedding.hpp"
#include "duoclip/image.hpp"
#include "duoclip/params.hpp"
#include "duoclip/tokenizer.hpp"

namespace duoclip {

/// Saved forward state of one pre-norm residual block.
template <class T>
struct BlockActivations {
    std::vector<T> input, ln1, ln1_mean, ln1_rstd, qkv, probs, attn, mid, ln2, ln2_mean, ln2_rstd,
        fc, act;
};

template <class T>
struct TrunkActivations {
    std::size_t batch = 0;
    std::size_t seq = 0;
    std::vector<BlockActivations<T>> blocks;
    std::vector<T> output;  // [batch*seq, width]
};

/// Shared tail of both towers: pool -> layer norm -> projection (-> adapter) -> normalise.
template <class T>
struct HeadActivations {
    std::vector<T> pooled, ln, ln_mean, ln_rstd, projected, adapter_hidden, raw;
    Matrix<T> normalized;
    std::vector<T> norms;
};

template <class T>
struct TextActivations {
    TokenBatch tokens;
    TrunkActivations<T> trunk;
    HeadActivations<T> head;
};

template <class T>
struct ImageActivations {
    std::size_t batch = 0;
    std::vector<T> patches;  // [batch*num_patches, 3*P*P]
    TrunkActivations<T> trunk;
    HeadActivations<T> head;
};

template <class T>
class ClipModel {
public:
    /// All parameters zero; call init_weights() or load values.
    explicit ClipModel(ModelConfig config);

    /// Truncated-normal init per config.init, deterministic in seed.
    void init_weights(std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    /// exp(logit_scale)
    T logit_scale() const;

    EmbeddingMatrix<T> encode_text(const TokenBatch& tokens) const;
    EmbeddingMatrix<T> encode_image(const ImageBatch& images) const;

    // Training entry points: forward with saved activations, then backward
    // accumulating into a gradient buffer laid out like params().data().
    EmbeddingMatrix<T> forward_text(const TokenBatch& tokens, TextActivations<T>& acts) const;
    EmbeddingMatrix<T> forward_image(const ImageBatch& images, ImageActivations<T>& acts) const;
    void backward_text(const TextActivations<T>& acts, const Matrix<T>& d_embeddings,
                       std::span<T> grads) const;
    /// With backbone=false only the adapter receives gradients.
    void backward_image(const ImageActivations<T>& acts, const Matrix<T>& d_embeddings,
                        std::span<T> grads, bool backbone = true) const;

    /// Tensor indices of the image adapter (empty when disabled).
    std::vector<std::size_t> adapter_tensors() const;
    /// Tensor indices of the image tower, excluding the adapter.
    std::vector<std::size_t> image_backbone_tensors() const;
    std::size_t logit_scale_tensor() const { return logit_scale_; }

    /// Throws NumericError if any parameter is NaN/Inf.
    void check_finite() const;

    template <class U>
    ClipModel<U> cast() const {
        ClipModel<U> out(config_);
        for (std::size_t i = 0; i < params_.size(); ++i)
            out.params().data()[i] = static_cast<U>(params_.data()[i]);
        return out;
    }

private:
    struct LayerSlots {
        std::size_t ln1_w, ln1_b, qkv_w, qkv_b, out_w, out_b, ln2_w, ln2_b, fc_w, fc_b, proj_w,
            proj_b;
    };
    struct TrunkSlots {
        std::vector<LayerSlots> layers;
        std::size_t width = 0;
        std::size_t heads = 0;
        bool causal = false;
    };
    struct HeadSlots {
        std::size_t ln_w, ln_b, proj;
        std::size_t width, joint;
        bool adapter = false;
        std::size_t fc1_w = 0, fc1_b = 0, fc2_w = 0, fc2_b = 0;
    };

    TrunkSlots add_trunk(const std::string& prefix, std::size_t layers, std::size_t width,
                         std::size_t heads, bool causal);
    void trunk_forward(const TrunkSlots& slots, std::vector<T> x, TrunkActivations<T>& acts) const;
    void trunk_backward(const TrunkSlots& slots, const TrunkActivations<T>& acts,
                        std::vector<T> d_out, std::span<T> d_input, std::span<T> grads) const;
    Matrix<T> head_forward(const HeadSlots& slots, std::vector<T> pooled, std::size_t batch,
                           HeadActivations<T>& acts) const;
    /// Returns d(pooled); skips everything above the adapter when backbone is false.
    std::vector<T> head_backward(const HeadSlots& slots, const HeadActivations<T>& acts,
                                 const Matrix<T>& d_embeddings, std::span<T> grads,
                                 bool backbone) const;
    void validate_tokens(const TokenBatch& tokens) const;
    void validate_images(const ImageBatch& images) const;

    ModelConfig config_;
    ParamStore<T> params_;
    std::size_t token_embedding_, text_pos_, text_proj_;
    TrunkSlots text_trunk_;
    HeadSlots text_head_;
    std::size_t patch_embed_, class_embedding_, image_pos_;
    TrunkSlots image_trunk_;
    HeadSlots image_head_;
    std::size_t logit_scale_;
    std::size_t image_first_ = 0, image_last_ = 0;  // tensor index range of the image tower
};

/// Resamples the ViT positional grid for a new resolution (class-token row untouched).
/// Identical specs return a bitwise copy. Patch size must not change.
template <class T>
ClipModel<T> interpolate_pos_embeddings(const ClipModel<T>& model, const ImageSpec& new_spec);

/// Bicubic (a = -0.75, half-pixel centres, edge clamp) resample of a
/// [side, side, width] grid to [new_side, new_side, width].
template <class T>
std::vector<T> resample_grid(std::span<const T> grid, std::size_t side, std::size_t new_side,
                             std::size_t width);

/// Copy of the model with an identity-initialised two-layer image adapter.
template <class T>
ClipModel<T> with_identity_adapter(const ClipModel<T>& model);

}  // namespace duoclip
