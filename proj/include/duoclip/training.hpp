// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Symmetric contrastive training of the two towers.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "duoclip/embedding.hpp"
#include "duoclip/image.hpp"
#include "duoclip/model.hpp"
#include "duoclip/tokenizer.hpp"

namespace duoclip {

enum class TrainRegime { from_scratch, finetune, frozen_adapter };

std::string to_string(TrainRegime r);
TrainRegime parse_regime(const std::string& s);

struct TrainConfig {
    std::size_t batch_size = 32;
    /// Split each batch into chunks of this size, each with its own similarity
    /// matrix (negatives never cross chunks). 0 disables accumulation.
    std::size_t micro_batch = 0;
    std::size_t total_steps = 1000;
    std::size_t warmup_steps = 20;
    double peak_lr = 5e-4;
    double weight_decay = 0.2;
    std::uint64_t seed = 0;
    TrainRegime regime = TrainRegime::from_scratch;
    double temperature_init = 1.0 / 0.07;  // initial logit multiplier
    double temperature_max = 100.0;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-6;

    void validate() const;
};

/// Reference schedules of the published training runs.
enum class ReferenceStage {
    large_224_from_scratch,  // 380K steps
    large_336_resolution,    // +15K steps
    base_224_finetune,       // 140K steps
    base_384_resolution,     // +20K steps
};

/// Batch 32768, stage step budget, warmup 2% of steps.
TrainConfig reference_stage_config(ReferenceStage stage);

/// Default warmup: 2% of total steps, at least 1 when total > 1.
std::size_t default_warmup(std::size_t total_steps);

/// Linear warmup 0 -> peak over warmup_steps, then cosine decay to 0 at total_steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

/// Learnable log logit-scale; the multiplier is exp(log_scale).
struct Temperature {
    double log_scale = 0.0;
    double scale() const;
};

/// S[i][j] = scale * <img_i, txt_j>. Rows of both inputs must be unit norm.
template <class T>
Matrix<T> similarity_matrix(const EmbeddingMatrix<T>& img, const EmbeddingMatrix<T>& txt,
                            Temperature temp);

template <class T>
struct LossResult {
    T loss = 0;
    Matrix<T> grad;  // dLoss/dS
};

/// Mean of row-wise and column-wise cross entropy with diagonal targets.
template <class T>
LossResult<T> contrastive_loss(const Matrix<T>& logits);

/// Fraction of rows whose argmax is the diagonal, image->text and text->image.
struct RetrievalAccuracy {
    double image_to_text = 0;
    double text_to_image = 0;
};

template <class T>
RetrievalAccuracy retrieval_accuracy(const EmbeddingMatrix<T>& img, const EmbeddingMatrix<T>& txt);

/// Aligned image/caption pairs, ready for the towers.
struct PairDataset {
    ImageBatch images;
    TokenBatch tokens;
    std::size_t size() const { return images.count; }
};

template <class T>
struct TrainState {
    ClipModel<T> model;
    std::vector<T> first_moment;
    std::vector<T> second_moment;
    std::size_t step = 0;
    std::uint64_t rng_state = 0;  // seed of the batch-order stream
    std::vector<double> loss_history;
    std::vector<bool> trainable;  // per tensor index
    TrainRegime regime = TrainRegime::from_scratch;
};

/// Fresh optimiser state. frozen_adapter requires a model with the image adapter.
template <class T>
TrainState<T> make_train_state(ClipModel<T> model, const TrainConfig& cfg);

/// Freezes the whole model and appends an identity-initialised two-layer
/// joint_dim -> joint_dim adapter to the image head; only the adapter trains.
template <class T>
TrainState<T> build_frozen_adapter(const ClipModel<T>& base, const TrainConfig& cfg);

struct StepResult {
    std::size_t step = 0;  // index of the step just taken
    double loss = 0;
    double lr = 0;
    double temperature = 0;      // logit multiplier after the update
    std::vector<double> grad_norms;  // per tensor, L2
};

/// Loss and gradients (accumulated into grads, laid out like params) for one batch.
/// Tensors with trainable[i] == false get exactly zero gradient.
template <class T>
T compute_gradients(const ClipModel<T>& model, const ImageBatch& images, const TokenBatch& tokens,
                    const std::vector<bool>& trainable, std::size_t micro_batch,
                    std::vector<T>& grads);

/// Forward-only objective value.
template <class T>
T evaluate_loss(const ClipModel<T>& model, const ImageBatch& images, const TokenBatch& tokens,
                std::size_t micro_batch = 0);

template <class T>
StepResult train_step(TrainState<T>& state, const ImageBatch& images, const TokenBatch& tokens,
                      const TrainConfig& cfg);

/// Deterministic batch for a step: epoch-wise shuffles of [0, n) seeded by seed.
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                       std::size_t step);

using StepCallback = std::function<void(const StepResult&)>;

/// Runs train_step from state.step up to cfg.total_steps.
template <class T>
void train(TrainState<T>& state, const PairDataset& data, const TrainConfig& cfg,
           const StepCallback& on_step = {});

/// Interpolates positional embeddings to new_resolution, then trains for
/// cfg.total_steps on data (which must already be at the new resolution).
template <class T>
TrainState<T> finetune_resolution(const ClipModel<T>& checkpoint, std::size_t new_resolution,
                                  const TrainConfig& cfg, const PairDataset& data,
                                  const StepCallback& on_step = {});

/// CSV header "step,loss,lr,temperature".
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const StepResult& r);

}  // namespace duoclip
