// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include "duoclip/error.hpp"

namespace duoclip {

namespace {

// Pairwise summation: exact for 2^k equal terms, stable otherwise.
template <class T>
T pairwise_sum(std::span<const T> v) {
    if (v.size() <= 2) {
        T s = 0;
        for (T x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

template <class T>
void require_normalized(const EmbeddingMatrix<T>& e, const char* what) {
    if (!e.normalized || !rows_have_unit_norm(e.vectors))
        throw UsageError(std::string(what) + " embeddings are not L2-normalised");
}

}  // namespace

std::string to_string(TrainRegime r) {
    switch (r) {
        case TrainRegime::from_scratch: return "from_scratch";
        case TrainRegime::finetune: return "finetune";
        case TrainRegime::frozen_adapter: return "frozen_adapter";
    }
    return "unknown";
}

TrainRegime parse_regime(const std::string& s) {
    if (s == "from_scratch") return TrainRegime::from_scratch;
    if (s == "finetune") return TrainRegime::finetune;
    if (s == "frozen_adapter") return TrainRegime::frozen_adapter;
    throw UsageError("unknown regime '" + s + "' (from_scratch | finetune | frozen_adapter)");
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw UsageError("batch_size must be >= 2 for contrastive negatives");
    if (micro_batch == 1) throw UsageError("micro_batch must be 0 or >= 2");
    if (total_steps > 0 && warmup_steps >= total_steps)
        throw UsageError("warmup_steps must be < total_steps");
    if (!(peak_lr >= 0) || !(weight_decay >= 0)) throw UsageError("lr and weight decay must be >= 0");
    if (!(temperature_init > 0) || !(temperature_max >= temperature_init))
        throw UsageError("need 0 < temperature_init <= temperature_max");
}

std::size_t default_warmup(std::size_t total_steps) {
    if (total_steps <= 1) return 0;
    return std::max<std::size_t>(1, total_steps / 50);
}

TrainConfig reference_stage_config(ReferenceStage stage) {
    TrainConfig c;
    c.batch_size = 32768;
    switch (stage) {
        case ReferenceStage::large_224_from_scratch:
            c.total_steps = 380000;
            c.regime = TrainRegime::from_scratch;
            break;
        case ReferenceStage::large_336_resolution:
            c.total_steps = 15000;
            c.regime = TrainRegime::finetune;
            break;
        case ReferenceStage::base_224_finetune:
            c.total_steps = 140000;
            c.regime = TrainRegime::finetune;
            break;
        case ReferenceStage::base_384_resolution:
            c.total_steps = 20000;
            c.regime = TrainRegime::finetune;
            break;
    }
    c.warmup_steps = default_warmup(c.total_steps);
    return c;
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
    if (step > cfg.total_steps)
        throw UsageError("lr_at: step " + std::to_string(step) + " beyond total_steps " +
                         std::to_string(cfg.total_steps));
    if (step < cfg.warmup_steps)
        return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    const double span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    if (span <= 0) return 0.0;
    const double progress = static_cast<double>(step - cfg.warmup_steps) / span;
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double Temperature::scale() const { return std::exp(log_scale); }

template <class T>
Matrix<T> similarity_matrix(const EmbeddingMatrix<T>& img, const EmbeddingMatrix<T>& txt,
                            Temperature temp) {
    require_normalized(img, "image");
    require_normalized(txt, "text");
    if (img.dim() != txt.dim()) throw UsageError("similarity_matrix: embedding dims differ");
    const T scale = static_cast<T>(temp.scale());
    Matrix<T> s(img.rows(), txt.rows());
    for (std::size_t i = 0; i < img.rows(); ++i) {
        const auto a = img.row(i);
        for (std::size_t j = 0; j < txt.rows(); ++j) {
            const auto b = txt.row(j);
            T dot = 0;
            for (std::size_t d = 0; d < a.size(); ++d) dot += a[d] * b[d];
            s(i, j) = scale * dot;
        }
    }
    return s;
}

template <class T>
LossResult<T> contrastive_loss(const Matrix<T>& logits) {
    const std::size_t n = logits.rows;
    if (logits.cols != n) throw UsageError("contrastive_loss: similarity matrix must be square");
    if (n < 2) throw UsageError("contrastive_loss: need at least 2 pairs");
    for (T v : logits.data)
        if (!std::isfinite(v)) throw NumericError("contrastive_loss: non-finite similarity");

    LossResult<T> out;
    out.grad = Matrix<T>(n, n);
    std::vector<T> row_terms(n), col_terms(n);
    const T inv_n = T(1) / static_cast<T>(n);
    const T half = T(0.5);

    std::vector<T> e(n);
    for (std::size_t i = 0; i < n; ++i) {
        T mx = logits(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits(i, j));
        T sum = 0;
        for (std::size_t j = 0; j < n; ++j) {
            e[j] = std::exp(logits(i, j) - mx);
            sum += e[j];
        }
        row_terms[i] = mx + std::log(sum) - logits(i, i);
        for (std::size_t j = 0; j < n; ++j)
            out.grad(i, j) += half * inv_n * (e[j] / sum - (i == j ? T(1) : T(0)));
    }
    for (std::size_t j = 0; j < n; ++j) {
        T mx = logits(0, j);
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits(i, j));
        T sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            e[i] = std::exp(logits(i, j) - mx);
            sum += e[i];
        }
        col_terms[j] = mx + std::log(sum) - logits(j, j);
        for (std::size_t i = 0; i < n; ++i)
            out.grad(i, j) += half * inv_n * (e[i] / sum - (i == j ? T(1) : T(0)));
    }
    const T row_mean = pairwise_sum<T>(row_terms) / static_cast<T>(n);
    const T col_mean = pairwise_sum<T>(col_terms) / static_cast<T>(n);
    out.loss = half * (row_mean + col_mean);
    return out;
}

template <class T>
RetrievalAccuracy retrieval_accuracy(const EmbeddingMatrix<T>& img, const EmbeddingMatrix<T>& txt) {
    const Matrix<T> s = similarity_matrix(img, txt, Temperature{0.0});
    if (s.rows != s.cols || s.rows == 0) throw UsageError("retrieval_accuracy: need n x n pairs");
    const std::size_t n = s.rows;
    std::size_t i2t = 0, t2i = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j)
            if (s(i, j) > s(i, best)) best = j;
        i2t += best == i;
        best = 0;
        for (std::size_t j = 1; j < n; ++j)
            if (s(j, i) > s(best, i)) best = j;
        t2i += best == i;
    }
    return {static_cast<double>(i2t) / static_cast<double>(n),
            static_cast<double>(t2i) / static_cast<double>(n)};
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::size_t n, std::size_t micro) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (micro == 0 || micro >= n) {
        out.emplace_back(0, n);
        return out;
    }
    for (std::size_t start = 0; start < n; start += micro)
        out.emplace_back(start, std::min(n, start + micro));
    // A trailing single pair has no negatives; fold it into the previous chunk.
    if (out.size() > 1 && out.back().second - out.back().first < 2) {
        out[out.size() - 2].second = out.back().second;
        out.pop_back();
    }
    return out;
}

template <class T>
T chunk_gradients(const ClipModel<T>& model, const ImageBatch& images, const TokenBatch& tokens,
                  const std::vector<bool>& trainable, T weight, std::vector<T>* grads) {
    ImageActivations<T> iacts;
    TextActivations<T> tacts;
    const auto img = model.forward_image(images, iacts);
    const auto txt = model.forward_text(tokens, tacts);
    const T scale = model.logit_scale();
    const std::size_t n = img.rows();
    const std::size_t d = img.dim();

    Matrix<T> s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T dot = 0;
            for (std::size_t k = 0; k < d; ++k) dot += img.vectors(i, k) * txt.vectors(j, k);
            s(i, j) = scale * dot;
        }
    auto result = contrastive_loss(s);
    if (!grads) return result.loss;

    const auto& params = model.params();
    bool text_trainable = false;
    bool image_backbone_trainable = false;
    bool image_any_trainable = false;
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
        if (!trainable[i]) continue;
        const std::string& name = params.info(i).name;
        if (name.rfind("visual.", 0) == 0) {
            image_any_trainable = true;
            if (name.find("adapter.") == std::string::npos) image_backbone_trainable = true;
        } else if (i != model.logit_scale_tensor()) {
            text_trainable = true;
        }
    }

    for (T& g : result.grad.data) g *= weight;
    std::span<T> gspan(*grads);
    if (trainable[model.logit_scale_tensor()]) {
        T acc = 0;
        for (std::size_t i = 0; i < s.data.size(); ++i) acc += result.grad.data[i] * s.data[i];
        params.slice(gspan, model.logit_scale_tensor())[0] += acc;
    }
    if (image_any_trainable) {
        Matrix<T> d_img(n, d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const T g = result.grad(i, j) * scale;
                for (std::size_t k = 0; k < d; ++k) d_img(i, k) += g * txt.vectors(j, k);
            }
        model.backward_image(iacts, d_img, gspan, image_backbone_trainable);
    }
    if (text_trainable) {
        Matrix<T> d_txt(n, d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const T g = result.grad(i, j) * scale;
                for (std::size_t k = 0; k < d; ++k) d_txt(j, k) += g * img.vectors(i, k);
            }
        model.backward_text(tacts, d_txt, gspan);
    }
    return result.loss;
}

template <class T>
T run_chunks(const ClipModel<T>& model, const ImageBatch& images, const TokenBatch& tokens,
             const std::vector<bool>& trainable, std::size_t micro_batch, std::vector<T>* grads) {
    if (images.count != tokens.batch())
        throw UsageError("image batch (" + std::to_string(images.count) +
                         ") and token batch (" + std::to_string(tokens.batch()) + ") differ");
    const std::size_t n = images.count;
    T loss = 0;
    for (const auto& [lo, hi] : chunk_ranges(n, micro_batch)) {
        std::vector<std::size_t> rows(hi - lo);
        std::iota(rows.begin(), rows.end(), lo);
        const bool whole = lo == 0 && hi == n;
        const T weight = static_cast<T>(hi - lo) / static_cast<T>(n);
        const T part = whole ? chunk_gradients(model, images, tokens, trainable, weight, grads)
                             : chunk_gradients(model, images.select(rows), tokens.select(rows),
                                               trainable, weight, grads);
        loss += weight * part;
    }
    return loss;
}

}  // namespace

template <class T>
T compute_gradients(const ClipModel<T>& model, const ImageBatch& images, const TokenBatch& tokens,
                    const std::vector<bool>& trainable, std::size_t micro_batch,
                    std::vector<T>& grads) {
    if (grads.size() != model.params().size()) grads.assign(model.params().size(), T(0));
    if (trainable.size() != model.params().tensors().size())
        throw UsageError("compute_gradients: trainable mask has the wrong length");
    const T loss = run_chunks(model, images, tokens, trainable, micro_batch, &grads);
    for (std::size_t i = 0; i < trainable.size(); ++i) {
        if (trainable[i]) continue;
        auto g = model.params().slice(std::span<T>(grads), i);
        std::fill(g.begin(), g.end(), T(0));
    }
    return loss;
}

template <class T>
T evaluate_loss(const ClipModel<T>& model, const ImageBatch& images, const TokenBatch& tokens,
                std::size_t micro_batch) {
    const std::vector<bool> none(model.params().tensors().size(), false);
    return run_chunks<T>(model, images, tokens, none, micro_batch, nullptr);
}

template <class T>
TrainState<T> make_train_state(ClipModel<T> model, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t count = model.params().tensors().size();
    TrainState<T> state{std::move(model), {}, {}, 0, cfg.seed, {}, {}, cfg.regime};
    state.first_moment.assign(state.model.params().size(), T(0));
    state.second_moment.assign(state.model.params().size(), T(0));
    if (cfg.regime == TrainRegime::frozen_adapter) {
        const auto adapter = state.model.adapter_tensors();
        if (adapter.empty())
            throw UsageError("frozen_adapter regime needs a model with an image adapter");
        state.trainable.assign(count, false);
        for (std::size_t i : adapter) state.trainable[i] = true;
    } else {
        state.trainable.assign(count, true);
    }
    if (cfg.regime == TrainRegime::from_scratch)
        state.model.params().view(state.model.logit_scale_tensor())[0] =
            static_cast<T>(std::log(cfg.temperature_init));
    return state;
}

template <class T>
TrainState<T> build_frozen_adapter(const ClipModel<T>& base, const TrainConfig& cfg) {
    TrainConfig c = cfg;
    c.regime = TrainRegime::frozen_adapter;
    return make_train_state(with_identity_adapter(base), c);
}

template <class T>
StepResult train_step(TrainState<T>& state, const ImageBatch& images, const TokenBatch& tokens,
                      const TrainConfig& cfg) {
    if (state.step >= cfg.total_steps)
        throw UsageError("train_step: step " + std::to_string(state.step) +
                         " is past total_steps " + std::to_string(cfg.total_steps));
    if (images.count < 2) throw UsageError("train_step: need at least 2 pairs per batch");
    auto& params = state.model.params();
    std::vector<T> grads(params.size(), T(0));
    const T loss = compute_gradients(state.model, images, tokens, state.trainable, cfg.micro_batch,
                                     grads);
    if (!std::isfinite(loss))
        throw NumericError("non-finite loss at step " + std::to_string(state.step));

    const double lr = lr_at(state.step, cfg);
    const double t = static_cast<double>(state.step + 1);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T eps = static_cast<T>(cfg.eps);
    const T step_lr = static_cast<T>(lr);
    const T decay = static_cast<T>(1.0 - lr * cfg.weight_decay);

    StepResult result;
    result.step = state.step;
    result.loss = static_cast<double>(loss);
    result.lr = lr;
    result.grad_norms.resize(params.tensors().size());
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
        const TensorInfo& info = params.info(i);
        const std::size_t off = info.offset;
        double ss = 0;
        for (std::size_t k = 0; k < info.size; ++k)
            ss += static_cast<double>(grads[off + k]) * static_cast<double>(grads[off + k]);
        result.grad_norms[i] = std::sqrt(ss);
        if (!state.trainable[i]) continue;
        T* p = params.data().data() + off;
        T* m = state.first_moment.data() + off;
        T* v = state.second_moment.data() + off;
        for (std::size_t k = 0; k < info.size; ++k) {
            const T g = grads[off + k];
            m[k] = b1 * m[k] + (T(1) - b1) * g;
            v[k] = b2 * v[k] + (T(1) - b2) * g * g;
            if (info.decay) p[k] *= decay;
            p[k] -= step_lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
        }
    }
    T& log_scale = params.view(state.model.logit_scale_tensor())[0];
    log_scale = std::min(log_scale, static_cast<T>(std::log(cfg.temperature_max)));
    result.temperature = std::exp(static_cast<double>(log_scale));

    ++state.step;
    state.loss_history.push_back(result.loss);
    return result;
}

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                       std::size_t step) {
    if (n < 2) throw UsageError("batch_indices: dataset needs at least 2 pairs");
    const std::size_t b = std::min(batch_size, n);
    const std::size_t per_epoch = n / b;
    const std::size_t epoch = step / per_epoch;
    const std::size_t slot = step % per_epoch;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1)));
    // Fisher-Yates with an explicit draw keeps the order identical across standard libraries.
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(perm[i], perm[j]);
    }
    return {perm.begin() + static_cast<long>(slot * b), perm.begin() + static_cast<long>((slot + 1) * b)};
}

template <class T>
void train(TrainState<T>& state, const PairDataset& data, const TrainConfig& cfg,
           const StepCallback& on_step) {
    while (state.step < cfg.total_steps) {
        const auto rows = batch_indices(data.size(), cfg.batch_size, state.rng_state, state.step);
        const bool whole = rows.size() == data.size() &&
                           std::is_sorted(rows.begin(), rows.end());
        const StepResult r = whole ? train_step(state, data.images, data.tokens, cfg)
                                   : train_step(state, data.images.select(rows),
                                                data.tokens.select(rows), cfg);
        if (on_step) on_step(r);
    }
}

template <class T>
TrainState<T> finetune_resolution(const ClipModel<T>& checkpoint, std::size_t new_resolution,
                                  const TrainConfig& cfg, const PairDataset& data,
                                  const StepCallback& on_step) {
    ImageSpec spec = checkpoint.config().image.spec;
    spec.resolution = new_resolution;
    patch_grid(spec);
    if (cfg.total_steps > 0 && data.images.spec.resolution != new_resolution)
        throw UsageError("finetune_resolution: training images are " +
                         std::to_string(data.images.spec.resolution) + " px, expected " +
                         std::to_string(new_resolution));
    TrainState<T> state = make_train_state(interpolate_pos_embeddings(checkpoint, spec), cfg);
    train(state, data, cfg, on_step);
    return state;
}

void write_metrics_header(std::ostream& out) { out << "step,loss,lr,temperature\n"; }

void write_metrics_row(std::ostream& out, const StepResult& r) {
    out << r.step << ',' << r.loss << ',' << r.lr << ',' << r.temperature << '\n';
}

#define DUOCLIP_INSTANTIATE(T)                                                                    \
    template Matrix<T> similarity_matrix<T>(const EmbeddingMatrix<T>&, const EmbeddingMatrix<T>&, \
                                            Temperature);                                         \
    template LossResult<T> contrastive_loss<T>(const Matrix<T>&);                                 \
    template RetrievalAccuracy retrieval_accuracy<T>(const EmbeddingMatrix<T>&,                   \
                                                     const EmbeddingMatrix<T>&);                  \
    template T compute_gradients<T>(const ClipModel<T>&, const ImageBatch&, const TokenBatch&,    \
                                    const std::vector<bool>&, std::size_t, std::vector<T>&);      \
    template T evaluate_loss<T>(const ClipModel<T>&, const ImageBatch&, const TokenBatch&,        \
                                std::size_t);                                                     \
    template TrainState<T> make_train_state<T>(ClipModel<T>, const TrainConfig&);                 \
    template TrainState<T> build_frozen_adapter<T>(const ClipModel<T>&, const TrainConfig&);      \
    template StepResult train_step<T>(TrainState<T>&, const ImageBatch&, const TokenBatch&,       \
                                      const TrainConfig&);                                        \
    template void train<T>(TrainState<T>&, const PairDataset&, const TrainConfig&,                \
                           const StepCallback&);                                                  \
    template TrainState<T> finetune_resolution<T>(const ClipModel<T>&, std::size_t,               \
                                                  const TrainConfig&, const PairDataset&,         \
                                                  const StepCallback&);

DUOCLIP_INSTANTIATE(float)
DUOCLIP_INSTANTIATE(double)

}  // namespace duoclip
