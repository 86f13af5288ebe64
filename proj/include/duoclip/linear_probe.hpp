// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Few-shot linear probes on frozen image features.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "duoclip/embedding.hpp"
#include "duoclip/model.hpp"
#include "duoclip/zeroshot.hpp"

namespace duoclip {

struct ProbeConfig {
    std::vector<std::size_t> shots{1, 2, 4, 8, 16};
    double l2_reg = 1e-3;
    std::size_t max_iter = 500;
    double tolerance = 1e-6;  // on the gradient infinity norm
    std::uint64_t seed = 0;   // first seed; seeds run seed, seed+1, ...
    std::size_t seeds = 3;

    void validate() const;
};

enum class FeatureSplit { train_pool, test };

struct FeatureSet {
    Matrix<double> features;  // [n, dim], unit rows
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;
    FeatureSplit split = FeatureSplit::train_pool;

    std::size_t size() const { return labels.size(); }
    FeatureSet select(std::span<const std::size_t> rows) const;
};

/// Normalised image embeddings, in batch order, computed in chunks.
template <class T>
FeatureSet extract_features(const ClipModel<T>& model, const ImageBatch& images,
                            std::vector<std::size_t> labels, std::size_t num_classes,
                            FeatureSplit split = FeatureSplit::train_pool);

/// k rows per class without replacement, class-major, deterministic in seed.
FeatureSet sample_shots(const FeatureSet& pool, std::size_t k, std::uint64_t seed,
                        const std::vector<std::string>& class_names = {});

struct LinearHead {
    Matrix<double> weight;      // [dim, classes]
    std::vector<double> bias;   // [classes]; classes absent from training get -inf
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> objective_history;  // one entry per accepted iterate, starting at W = 0

    Matrix<double> logits(const Matrix<double>& features) const;
    std::vector<std::size_t> predict(const Matrix<double>& features) const;
};

/// Mean cross entropy + (l2_reg / 2) ||W||^2 (bias unregularised).
double probe_objective(const LinearHead& head, const FeatureSet& data, double l2_reg);

/// Multinomial logistic regression fitted by L-BFGS with Armijo backtracking from W = 0.
LinearHead train_linear(const FeatureSet& train, const ProbeConfig& cfg);

/// For every k and seed: sample, fit, score test accuracy. After each k's
/// per-seed reports comes their mean (seed unset).
std::vector<EvalReport> probe_curve(const FeatureSet& pool, const FeatureSet& test,
                                    const ProbeConfig& cfg, const std::string& dataset_name,
                                    const std::string& model_name,
                                    const std::vector<std::string>& class_names = {});

/// Feature extraction from a dataset's train/test splits, then probe_curve.
template <class T>
std::vector<EvalReport> probe_curve(const ClipModel<T>& model, const ImageBatch& pool_images,
                                    const std::vector<std::size_t>& pool_labels,
                                    const ImageBatch& test_images,
                                    const std::vector<std::size_t>& test_labels,
                                    const ClassificationDataset& dataset, const ProbeConfig& cfg);

}  // namespace duoclip
