// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Zero-shot classification from prompt templates, evaluation metrics and
// cosine similarity reports.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duoclip/dataset.hpp"
#include "duoclip/embedding.hpp"
#include "duoclip/model.hpp"
#include "duoclip/tokenizer.hpp"
#include "json.hpp"

namespace duoclip {

/// Templates with exactly one "{}" placeholder each.
class PromptTemplateSet {
public:
    explicit PromptTemplateSet(std::vector<std::string> templates);

    const std::vector<std::string>& templates() const { return templates_; }
    std::string fill(std::size_t i, const std::string& class_name) const;

private:
    std::vector<std::string> templates_;
};

template <class T>
struct ClassEmbeddings {
    std::vector<std::string> classes;
    EmbeddingMatrix<T> matrix;  // [classes, joint_dim], unit rows
};

/// Per class: encode each filled template, average, renormalise.
template <class T>
ClassEmbeddings<T> build_class_embeddings(const std::vector<std::string>& classes,
                                          const PromptTemplateSet& templates,
                                          const ClipModel<T>& model, const Vocab& vocab);

template <class T>
struct Classification {
    std::vector<std::size_t> predictions;
    Matrix<T> scores;  // [images, classes] cosines
};

/// Argmax of image . class cosines; ties go to the lowest class index.
template <class T>
Classification<T> classify(const EmbeddingMatrix<T>& images, const ClassEmbeddings<T>& classes);

enum class Metric { accuracy, mean_per_class, roc_auc };

std::string to_string(Metric m);
Metric parse_metric(const std::string& s);

/// Metric used for well-known benchmark names, accuracy otherwise.
Metric default_metric(const std::string& dataset_name);

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth);

/// class_names, when given, are used in the absent-class error.
double mean_per_class_accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                               std::size_t num_classes,
                               const std::vector<std::string>& class_names = {});

/// P(score of a random positive > score of a random negative), ties count one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
    std::string dataset;
    Metric metric = Metric::accuracy;
    double value = 0;
    std::string model;
    std::optional<std::size_t> shots;  // nullopt for zero-shot
    std::optional<std::uint64_t> seed;  // nullopt for zero-shot and seed means

    bool operator==(const EvalReport&) const = default;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

std::string reports_to_json(const std::vector<EvalReport>& reports);
/// Header "dataset,metric,value,model,shots,seed".
std::string reports_to_csv(const std::vector<EvalReport>& reports);
std::string reports_to_table(const std::vector<EvalReport>& reports);

/// Scores each image with the dataset metric. roc_auc needs exactly two classes
/// and scores with cos(class 1) - cos(class 0).
template <class T>
EvalReport evaluate_zeroshot(const ClipModel<T>& model, const Vocab& vocab,
                             const ClassificationDataset& dataset, const ImageBatch& images,
                             const std::vector<std::size_t>& labels, Metric metric);

struct SimilarityReport {
    std::vector<std::string> texts;
    std::vector<std::string> images;
    Matrix<double> cosine;  // [texts, images]

    std::string to_csv() const;
    std::string to_table() const;
    std::string to_json() const;
};

template <class T>
SimilarityReport similarity_report(const std::vector<std::string>& texts,
                                   const std::vector<std::string>& image_names,
                                   const ImageBatch& images, const ClipModel<T>& model,
                                   const Vocab& vocab);

}  // namespace duoclip
