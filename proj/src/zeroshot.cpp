// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/zeroshot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "duoclip/error.hpp"
#include "duoclip/format.hpp"
#include "duoclip/training.hpp"

namespace duoclip {

using nlohmann::json;

namespace {

std::size_t count_placeholders(const std::string& s) {
    std::size_t n = 0;
    for (std::size_t pos = s.find("{}"); pos != std::string::npos; pos = s.find("{}", pos + 2)) ++n;
    return n;
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

PromptTemplateSet::PromptTemplateSet(std::vector<std::string> templates)
    : templates_(std::move(templates)) {
    if (templates_.empty()) throw UsageError("prompt template set is empty");
    for (const auto& t : templates_)
        if (count_placeholders(t) != 1)
            throw UsageError("template \"" + t + "\" must contain exactly one {} placeholder");
}

std::string PromptTemplateSet::fill(std::size_t i, const std::string& class_name) const {
    std::string out = templates_.at(i);
    out.replace(out.find("{}"), 2, class_name);
    return out;
}

template <class T>
ClassEmbeddings<T> build_class_embeddings(const std::vector<std::string>& classes,
                                          const PromptTemplateSet& templates,
                                          const ClipModel<T>& model, const Vocab& vocab) {
    if (classes.empty()) throw UsageError("build_class_embeddings: no classes");
    const std::size_t joint = model.config().joint_dim;
    const std::size_t n_templates = templates.templates().size();
    Matrix<T> means(classes.size(), joint);
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (blank(classes[c]))
            throw UsageError("build_class_embeddings: class " + std::to_string(c) + " has an empty name");
        std::vector<std::string> prompts;
        for (std::size_t t = 0; t < n_templates; ++t) prompts.push_back(templates.fill(t, classes[c]));
        const auto emb = model.encode_text(
            encode_batch(prompts, vocab, model.config().text.context_length));
        auto row = means.row(c);
        for (std::size_t t = 0; t < n_templates; ++t)
            for (std::size_t d = 0; d < joint; ++d) row[d] += emb.vectors(t, d);
        for (T& v : row) v /= static_cast<T>(n_templates);
    }
    return {classes, normalize_rows(std::move(means))};
}

template <class T>
Classification<T> classify(const EmbeddingMatrix<T>& images, const ClassEmbeddings<T>& classes) {
    if (images.dim() != classes.matrix.dim())
        throw UsageError("classify: image dim " + std::to_string(images.dim()) +
                         " != class dim " + std::to_string(classes.matrix.dim()));
    if (classes.matrix.rows() == 0) throw UsageError("classify: no classes");
    Classification<T> out;
    out.scores = similarity_matrix(images, classes.matrix, Temperature{0.0});
    out.predictions.resize(images.rows());
    for (std::size_t i = 0; i < images.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < out.scores.cols; ++c)
            if (out.scores(i, c) > out.scores(i, best)) best = c;
        out.predictions[i] = best;
    }
    return out;
}

std::string to_string(Metric m) {
    switch (m) {
        case Metric::accuracy: return "accuracy";
        case Metric::mean_per_class: return "mean_per_class";
        case Metric::roc_auc: return "roc_auc";
    }
    return "unknown";
}

Metric parse_metric(const std::string& s) {
    if (s == "accuracy" || s == "acc") return Metric::accuracy;
    if (s == "mean_per_class" || s == "mean-per-class") return Metric::mean_per_class;
    if (s == "roc_auc" || s == "roc-auc") return Metric::roc_auc;
    throw UsageError("unknown metric '" + s + "' (accuracy | mean_per_class | roc_auc)");
}

Metric default_metric(const std::string& dataset_name) {
    std::string key;
    for (unsigned char c : dataset_name)
        if (std::isalnum(c)) key += static_cast<char>(std::tolower(c));
    static const char* const kMeanPerClass[] = {"fgvcaircraft", "oxfordpets", "caltech101",
                                                "flowers102", "oxfordflowers102"};
    for (const char* name : kMeanPerClass)
        if (key == name) return Metric::mean_per_class;
    if (key == "hatefulmemes") return Metric::roc_auc;
    return Metric::accuracy;
}

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
    if (pred.size() != truth.size())
        throw UsageError("accuracy: " + std::to_string(pred.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
    if (pred.empty()) throw UsageError("accuracy: no predictions");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double mean_per_class_accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                               std::size_t num_classes, const std::vector<std::string>& class_names) {
    if (pred.size() != truth.size())
        throw UsageError("mean_per_class_accuracy: prediction and label counts differ");
    if (num_classes == 0) throw UsageError("mean_per_class_accuracy: no classes");
    std::vector<std::size_t> total(num_classes, 0), hits(num_classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= num_classes)
            throw UsageError("mean_per_class_accuracy: label " + std::to_string(truth[i]) +
                             " >= num_classes " + std::to_string(num_classes));
        ++total[truth[i]];
        hits[truth[i]] += pred[i] == truth[i];
    }
    double sum = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (total[c] == 0) {
            const std::string name =
                c < class_names.size() ? "'" + class_names[c] + "'" : std::to_string(c);
            throw DataError("mean_per_class_accuracy: class " + name + " has no examples");
        }
        sum += static_cast<double>(hits[c]) / static_cast<double>(total[c]);
    }
    return sum / static_cast<double>(num_classes);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw UsageError("roc_auc: score and label counts differ");
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw UsageError("roc_auc: labels must be 0 or 1");
        if (!std::isfinite(scores[i])) throw NumericError("roc_auc: non-finite score");
        (labels[i] ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) throw UsageError("roc_auc: both label values must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Mann-Whitney U with mid-ranks for ties.
    double rank_sum = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum += mid;
        i = j;
    }
    const double p = static_cast<double>(pos);
    const double u = rank_sum - p * (p + 1) / 2;
    return u / (p * static_cast<double>(neg));
}

void to_json(json& j, const EvalReport& r) {
    j = json{{"dataset", r.dataset},
             {"metric", to_string(r.metric)},
             {"value", r.value},
             {"model", r.model}};
    j["shots"] = r.shots ? json(*r.shots) : json("zero");
    j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
}

void from_json(const json& j, EvalReport& r) {
    r.dataset = j.at("dataset").get<std::string>();
    r.metric = parse_metric(j.at("metric").get<std::string>());
    r.value = j.at("value").get<double>();
    r.model = j.at("model").get<std::string>();
    const json& shots = j.at("shots");
    if (shots.is_string()) {
        if (shots.get<std::string>() != "zero") throw DataError("shots must be a count or \"zero\"");
        r.shots.reset();
    } else {
        r.shots = shots.get<std::size_t>();
    }
    if (j.contains("seed") && !j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
    else r.seed.reset();
    if (!(r.value >= 0.0 && r.value <= 1.0)) throw DataError("report value outside [0, 1]");
}

std::string reports_to_json(const std::vector<EvalReport>& reports) {
    return json(reports).dump(2) + "\n";
}

namespace {

std::vector<std::string> report_cells(const EvalReport& r, bool table) {
    return {r.dataset,
            to_string(r.metric),
            table ? format_fixed(r.value, 4) : format_number(r.value),
            r.model,
            r.shots ? std::to_string(*r.shots) : (table ? "*" : "zero"),
            r.seed ? std::to_string(*r.seed) : (table ? "mean" : "")};
}

}  // namespace

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
    std::string out = "dataset,metric,value,model,shots,seed\n";
    for (const auto& r : reports) {
        const auto cells = report_cells(r, false);
        for (std::size_t i = 0; i < cells.size(); ++i)
            out += (i ? "," : "") + csv_field(cells[i]);
        out += "\n";
    }
    return out;
}

std::string reports_to_table(const std::vector<EvalReport>& reports) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : reports) {
        auto cells = report_cells(r, true);
        if (!r.shots) cells[5] = "";
        rows.push_back(std::move(cells));
    }
    return render_table({"dataset", "metric", "value", "model", "shots", "seed"}, rows);
}

template <class T>
EvalReport evaluate_zeroshot(const ClipModel<T>& model, const Vocab& vocab,
                             const ClassificationDataset& dataset, const ImageBatch& images,
                             const std::vector<std::size_t>& labels, Metric metric) {
    if (images.count != labels.size())
        throw UsageError("evaluate_zeroshot: image and label counts differ");
    if (dataset.templates.empty()) throw DataError(dataset.name + ": templates.txt is empty");
    const PromptTemplateSet templates(dataset.templates);
    const auto classes = build_class_embeddings(dataset.classes, templates, model, vocab);
    const auto result = classify(model.encode_image(images), classes);

    EvalReport report;
    report.dataset = dataset.name;
    report.metric = metric;
    report.model = model.config().preset_name;
    switch (metric) {
        case Metric::accuracy:
            report.value = accuracy(result.predictions, labels);
            break;
        case Metric::mean_per_class:
            report.value = mean_per_class_accuracy(result.predictions, labels,
                                                   dataset.classes.size(), dataset.classes);
            break;
        case Metric::roc_auc: {
            if (dataset.classes.size() != 2)
                throw UsageError("roc_auc needs a two-class dataset, got " +
                                 std::to_string(dataset.classes.size()) + " classes");
            std::vector<double> scores(labels.size());
            std::vector<int> binary(labels.size());
            for (std::size_t i = 0; i < labels.size(); ++i) {
                scores[i] = static_cast<double>(result.scores(i, 1)) -
                            static_cast<double>(result.scores(i, 0));
                binary[i] = static_cast<int>(labels[i]);
            }
            report.value = roc_auc(scores, binary);
            break;
        }
    }
    return report;
}

std::string SimilarityReport::to_csv() const {
    std::string out = "text";
    for (const auto& name : images) out += "," + csv_field(name);
    out += "\n";
    for (std::size_t t = 0; t < texts.size(); ++t) {
        out += csv_field(texts[t]);
        for (std::size_t i = 0; i < images.size(); ++i) out += "," + format_number(cosine(t, i));
        out += "\n";
    }
    return out;
}

std::string SimilarityReport::to_table() const {
    std::vector<std::string> header{"text"};
    header.insert(header.end(), images.begin(), images.end());
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < texts.size(); ++t) {
        std::vector<std::string> row{texts[t]};
        for (std::size_t i = 0; i < images.size(); ++i) row.push_back(format_fixed(cosine(t, i), 4));
        rows.push_back(std::move(row));
    }
    return render_table(header, rows);
}

std::string SimilarityReport::to_json() const {
    json rows = json::array();
    for (std::size_t t = 0; t < texts.size(); ++t) {
        std::vector<double> row(cosine.row(t).begin(), cosine.row(t).end());
        rows.push_back(row);
    }
    return json{{"texts", texts}, {"images", images}, {"cosine", rows}}.dump(2) + "\n";
}

template <class T>
SimilarityReport similarity_report(const std::vector<std::string>& texts,
                                   const std::vector<std::string>& image_names,
                                   const ImageBatch& images, const ClipModel<T>& model,
                                   const Vocab& vocab) {
    if (texts.empty() || images.count == 0)
        throw UsageError("similarity_report: need at least one text and one image");
    if (image_names.size() != images.count)
        throw UsageError("similarity_report: image names do not match the batch");
    const auto txt = model.encode_text(encode_batch(texts, vocab, model.config().text.context_length));
    const auto img = model.encode_image(images);
    const auto s = similarity_matrix(txt, img, Temperature{0.0});
    SimilarityReport r{texts, image_names, Matrix<double>(s.rows, s.cols)};
    for (std::size_t k = 0; k < s.data.size(); ++k) r.cosine.data[k] = static_cast<double>(s.data[k]);
    return r;
}

#define DUOCLIP_INSTANTIATE(T)                                                                  \
    template ClassEmbeddings<T> build_class_embeddings<T>(                                      \
        const std::vector<std::string>&, const PromptTemplateSet&, const ClipModel<T>&,         \
        const Vocab&);                                                                          \
    template Classification<T> classify<T>(const EmbeddingMatrix<T>&, const ClassEmbeddings<T>&); \
    template EvalReport evaluate_zeroshot<T>(const ClipModel<T>&, const Vocab&,                 \
                                             const ClassificationDataset&, const ImageBatch&,   \
                                             const std::vector<std::size_t>&, Metric);          \
    template SimilarityReport similarity_report<T>(                                             \
        const std::vector<std::string>&, const std::vector<std::string>&, const ImageBatch&,    \
        const ClipModel<T>&, const Vocab&);

DUOCLIP_INSTANTIATE(float)
DUOCLIP_INSTANTIATE(double)

}  // namespace duoclip
