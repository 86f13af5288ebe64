// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "duoclip/error.hpp"
#include "duoclip/presets.hpp"
#include "duoclip/zeroshot.hpp"
#include "fixtures.hpp"
#include "metric_oracles.hpp"

using namespace duoclip;
namespace fs = std::filesystem;

namespace {

ClassEmbeddings<double> axis_classes(std::size_t n, std::size_t dim) {
    Matrix<double> m(n, dim);
    for (std::size_t c = 0; c < n; ++c) m(c, c) = 1.0;
    return {std::vector<std::string>(n, "c"), normalize_rows(std::move(m))};
}

Matrix<double> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix<double> m(rows, cols);
    for (double& v : m.data) v = n(rng);
    return m;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    void write(const std::string& file, const std::string& text) const { std::ofstream(path / file) << text; }
};

}  // namespace

TEST_CASE("classify picks the most similar class, lowest index on ties") {
    const auto classes = axis_classes(2, 2);
    Matrix<double> img(2, 2);
    img(0, 0) = 0.8;
    img(0, 1) = 0.6;
    img(1, 0) = std::sqrt(0.5);
    img(1, 1) = std::sqrt(0.5);
    const auto result = classify(EmbeddingMatrix<double>{img, true}, classes);
    CHECK(result.predictions == std::vector<std::size_t>{0, 0});
    CHECK(result.scores(0, 1) == doctest::Approx(0.6));
    Matrix<double> other(1, 2);
    other(0, 0) = 0.6;
    other(0, 1) = 0.8;
    CHECK(classify(EmbeddingMatrix<double>{other, true}, classes).predictions[0] == 1);
    Matrix<double> wrong(1, 3, 1.0 / std::sqrt(3.0));
    CHECK_THROWS_AS(classify(EmbeddingMatrix<double>{wrong, true}, classes), UsageError);
}

TEST_CASE("predictions ignore positive scaling and follow class permutations") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix<double> raw_img = random_matrix(7, 8, rng);
        const Matrix<double> raw_cls = random_matrix(5, 8, rng);
        Matrix<double> scaled = raw_img;
        for (std::size_t i = 0; i < scaled.rows; ++i) {
            const double s = scale(rng);
            for (double& v : scaled.row(i)) v *= s;
        }
        const ClassEmbeddings<double> cls{std::vector<std::string>(5), normalize_rows(raw_cls)};
        const auto base = classify(normalize_rows(raw_img), cls).predictions;
        CHECK(classify(normalize_rows(scaled), cls).predictions == base);

        std::vector<std::size_t> perm(5);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix<double> permuted(5, 8);
        for (std::size_t c = 0; c < 5; ++c) std::copy_n(raw_cls.row(perm[c]).begin(), 8, permuted.row(c).begin());
        const auto moved = classify(normalize_rows(raw_img), {std::vector<std::string>(5), normalize_rows(permuted)});
        for (std::size_t i = 0; i < base.size(); ++i) CHECK(perm[moved.predictions[i]] == base[i]);
    }
}

TEST_CASE("accuracy and mean-per-class accuracy") {
    const std::vector<std::size_t> pred{0, 0, 1}, truth{0, 1, 1};
    CHECK(accuracy(pred, truth) == doctest::Approx(2.0 / 3.0));
    CHECK(mean_per_class_accuracy(pred, truth, 2) == 0.75);
    const std::vector<std::size_t> missing_truth{0, 0, 0};
    CHECK_THROWS_AS(mean_per_class_accuracy(pred, missing_truth, 2, {"cat", "dog"}), DataError);
    try {
        mean_per_class_accuracy(pred, missing_truth, 2, {"cat", "dog"});
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("dog") != std::string::npos);
    }
    CHECK_THROWS(accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}));
    std::mt19937_64 rng(2);
    for (int i = 0; i < 200; ++i) {
        const auto inst = testing::random_label_instance(rng);
        CHECK(accuracy(inst.pred, inst.truth) == testing::oracle_accuracy(inst.pred, inst.truth));
        CHECK(mean_per_class_accuracy(inst.pred, inst.truth, inst.classes) ==
              doctest::Approx(testing::oracle_mean_per_class(inst.pred, inst.truth, inst.classes)).epsilon(1e-15));
    }
}

TEST_CASE("roc auc against pair counting") {
    CHECK(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
    CHECK(roc_auc(std::vector<double>{1, 1, 1, 1}, std::vector<int>{0, 1, 0, 1}) == 0.5);
    CHECK_THROWS_AS(roc_auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), UsageError);
    CHECK_THROWS_AS(roc_auc(std::vector<double>{1, 2}, std::vector<int>{0, 2}), UsageError);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto inst = testing::random_auc_instance(rng);
        const double auc = roc_auc(inst.scores, inst.labels);
        CHECK(auc == testing::oracle_auc(inst.scores, inst.labels));
        std::vector<double> negated(inst.scores.size());
        std::transform(inst.scores.begin(), inst.scores.end(), negated.begin(), [](double s) { return -s; });
        CHECK(auc + roc_auc(negated, inst.labels) == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("metric names and defaults") {
    CHECK(parse_metric("mean_per_class") == Metric::mean_per_class);
    CHECK(to_string(Metric::roc_auc) == "roc_auc");
    CHECK_THROWS_AS(parse_metric("f1"), UsageError);
    CHECK(default_metric("FGVCAircraft") == Metric::mean_per_class);
    CHECK(default_metric("Flowers102") == Metric::mean_per_class);
    CHECK(default_metric("HatefulMemes") == Metric::roc_auc);
    CHECK(default_metric("CIFAR10") == Metric::accuracy);
}

TEST_CASE("prompt templates") {
    CHECK_THROWS_AS(PromptTemplateSet({}), UsageError);
    CHECK_THROWS_AS(PromptTemplateSet({"no placeholder"}), UsageError);
    CHECK_THROWS_AS(PromptTemplateSet({"{} and {}"}), UsageError);
    const PromptTemplateSet t({"фото {}", "a photo of a {}."});
    CHECK(t.fill(0, "кошки") == "фото кошки");
    CHECK(t.fill(1, "cat") == "a photo of a cat.");
}

TEST_CASE("class embeddings average template embeddings") {
    ClipModel<double> model(tiny_config());
    model.init_weights(4);
    const Vocab vocab;
    const std::vector<std::string> classes{"cat", "dog", "bird"};
    const auto encode_one = [&](const std::string& text) {
        const std::vector<std::string> texts{text};
        return model.encode_text(encode_batch(texts, vocab, 16));
    };

    const auto single = build_class_embeddings(classes, PromptTemplateSet({"a {}"}), model, vocab);
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto want = encode_one("a " + classes[c]);
        for (std::size_t d = 0; d < 64; ++d) CHECK(single.matrix.vectors(c, d) == doctest::Approx(want.vectors(0, d)));
    }
    const auto dup = build_class_embeddings(classes, PromptTemplateSet({"a {}", "a {}"}), model, vocab);
    for (std::size_t i = 0; i < dup.matrix.vectors.data.size(); ++i)
        CHECK(std::abs(dup.matrix.vectors.data[i] - single.matrix.vectors.data[i]) < 1e-12);

    const auto two = build_class_embeddings(classes, PromptTemplateSet({"a {}", "photo of {}"}), model, vocab);
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto a = encode_one("a " + classes[c]), b = encode_one("photo of " + classes[c]);
        Matrix<double> mean(1, 64);
        for (std::size_t d = 0; d < 64; ++d) mean(0, d) = 0.5 * (a.vectors(0, d) + b.vectors(0, d));
        const auto want = normalize_rows(mean);
        for (std::size_t d = 0; d < 64; ++d) CHECK(std::abs(two.matrix.vectors(c, d) - want.vectors(0, d)) < 1e-6);
    }
    CHECK(rows_have_unit_norm(two.matrix.vectors));
    CHECK_THROWS_AS(build_class_embeddings({"cat", ""}, PromptTemplateSet({"a {}"}), model, vocab), UsageError);
}

TEST_CASE("evaluation reports serialise") {
    const EvalReport zero{"cifar10", Metric::accuracy, 0.5, "tiny", std::nullopt, std::nullopt};
    const EvalReport shot{"cifar10", Metric::accuracy, 0.25, "tiny", 4, 7};
    const auto j = nlohmann::json(zero);
    CHECK(j.at("shots") == "zero");
    CHECK(j.at("seed").is_null());
    CHECK(j.get<EvalReport>() == zero);
    CHECK(nlohmann::json(shot).get<EvalReport>() == shot);
    const auto parsed = nlohmann::json::parse(reports_to_json({zero, shot}));
    CHECK(parsed.size() == 2);
    const std::string csv = reports_to_csv({zero, shot});
    CHECK(csv.rfind("dataset,metric,value,model,shots,seed\n", 0) == 0);
    CHECK(csv.find("cifar10,accuracy,0.25,tiny,4,7") != std::string::npos);
    CHECK(reports_to_table({zero}).find("cifar10") != std::string::npos);
}

TEST_CASE("dataset loader reports malformed manifests with line numbers") {
    TempDir dir("duoclip_dataset_test");
    dir.write("classes.txt", "red\ngreen\n");
    dir.write("templates.txt", "a {} square\n");
    dir.write("dataset.json", R"({"name": "toy", "metric": "accuracy"})");
    dir.write("manifest.jsonl",
              "{\"image\": \"a.ppm\", \"label\": 0, \"split\": \"train\"}\n"
              "{\"image\": \"b.ppm\", \"label\": 1, \"split\": \"test\"}\n");
    const auto ds = load_classification_dataset(dir.path.string());
    CHECK(ds.name == "toy");
    CHECK(ds.classes.size() == 2);
    CHECK(ds.split("test").size() == 1);
    CHECK(ds.split("").size() == 2);
    CHECK(ds.entries[0].path == (dir.path / "a.ppm").string());

    dir.write("manifest.jsonl", "{\"image\": \"a.ppm\", \"label\": 0}\n{\"image\": \"b.ppm\", \"label\": \n");
    try {
        load_classification_dataset(dir.path.string());
        FAIL("expected a data error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("manifest.jsonl:2") != std::string::npos);
    }
    dir.write("manifest.jsonl", "{\"image\": \"a.ppm\", \"label\": 5}\n");
    CHECK_THROWS_AS(load_classification_dataset(dir.path.string()), DataError);
    CHECK_THROWS_AS(load_classification_dataset((dir.path / "missing").string()), DataError);
}

TEST_CASE("zero-shot evaluation and similarity report on synthetic images") {
    ClipModel<double> model(tiny_config());
    model.init_weights(5);
    const Vocab vocab;
    ClassificationDataset ds;
    ds.name = "toy";
    ds.classes = {"red", "blue"};
    ds.templates = {"a {} thing"};
    const ImageBatch images = testing::random_images(model.config().image.spec, 6, 6);
    const std::vector<std::size_t> labels{0, 1, 0, 1, 0, 1};
    const auto acc = evaluate_zeroshot(model, vocab, ds, images, labels, Metric::accuracy);
    const auto auc = evaluate_zeroshot(model, vocab, ds, images, labels, Metric::roc_auc);
    CHECK(acc.value >= 0.0);
    CHECK(acc.value <= 1.0);
    CHECK(auc.value >= 0.0);
    CHECK(auc.metric == Metric::roc_auc);
    CHECK(evaluate_zeroshot(model, vocab, ds, images, labels, Metric::accuracy) == acc);
    ds.classes.push_back("green");
    CHECK_THROWS_AS(evaluate_zeroshot(model, vocab, ds, images, labels, Metric::roc_auc), UsageError);

    const auto sim = similarity_report({"red", "blue", "green"}, {"a", "b"}, images.select(std::vector<std::size_t>{0, 1}),
                                       model, vocab);
    CHECK(sim.cosine.rows == 3);
    CHECK(sim.cosine.cols == 2);
    for (double v : sim.cosine.data) CHECK(std::abs(v) <= 1.0 + 1e-12);
    CHECK(sim.to_csv().find("red") != std::string::npos);
    CHECK(nlohmann::json::parse(sim.to_json()).is_object());
}
