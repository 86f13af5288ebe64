// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "duoclip/error.hpp"
#include "duoclip/linear_probe.hpp"
#include "duoclip/presets.hpp"
#include "fixtures.hpp"

using namespace duoclip;

namespace {

// Mean cross entropy plus (lambda/2)||W||^2, written out directly.
double objective_oracle(const LinearHead& head, const FeatureSet& data, double lambda) {
    double ce = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::vector<double> z(head.bias.size());
        for (std::size_t c = 0; c < z.size(); ++c) {
            z[c] = head.bias[c];
            for (std::size_t d = 0; d < data.features.cols; ++d) z[c] += data.features(i, d) * head.weight(d, c);
        }
        double mx = -INFINITY, s = 0;
        for (double v : z) mx = std::max(mx, v);
        for (double v : z) s += std::exp(v - mx);
        ce += mx + std::log(s) - z[data.labels[i]];
    }
    double reg = 0;
    for (double w : head.weight.data) reg += w * w;
    return ce / static_cast<double>(data.size()) + 0.5 * lambda * reg;
}

}  // namespace

TEST_CASE("probe config validation") {
    ProbeConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.shots = {};
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg = ProbeConfig{};
    cfg.shots = {0};
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg = ProbeConfig{};
    cfg.l2_reg = -1;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg = ProbeConfig{};
    cfg.seeds = 0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("separable clusters are fitted and the objective decreases monotonically") {
    const FeatureSet train = testing::cluster_features(4, 16, 10, 0.1, 1);
    const FeatureSet test = testing::cluster_features(4, 16, 25, 0.1, 2, FeatureSplit::test);
    ProbeConfig cfg;
    const LinearHead head = train_linear(train, cfg);
    CHECK(head.converged);
    REQUIRE(head.objective_history.size() >= 2);
    CHECK(head.objective_history.front() == doctest::Approx(std::log(4.0)));
    for (std::size_t i = 1; i < head.objective_history.size(); ++i)
        CHECK(head.objective_history[i] <= head.objective_history[i - 1]);
    CHECK(probe_objective(head, train, cfg.l2_reg) == doctest::Approx(objective_oracle(head, train, cfg.l2_reg)));
    CHECK(probe_objective(head, train, cfg.l2_reg) == doctest::Approx(head.objective_history.back()));
    const auto pred = head.predict(test.features);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == test.labels[i];
    CHECK(hit == test.size());
}

TEST_CASE("the fitted head is a local minimum of the objective") {
    const FeatureSet train = testing::cluster_features(3, 8, 6, 0.4, 3);
    ProbeConfig cfg;
    cfg.l2_reg = 0.05;
    const LinearHead head = train_linear(train, cfg);
    REQUIRE(head.converged);
    const double best = objective_oracle(head, train, cfg.l2_reg);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1e-3);
    for (int trial = 0; trial < 50; ++trial) {
        LinearHead moved = head;
        for (double& w : moved.weight.data) w += n(rng);
        for (double& b : moved.bias) b += n(rng);
        CHECK(objective_oracle(moved, train, cfg.l2_reg) >= best - 1e-12);
    }
}

TEST_CASE("strong regularisation falls back to the class prior") {
    // Class 2 is the most frequent, so with W pinned near zero the bias prefers it.
    FeatureSet train = testing::cluster_features(3, 8, 4, 0.1, 5);
    const FeatureSet extra = testing::cluster_features(3, 8, 4, 0.1, 6);
    for (std::size_t i = 0; i < extra.size(); ++i)
        if (extra.labels[i] == 2) {
            train.labels.push_back(2);
            Matrix<double> grown(train.features.rows + 1, train.features.cols);
            std::copy(train.features.data.begin(), train.features.data.end(), grown.data.begin());
            std::copy_n(extra.features.row(i).begin(), grown.cols, grown.row(grown.rows - 1).begin());
            train.features = std::move(grown);
        }
    ProbeConfig cfg;
    cfg.l2_reg = 1e6;
    const LinearHead head = train_linear(train, cfg);
    for (auto p : head.predict(train.features)) CHECK(p == 2);
    // The bias settles at the log class frequencies, up to a constant.
    std::map<std::size_t, double> count;
    for (auto l : train.labels) count[l] += 1;
    CHECK(head.bias[2] - head.bias[0] == doctest::Approx(std::log(count[2] / count[0])).epsilon(1e-3));
}

TEST_CASE("absent classes are never predicted") {
    FeatureSet train = testing::cluster_features(3, 8, 5, 0.1, 7);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (train.labels[i] != 1) keep.push_back(i);
    const FeatureSet partial = train.select(keep);
    const LinearHead head = train_linear(partial, ProbeConfig{});
    CHECK(std::isinf(head.bias[1]));
    CHECK(head.bias[1] < 0);
    for (auto p : head.predict(train.features)) CHECK(p != 1);
}

TEST_CASE("training is invariant to row order") {
    const FeatureSet train = testing::cluster_features(4, 8, 5, 0.3, 8);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(9);
    std::shuffle(order.begin(), order.end(), rng);
    const LinearHead a = train_linear(train, ProbeConfig{});
    const LinearHead b = train_linear(train.select(order), ProbeConfig{});
    const auto test = testing::cluster_features(4, 8, 20, 0.3, 10, FeatureSplit::test);
    CHECK(a.predict(test.features) == b.predict(test.features));
    for (std::size_t i = 0; i < a.weight.data.size(); ++i) CHECK(a.weight.data[i] == doctest::Approx(b.weight.data[i]).epsilon(1e-5));
}

TEST_CASE("shot sampling") {
    const FeatureSet pool = testing::cluster_features(4, 8, 20, 0.1, 11);
    for (std::size_t k : {1u, 2u, 4u, 8u, 16u}) {
        const FeatureSet s = sample_shots(pool, k, 42);
        CHECK(s.size() == 4 * k);
        std::map<std::size_t, std::size_t> per_class;
        for (auto l : s.labels) ++per_class[l];
        for (const auto& [c, n] : per_class) CHECK(n == k);
        // Class-major order.
        CHECK(std::is_sorted(s.labels.begin(), s.labels.end()));
        const FeatureSet again = sample_shots(pool, k, 42);
        CHECK(again.features == s.features);
        CHECK(again.labels == s.labels);
    }
    CHECK_FALSE(sample_shots(pool, 4, 1).features == sample_shots(pool, 4, 2).features);
    try {
        sample_shots(pool, 21, 0, {"alpha", "beta", "gamma", "delta"});
        FAIL("expected a data error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("alpha") != std::string::npos);
    }
}

TEST_CASE("probe curve reports per-seed values and their mean") {
    const FeatureSet pool = testing::cluster_features(4, 16, 20, 0.2, 12);
    const FeatureSet test = testing::cluster_features(4, 16, 10, 0.2, 13, FeatureSplit::test);
    ProbeConfig cfg;
    cfg.shots = {1, 4};
    cfg.seeds = 3;
    cfg.seed = 5;
    const auto reports = probe_curve(pool, test, cfg, "synthetic", "features");
    REQUIRE(reports.size() == 2 * (3 + 1));
    for (std::size_t block = 0; block < 2; ++block) {
        double sum = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            const auto& r = reports[block * 4 + s];
            CHECK(r.seed == 5 + s);
            CHECK(r.shots == cfg.shots[block]);
            sum += r.value;
        }
        const auto& mean = reports[block * 4 + 3];
        CHECK_FALSE(mean.seed.has_value());
        CHECK(mean.value == doctest::Approx(sum / 3).epsilon(1e-15));
        CHECK(mean.dataset == "synthetic");
    }
    CHECK(probe_curve(pool, test, cfg, "synthetic", "features") == reports);
}

TEST_CASE("features come from the model in batch order") {
    ClipModel<float> model(tiny_config());
    model.init_weights(14);
    const ImageBatch images = testing::random_images(model.config().image.spec, 5, 15);
    const FeatureSet f = extract_features(model, images, {0, 1, 0, 1, 0}, 2);
    const auto direct = model.encode_image(images);
    CHECK(f.size() == 5);
    for (std::size_t i = 0; i < f.features.data.size(); ++i)
        CHECK(f.features.data[i] == static_cast<double>(direct.vectors.data[i]));
    CHECK_THROWS(extract_features(model, images, {0, 1}, 2));
}
