// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "duoclip/bench.hpp"
#include "duoclip/checkpoint.hpp"
#include "duoclip/linear_probe.hpp"
#include "duoclip/presets.hpp"
#include "duoclip/training.hpp"
#include "duoclip/zeroshot.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "metric_oracles.hpp"
#include "toy_data.hpp"

using namespace duoclip;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 1. Analytic gradients of the full objective against central differences.
Outcome gradient_correctness() {
    double worst = 0;
    std::string worst_name;
    std::size_t tensors = 0;
    for (bool adapter : {false, true}) {
        ModelConfig cfg = tiny_config();
        cfg.image_adapter = adapter;
        ClipModel<double> model(cfg);
        model.init_weights(adapter ? 12 : 11);
        if (adapter) {
            std::mt19937_64 rng(13);
            std::normal_distribution<double> noise(0.0, 0.05);
            for (std::size_t t : model.adapter_tensors())
                for (double& v : model.params().view(t)) v += noise(rng);
        }
        const auto images = testing::random_images(cfg.image.spec, 4, 14);
        const auto tokens = testing::random_tokens(4, cfg.text.context_length, 15);
        for (const auto& c : testing::gradient_check(model, images, tokens, 3, 16, 1e-5)) {
            ++tensors;
            if (!(c.rel_error <= worst)) {
                worst = c.rel_error;
                worst_name = c.name;
            }
        }
    }
    return {worst <= 1e-4, std::to_string(tensors) + " tensors, worst rel error " + fmt("%.2e", worst) + " (" +
                               worst_name + ")"};
}

// 2. 32 random pairs memorised by the tiny model.
Outcome toy_overfit() {
    const ModelConfig cfg = tiny_config();
    ClipModel<float> model(cfg);
    model.init_weights(0);
    const PairDataset data{testing::random_images(cfg.image.spec, 32, 1),
                           testing::random_tokens(32, cfg.text.context_length, 2)};
    TrainConfig tc;
    tc.batch_size = 32;
    tc.total_steps = 200;
    tc.warmup_steps = default_warmup(tc.total_steps);
    tc.peak_lr = 1e-3;
    tc.weight_decay = 0.0;
    tc.seed = 3;
    auto state = make_train_state(model, tc);
    train(state, data, tc);
    const double loss = evaluate_loss(state.model, data.images, data.tokens);
    const auto acc = retrieval_accuracy(state.model.encode_image(data.images), state.model.encode_text(data.tokens));
    const bool ok = state.step <= 2000 && loss < 0.05 && acc.image_to_text == 1.0 && acc.text_to_image == 1.0;
    return {ok, std::to_string(state.step) + " steps, loss " + fmt("%.4f", loss) + ", i->t " +
                    fmt("%.3f", acc.image_to_text) + ", t->i " + fmt("%.3f", acc.text_to_image)};
}

// 3. ln n on uniform matrices, transpose and joint-permutation invariance.
Outcome loss_identities() {
    bool ok = true;
    for (std::size_t n : {2u, 4u, 8u}) ok &= contrastive_loss(Matrix<double>(n, n, 0.0)).loss == std::log(double(n));
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 15);
        Matrix<double> s(n, n);
        for (double& v : s.data) v = u(rng);
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t{0});
        std::shuffle(p.begin(), p.end(), rng);
        Matrix<double> psp(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) psp(i, j) = s(p[i], p[j]);
        const double base = contrastive_loss(s).loss;
        worst = std::max({worst, std::abs(contrastive_loss(s.transposed()).loss - base),
                          std::abs(contrastive_loss(psp).loss - base)});
    }
    ok &= worst <= 1e-10;
    return {ok, "ln n exact for n in {2,4,8}; max deviation over 100 trials " + fmt("%.1e", worst)};
}

// 4. Metrics against brute-force definitions.
Outcome metric_oracles() {
    std::mt19937_64 rng(31);
    std::size_t mismatches = 0;
    for (int i = 0; i < 200; ++i) {
        const auto inst = testing::random_label_instance(rng);
        mismatches += accuracy(inst.pred, inst.truth) != testing::oracle_accuracy(inst.pred, inst.truth);
    }
    for (int i = 0; i < 200; ++i) {
        const auto inst = testing::random_label_instance(rng);
        mismatches += mean_per_class_accuracy(inst.pred, inst.truth, inst.classes) !=
                      testing::oracle_mean_per_class(inst.pred, inst.truth, inst.classes);
    }
    for (int i = 0; i < 200; ++i) {
        const auto inst = testing::random_auc_instance(rng);
        mismatches += roc_auc(inst.scores, inst.labels) != testing::oracle_auc(inst.scores, inst.labels);
    }
    const double example = roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1});
    return {mismatches == 0 && example == 0.75,
            std::to_string(mismatches) + " mismatches over 3x200 instances; example auc " + fmt("%.4f", example)};
}

// 5. Zero-shot predictions under embedding scaling and class permutation.
Outcome zeroshot_invariances() {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    std::size_t scale_fail = 0, perm_fail = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t images = 10, classes = 2 + static_cast<std::size_t>(trial % 9), dim = 16;
        Matrix<double> img(images, dim), cls(classes, dim);
        for (double& v : img.data) v = n(rng);
        for (double& v : cls.data) v = n(rng);
        Matrix<double> scaled = img;
        for (std::size_t i = 0; i < images; ++i) {
            const double s = scale(rng);
            for (double& v : scaled.row(i)) v *= s;
        }
        const ClassEmbeddings<double> ce{std::vector<std::string>(classes), normalize_rows(cls)};
        const auto base = classify(normalize_rows(img), ce).predictions;
        scale_fail += classify(normalize_rows(scaled), ce).predictions != base;

        std::vector<std::size_t> p(classes);
        std::iota(p.begin(), p.end(), std::size_t{0});
        std::shuffle(p.begin(), p.end(), rng);
        Matrix<double> permuted(classes, dim);
        for (std::size_t c = 0; c < classes; ++c)
            std::copy_n(cls.row(p[c]).begin(), dim, permuted.row(c).begin());
        const auto moved =
            classify(normalize_rows(img), {std::vector<std::string>(classes), normalize_rows(permuted)}).predictions;
        for (std::size_t i = 0; i < images; ++i)
            if (p[moved[i]] != base[i]) {
                ++perm_fail;
                break;
            }
    }
    return {scale_fail == 0 && perm_fail == 0, "100 trials: " + std::to_string(scale_fail) + " scaling and " +
                                                    std::to_string(perm_fail) + " permutation failures"};
}

// 6. Few-shot curve shape on clustered unit features.
Outcome linear_probe_protocol() {
    const FeatureSet pool = testing::cluster_features(4, 64, 40, 0.1, 51);
    const FeatureSet test = testing::cluster_features(4, 64, 50, 0.1, 52, FeatureSplit::test);
    ProbeConfig cfg;
    cfg.seeds = 5;
    cfg.seed = 0;
    const auto reports = probe_curve(pool, test, cfg, "synthetic", "features");
    std::vector<double> means;
    for (const auto& r : reports)
        if (!r.seed) means.push_back(r.value);
    bool ok = means.size() == cfg.shots.size();
    for (std::size_t i = 1; i < means.size(); ++i) ok &= means[i] >= means[i - 1] - 0.02;
    ok &= !means.empty() && means.back() >= 0.95;
    bool sampling = true;
    for (std::size_t k : cfg.shots) {
        const FeatureSet a = sample_shots(pool, k, 7), b = sample_shots(pool, k, 7);
        sampling &= a.size() == k * 4 && a.features == b.features && a.labels == b.labels;
    }
    ok &= sampling;
    std::string curve;
    for (std::size_t i = 0; i < means.size(); ++i)
        curve += (i ? " " : "") + std::to_string(cfg.shots[i]) + ":" + fmt("%.3f", means[i]);
    return {ok, "mean acc " + curve + (sampling ? "; sampling exact and deterministic" : "; sampling FAILED")};
}

// 7. Positional interpolation and patch-grid arithmetic.
Outcome resolution_finetuning() {
    const ModelConfig cfg = tiny_config();
    ClipModel<float> model(cfg);
    model.init_weights(61);
    const bool identity = interpolate_pos_embeddings(model, cfg.image.spec).params().data() == model.params().data();
    const ImageSpec big{64, cfg.image.spec.patch_size};
    const auto grown = interpolate_pos_embeddings(model, big);
    const double loss = evaluate_loss(grown, testing::random_images(big, 8, 62),
                                      testing::random_tokens(8, cfg.text.context_length, 63));
    const bool lengths = patch_grid({224, 16}).sequence_length == 197 &&
                         patch_grid({336, 14}).sequence_length == 577 &&
                         patch_grid({384, 32}).sequence_length == 145;
    return {identity && std::isfinite(loss) && lengths,
            std::string("identity ") + (identity ? "exact" : "BROKEN") + ", 64 px loss " + fmt("%.4f", loss) +
                ", sequence lengths " + (lengths ? "197/577/145" : "WRONG")};
}

// 8. Frozen backbone with a trainable identity adapter.
Outcome frozen_adapter() {
    const ModelConfig cfg = tiny_config();
    ClipModel<float> base(cfg);
    base.init_weights(71);
    const PairDataset data{testing::random_images(cfg.image.spec, 16, 72),
                           testing::random_tokens(16, cfg.text.context_length, 73)};
    TrainConfig tc;
    tc.batch_size = 8;
    tc.total_steps = 100;
    tc.warmup_steps = default_warmup(100);
    tc.peak_lr = 1e-3;
    tc.regime = TrainRegime::frozen_adapter;
    auto state = build_frozen_adapter(base, tc);
    const bool exact_identity = state.model.encode_image(data.images) == base.encode_image(data.images);
    train(state, data, tc);
    const auto adapter = state.model.adapter_tensors();
    std::size_t changed_frozen = 0;
    bool adapter_moved = false;
    for (const auto& info : base.params().tensors()) {
        const auto before = base.params()[info.name];
        const auto after = state.model.params()[info.name];
        changed_frozen += !std::equal(before.begin(), before.end(), after.begin(), after.end());
    }
    for (std::size_t t : adapter) {
        for (float v : state.model.params().view(t)) adapter_moved |= v != 0.0f && v != 1.0f;
    }
    return {exact_identity && changed_frozen == 0 && adapter_moved && state.step == 100,
            std::to_string(state.step) + " steps, " + std::to_string(changed_frozen) +
                " backbone tensors changed, adapter " + (adapter_moved ? "trained" : "static") +
                ", identity " + (exact_identity ? "exact" : "inexact")};
}

// 9. Measured throughput ordering versus FLOP ordering; stored reference ordering.
Outcome bench_ordering() {
    const std::vector<std::string> presets{"tiny-patch4-32", "tiny-patch8-32", "tiny-patch16-32"};
    std::vector<std::size_t> by_flops(presets.size());
    std::iota(by_flops.begin(), by_flops.end(), std::size_t{0});
    std::vector<double> flops;
    for (const auto& p : presets) flops.push_back(image_tower_flops(resolve_preset(p)));
    std::sort(by_flops.begin(), by_flops.end(), [&](auto a, auto b) { return flops[a] < flops[b]; });
    std::vector<ClipModel<float>> models;
    for (const auto& p : presets) {
        models.emplace_back(resolve_preset(p));
        models.back().init_weights(81);
    }
    BenchOptions opts;
    opts.batch_size = 4;
    opts.warmup_iters = 3;
    opts.measured_iters = 30;
    std::size_t agree = 0;
    for (int run = 0; run < 10; ++run) {
        std::vector<BenchReport> reports;
        for (std::size_t i = 0; i < presets.size(); ++i)
            reports.push_back(run_bench(models[i], testing::random_images(models[i].config().image.spec, 4, 82), opts));
        std::vector<std::size_t> by_speed(presets.size());
        std::iota(by_speed.begin(), by_speed.end(), std::size_t{0});
        std::sort(by_speed.begin(), by_speed.end(),
                  [&](auto a, auto b) { return reports[a].iters_per_sec > reports[b].iters_per_sec; });
        agree += by_speed == by_flops;
    }
    const auto& ref = reference_throughputs();
    const auto ips = [&](const std::string& name) {
        for (const auto& r : ref)
            if (r.preset == name) return r.iters_per_sec;
        return -1.0;
    };
    const bool fixture = ips("vit-base-patch32-224") == 308.84 && ips("vit-base-patch16-224") == 155.35 &&
                         ips("vit-large-patch14-224") == 49.95 && ips("vit-large-patch14-336") == 22.11 &&
                         308.84 > 155.35 && 155.35 > 49.95 && 49.95 > 22.11;
    return {agree >= 9 && fixture, std::to_string(agree) + "/10 runs match FLOP ordering; reference ordering " +
                                       (fixture ? "holds" : "BROKEN")};
}

// 10. Checkpoint roundtrip, corruption detection and reproducible CLI runs.
Outcome persistence() {
    testing::ScratchDir dir("duoclip_acceptance");
    testing::write_toy_corpus(dir);
    const auto train_args = [&](const std::string& out) {
        return std::vector<std::string>{"train", "--manifest", dir / "captions.jsonl", "--out", out, "--steps", "30",
                                        "--batch", "12", "--seed", "5", "--lr", "1e-3"};
    };
    const auto t1 = testing::run_cli(train_args(dir / "a.dclp"));
    const auto t2 = testing::run_cli(train_args(dir / "b.dclp"));
    if (t1.code != 0 || t2.code != 0) return {false, "training failed: " + t1.err};
    const bool same_ckpt = slurp(dir / "a.dclp") == slurp(dir / "b.dclp");

    const std::vector<std::string> zs{"zeroshot", "--ckpt", dir / "a.dclp", "--dataset", dir / "ds", "--seed", "5"};
    const auto z1 = testing::run_cli(zs);
    auto zs_b = zs;
    zs_b[2] = dir / "b.dclp";
    const auto z2 = testing::run_cli(zs_b);
    const bool same_report = z1.code == 0 && z2.code == 0 && z1.out == z2.out && !z1.out.empty();

    const auto loaded = load_checkpoint(dir / "a.dclp");
    const auto reloaded = deserialize_checkpoint(serialize_checkpoint(loaded.model, loaded.vocab), "mem");
    const auto images = testing::random_images(loaded.model.config().image.spec, 4, 91);
    const std::vector<std::string> texts{"a red square", "a blue square"};
    const bool bitwise =
        reloaded.model.encode_image(images) == loaded.model.encode_image(images) &&
        reloaded.model.encode_text(encode_batch(texts, reloaded.vocab, 16)) ==
            loaded.model.encode_text(encode_batch(texts, loaded.vocab, 16));

    auto bytes = slurp(dir / "a.dclp");
    std::mt19937_64 rng(92);
    std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
    std::uniform_int_distribution<int> mask(1, 255);
    std::size_t missed = 0;
    const std::size_t trials = 500;
    for (std::size_t i = 0; i < trials; ++i) {
        const std::size_t at = i < 64 ? i : pos(rng);
        const std::uint8_t saved = bytes[at];
        bytes[at] = static_cast<std::uint8_t>(saved ^ mask(rng));
        try {
            deserialize_checkpoint(bytes, "corrupt");
            ++missed;
        } catch (const DataError&) {
        }
        bytes[at] = saved;
    }
    return {same_ckpt && same_report && bitwise && missed == 0,
            std::string("checkpoints ") + (same_ckpt ? "identical" : "DIFFER") + ", zero-shot report " +
                (same_report ? "identical" : "DIFFERS") + ", embeddings " + (bitwise ? "bitwise equal" : "DIFFER") +
                ", " + std::to_string(trials - missed) + "/" + std::to_string(trials) + " corruptions detected"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"toy overfit", toy_overfit},
        {"loss identities", loss_identities},
        {"metric oracles", metric_oracles},
        {"zero-shot invariances", zeroshot_invariances},
        {"linear-probe protocol", linear_probe_protocol},
        {"resolution fine-tuning", resolution_finetuning},
        {"frozen adapter", frozen_adapter},
        {"bench ordering", bench_ordering},
        {"persistence", persistence},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
                  << " (" << fmt("%.1f", secs) << " s)" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
