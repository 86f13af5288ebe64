// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>

#include "CLI11.hpp"
#include "duoclip/bench.hpp"
#include "duoclip/checkpoint.hpp"
#include "duoclip/dataset.hpp"
#include "duoclip/error.hpp"
#include "duoclip/kernels.hpp"
#include "duoclip/linear_probe.hpp"
#include "duoclip/presets.hpp"
#include "duoclip/training.hpp"
#include "duoclip/zeroshot.hpp"
#include "json.hpp"

namespace duoclip {

namespace {

using nlohmann::json;

const std::vector<std::string> kFormats{"json", "csv", "table"};

void log_run(std::ostream& err, const std::string& command, const json& config) {
    err << "[duoclip " << command << "] threads=" << kernels::active_threads()
        << " config=" << config.dump() << "\n";
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
        out.flush();
        return;
    }
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw DataError("cannot write " + path);
    file << text;
}

template <class F>
void with_precision(const LoadedCheckpoint& ckpt, bool fp64, F&& body) {
    if (fp64) body(ckpt.model.cast<double>());
    else body(ckpt.model);
}

ImageBatch synthetic_images(const ImageSpec& spec, std::size_t count, std::uint64_t seed) {
    ImageBatch b;
    b.spec = spec;
    b.count = count;
    b.pixels.resize(count * b.image_size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (float& v : b.pixels) v = dist(rng);
    return b;
}

std::string report_text(const std::vector<EvalReport>& reports, const std::string& format) {
    if (format == "csv") return reports_to_csv(reports);
    if (format == "table") return reports_to_table(reports);
    return reports_to_json(reports);
}

/// Prefers the "test" split when the manifest has one.
std::vector<LabeledImage> eval_entries(const ClassificationDataset& ds, const std::string& split) {
    std::string which = split;
    if (which.empty() && !ds.split("test").empty()) which = "test";
    auto entries = ds.split(which);
    if (entries.empty())
        throw DataError(ds.name + ": no manifest entries in split '" + which + "'");
    return entries;
}

std::pair<std::vector<std::string>, std::vector<std::size_t>> unzip(const std::vector<LabeledImage>& entries) {
    std::vector<std::string> paths;
    std::vector<std::size_t> labels;
    for (const auto& e : entries) {
        paths.push_back(e.path);
        labels.push_back(e.label);
    }
    return {paths, labels};
}

// ---------------------------------------------------------------- training

struct TrainFlags {
    std::string manifest;
    std::string out;
    std::string metrics;
    std::size_t steps = 1000;
    std::size_t batch = 32;
    std::size_t micro_batch = 0;
    std::uint64_t seed = 0;
    double lr = 5e-4;
    long warmup = -1;
    double weight_decay = 0.2;
    std::size_t log_every = 100;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--manifest", f.manifest, "JSONL of {\"image\", \"caption\"}")->required();
    cmd->add_option("--out", f.out, "checkpoint to write")->required();
    cmd->add_option("--steps", f.steps, "optimizer steps")->capture_default_str();
    cmd->add_option("--batch", f.batch, "pairs per step")->capture_default_str();
    cmd->add_option("--micro-batch", f.micro_batch, "chunk size for accumulation (0 = off)");
    cmd->add_option("--seed", f.seed, "initialisation and batch-order seed")->capture_default_str();
    cmd->add_option("--lr", f.lr, "peak learning rate")->capture_default_str();
    cmd->add_option("--warmup", f.warmup, "warmup steps (default 2% of steps)");
    cmd->add_option("--weight-decay", f.weight_decay, "decoupled weight decay")->capture_default_str();
    cmd->add_option("--metrics", f.metrics, "write step,loss,lr,temperature CSV here");
    cmd->add_option("--log-every", f.log_every, "progress line interval on stderr (0 = off)");
}

TrainConfig train_config(const TrainFlags& f, TrainRegime regime) {
    TrainConfig c;
    c.batch_size = f.batch;
    c.micro_batch = f.micro_batch;
    c.total_steps = f.steps;
    c.warmup_steps = f.warmup >= 0 ? static_cast<std::size_t>(f.warmup) : default_warmup(f.steps);
    c.peak_lr = f.lr;
    c.weight_decay = f.weight_decay;
    c.seed = f.seed;
    c.regime = regime;
    c.validate();
    return c;
}

json train_config_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size}, {"micro_batch", c.micro_batch},
            {"total_steps", c.total_steps}, {"warmup_steps", c.warmup_steps},
            {"peak_lr", c.peak_lr}, {"weight_decay", c.weight_decay},
            {"seed", c.seed}, {"regime", to_string(c.regime)}};
}

PairDataset load_pairs(const std::vector<CaptionPair>& pairs, const Vocab& vocab, const ModelConfig& cfg) {
    std::vector<std::string> paths, captions;
    for (const auto& p : pairs) {
        paths.push_back(p.image);
        captions.push_back(p.caption);
    }
    return {load_image_batch(paths, cfg.image.spec), encode_batch(captions, vocab, cfg.text.context_length)};
}

/// Streams metrics, then writes the checkpoint and a JSON summary.
template <class Run>
void run_training(const std::string& command, const TrainFlags& f, const TrainConfig& cfg,
                  const Vocab& vocab, std::ostream& out, std::ostream& err, Run&& run) {
    std::ofstream metrics;
    if (!f.metrics.empty()) {
        metrics.open(f.metrics, std::ios::trunc);
        if (!metrics) throw DataError("cannot write " + f.metrics);
        write_metrics_header(metrics);
    }
    const StepCallback on_step = [&](const StepResult& r) {
        if (metrics.is_open()) write_metrics_row(metrics, r);
        if (f.log_every && (r.step % f.log_every == 0 || r.step + 1 == cfg.total_steps))
            err << "[duoclip " << command << "] step " << r.step << " loss " << r.loss << " lr " << r.lr
                << " temperature " << r.temperature << "\n";
    };
    TrainState<float> state = run(on_step);
    const json metadata{{"command", command},
                        {"train", train_config_json(cfg)},
                        {"final_loss", state.loss_history.empty() ? json(nullptr) : json(state.loss_history.back())}};
    save_checkpoint(state.model, vocab, f.out, metadata);
    json summary{{"checkpoint", f.out},
                 {"steps", state.step},
                 {"final_loss", metadata["final_loss"]},
                 {"temperature", static_cast<double>(state.model.logit_scale())}};
    out << summary.dump(2) << "\n";
}

// ---------------------------------------------------------------- commands

struct Options {
    // vocab
    std::string corpus, vocab_out;
    std::size_t vocab_size = 49408;
    // train / finetune
    TrainFlags train;
    std::string preset = "tiny", vocab_path, from, regime = "from_scratch";
    std::size_t resolution = 0;
    // evaluation
    std::string ckpt, dataset, metric, split, format = "json", out;
    bool fp64 = false;
    std::uint64_t seed = 0;
    // probe
    std::vector<std::size_t> shots{1, 2, 4, 8, 16};
    std::size_t seeds = 3, max_iter = 500;
    double l2 = 1e-3;
    std::string train_split = "train", test_split = "test";
    bool zeroshot_row = true;
    // bench
    std::vector<std::string> ckpts, presets;
    std::size_t batch = 1, warmup = 10, iters = 100;
    int threads = 1;
    // similarity
    std::vector<std::string> texts, images;
    std::string texts_file;
    // export
    std::string export_vocab;
};

void cmd_vocab(const Options& o, std::ostream& out, std::ostream& err) {
    log_run(err, "vocab build", {{"corpus", o.corpus}, {"size", o.vocab_size}, {"out", o.vocab_out}});
    std::vector<std::string> lines;
    if (std::filesystem::path(o.corpus).extension() == ".jsonl") {
        for (auto& p : load_caption_manifest(o.corpus)) lines.push_back(std::move(p.caption));
    } else {
        lines = read_lines(o.corpus);
    }
    const Vocab vocab = build_vocab(lines, o.vocab_size);
    vocab.save(o.vocab_out);
    out << json{{"vocab", o.vocab_out}, {"size", vocab.size()}, {"merges", vocab.merges().size()}}.dump(2) << "\n";
}

void cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    const TrainRegime regime = parse_regime(o.regime);
    const auto pairs = load_caption_manifest(o.train.manifest);
    if (o.from.empty()) {
        if (regime != TrainRegime::from_scratch)
            throw UsageError("--regime " + o.regime + " needs --from <checkpoint>");
        ModelConfig config = resolve_preset(o.preset);
        Vocab vocab;
        if (!o.vocab_path.empty()) {
            vocab = Vocab::load(o.vocab_path);
        } else {
            std::vector<std::string> captions;
            for (const auto& p : pairs) captions.push_back(p.caption);
            vocab = build_vocab(captions, config.text.vocab_size);
        }
        config.text.vocab_size = vocab.size();
        const TrainConfig cfg = train_config(o.train, regime);
        log_run(err, "train", {{"model", config}, {"train", train_config_json(cfg)}, {"seed", cfg.seed},
                               {"manifest", o.train.manifest}, {"vocab_size", vocab.size()}});
        const PairDataset data = load_pairs(pairs, vocab, config);
        run_training("train", o.train, cfg, vocab, out, err, [&](const StepCallback& cb) {
            ClipModel<float> model(config);
            model.init_weights(cfg.seed);
            auto state = make_train_state(std::move(model), cfg);
            train(state, data, cfg, cb);
            return state;
        });
        return;
    }
    if (regime == TrainRegime::from_scratch)
        throw UsageError("--from continues a checkpoint; use --regime finetune or frozen_adapter");
    const LoadedCheckpoint ckpt = load_checkpoint(o.from);
    const TrainConfig cfg = train_config(o.train, regime);
    log_run(err, "train", {{"from", o.from}, {"model", ckpt.model.config()}, {"train", train_config_json(cfg)},
                           {"seed", cfg.seed}, {"manifest", o.train.manifest}});
    const PairDataset data = load_pairs(pairs, ckpt.vocab, ckpt.model.config());
    run_training("train", o.train, cfg, ckpt.vocab, out, err, [&](const StepCallback& cb) {
        auto state = regime == TrainRegime::frozen_adapter ? build_frozen_adapter(ckpt.model, cfg)
                                                           : make_train_state(ckpt.model, cfg);
        train(state, data, cfg, cb);
        return state;
    });
}

void cmd_finetune(const Options& o, std::ostream& out, std::ostream& err) {
    const LoadedCheckpoint ckpt = load_checkpoint(o.from);
    const std::size_t resolution = o.resolution ? o.resolution : ckpt.model.config().image.spec.resolution;
    const TrainConfig cfg = train_config(o.train, TrainRegime::finetune);
    ModelConfig target = ckpt.model.config();
    target.image.spec.resolution = resolution;
    patch_grid(target.image.spec);
    log_run(err, "finetune", {{"from", o.from}, {"resolution", resolution}, {"model", target},
                              {"train", train_config_json(cfg)}, {"seed", cfg.seed},
                              {"manifest", o.train.manifest}});
    const PairDataset data = load_pairs(load_caption_manifest(o.train.manifest), ckpt.vocab, target);
    run_training("finetune", o.train, cfg, ckpt.vocab, out, err, [&](const StepCallback& cb) {
        return finetune_resolution(ckpt.model, resolution, cfg, data, cb);
    });
}

void cmd_zeroshot(const Options& o, std::ostream& out, std::ostream& err) {
    const LoadedCheckpoint ckpt = load_checkpoint(o.ckpt);
    const ClassificationDataset ds = load_classification_dataset(o.dataset);
    const Metric metric = !o.metric.empty() ? parse_metric(o.metric)
                          : ds.metric        ? parse_metric(*ds.metric)
                                             : default_metric(ds.name);
    log_run(err, "zeroshot", {{"ckpt", o.ckpt}, {"dataset", o.dataset}, {"metric", to_string(metric)},
                              {"split", o.split}, {"fp64", o.fp64}, {"seed", o.seed},
                              {"model", ckpt.model.config()}});
    const auto [paths, labels] = unzip(eval_entries(ds, o.split));
    const ImageBatch images = load_image_batch(paths, ckpt.model.config().image.spec);
    std::vector<EvalReport> reports;
    with_precision(ckpt, o.fp64, [&](const auto& model) {
        reports.push_back(evaluate_zeroshot(model, ckpt.vocab, ds, images, labels, metric));
    });
    emit(report_text(reports, o.format), o.out, out);
}

void cmd_probe(const Options& o, std::ostream& out, std::ostream& err) {
    const LoadedCheckpoint ckpt = load_checkpoint(o.ckpt);
    const ClassificationDataset ds = load_classification_dataset(o.dataset);
    ProbeConfig cfg;
    cfg.shots = o.shots;
    cfg.seeds = o.seeds;
    cfg.seed = o.seed;
    cfg.l2_reg = o.l2;
    cfg.max_iter = o.max_iter;
    cfg.validate();
    log_run(err, "probe", {{"ckpt", o.ckpt}, {"dataset", o.dataset}, {"shots", cfg.shots},
                           {"seeds", cfg.seeds}, {"seed", cfg.seed}, {"l2_reg", cfg.l2_reg},
                           {"max_iter", cfg.max_iter}, {"train_split", o.train_split},
                           {"test_split", o.test_split}, {"fp64", o.fp64}, {"model", ckpt.model.config()}});
    const auto pool_entries = ds.split(o.train_split);
    const auto test_entries = ds.split(o.test_split);
    if (pool_entries.empty()) throw DataError(ds.name + ": no entries in split '" + o.train_split + "'");
    if (test_entries.empty()) throw DataError(ds.name + ": no entries in split '" + o.test_split + "'");
    const auto [pool_paths, pool_labels] = unzip(pool_entries);
    const auto [test_paths, test_labels] = unzip(test_entries);
    const ImageSpec& spec = ckpt.model.config().image.spec;
    const ImageBatch pool_images = load_image_batch(pool_paths, spec);
    const ImageBatch test_images = load_image_batch(test_paths, spec);

    std::vector<EvalReport> reports;
    with_precision(ckpt, o.fp64, [&](const auto& model) {
        if (o.zeroshot_row && !ds.templates.empty())
            reports.push_back(evaluate_zeroshot(model, ckpt.vocab, ds, test_images, test_labels, Metric::accuracy));
        const auto curve = probe_curve(model, pool_images, pool_labels, test_images, test_labels, ds, cfg);
        reports.insert(reports.end(), curve.begin(), curve.end());
    });
    emit(report_text(reports, o.format), o.out, out);
}

void cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.ckpts.empty() && o.presets.empty()) throw UsageError("bench needs --ckpt or --preset");
    BenchOptions opts;
    opts.batch_size = o.batch;
    opts.warmup_iters = o.warmup;
    opts.measured_iters = o.iters;
    opts.threads = o.threads;
    log_run(err, "bench", {{"ckpt", o.ckpts}, {"preset", o.presets}, {"batch", o.batch},
                           {"warmup", o.warmup}, {"iters", o.iters}, {"threads", o.threads},
                           {"seed", o.seed}, {"fp64", o.fp64}});
    std::vector<BenchReport> reports;
    auto measure = [&](const auto& model) {
        const ImageBatch source = synthetic_images(model.config().image.spec, o.batch, o.seed);
        reports.push_back(run_bench(model, source, opts));
    };
    for (const auto& path : o.ckpts) {
        const LoadedCheckpoint ckpt = load_checkpoint(path);
        with_precision(ckpt, o.fp64, measure);
    }
    for (const auto& name : o.presets) {
        ClipModel<float> model(resolve_preset(name));
        model.init_weights(o.seed);
        if (o.fp64) measure(model.cast<double>());
        else measure(model);
    }
    std::string text;
    if (o.format == "csv") {
        text = bench_reports_to_csv(reports);
    } else if (o.format == "table") {
        const auto cmp = compare_presets(reports);
        text = cmp.to_table();
    } else {
        text = bench_reports_to_json(reports);
    }
    if (o.format != "table")
        for (const auto& w : compare_presets(reports).warnings) err << "warning: " << w << "\n";
    emit(text, o.out, out);
}

void cmd_similarity(const Options& o, std::ostream& out, std::ostream& err) {
    std::vector<std::string> texts = o.texts;
    if (!o.texts_file.empty())
        for (auto& t : read_lines(o.texts_file)) texts.push_back(std::move(t));
    if (texts.empty()) throw UsageError("similarity needs --text or --texts-file");
    if (o.images.empty()) throw UsageError("similarity needs at least one --image");
    const LoadedCheckpoint ckpt = load_checkpoint(o.ckpt);
    log_run(err, "similarity", {{"ckpt", o.ckpt}, {"texts", texts.size()}, {"images", o.images},
                                {"fp64", o.fp64}, {"seed", o.seed}});
    const ImageBatch images = load_image_batch(o.images, ckpt.model.config().image.spec);
    std::vector<std::string> names;
    for (const auto& p : o.images) names.push_back(std::filesystem::path(p).filename().string());
    std::string text;
    with_precision(ckpt, o.fp64, [&](const auto& model) {
        const auto report = similarity_report(texts, names, images, model, ckpt.vocab);
        text = o.format == "csv" ? report.to_csv() : o.format == "table" ? report.to_table() : report.to_json();
    });
    emit(text, o.out, out);
}

void cmd_export(const Options& o, std::ostream& out, std::ostream& err) {
    log_run(err, "export", {{"ckpt", o.ckpt}, {"out", o.out}, {"seed", o.seed}});
    const json header = checkpoint_header(o.ckpt);
    if (!o.export_vocab.empty()) load_checkpoint(o.ckpt).vocab.save(o.export_vocab);
    emit(header.dump(2) + "\n", o.out, out);
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    kernels::apply_thread_env();
    CLI::App app{"duoclip: dual-encoder image-text models on the CPU"};
    app.name("duoclip");
    app.require_subcommand(1);
    Options o;

    auto* vocab = app.add_subcommand("vocab", "tokenizer vocabulary tools");
    vocab->require_subcommand(1);
    auto* vocab_build = vocab->add_subcommand("build", "learn a byte-level BPE vocabulary");
    vocab_build->add_option("--corpus", o.corpus, "text file (one line per sample) or caption JSONL")->required();
    vocab_build->add_option("--size", o.vocab_size, "target vocabulary size")->capture_default_str();
    vocab_build->add_option("--out", o.vocab_out, "vocabulary JSON to write")->required();

    auto* train_cmd = app.add_subcommand("train", "contrastive training");
    add_train_flags(train_cmd, o.train);
    train_cmd->add_option("--preset", o.preset, "model preset")->capture_default_str();
    train_cmd->add_option("--vocab", o.vocab_path, "vocabulary JSON (built from captions when omitted)");
    train_cmd->add_option("--from", o.from, "start from this checkpoint");
    train_cmd->add_option("--regime", o.regime, "from_scratch | finetune | frozen_adapter")->capture_default_str();

    auto* finetune_cmd = app.add_subcommand("finetune", "continue training, optionally at a new resolution");
    add_train_flags(finetune_cmd, o.train);
    finetune_cmd->add_option("--from", o.from, "checkpoint to start from")->required();
    finetune_cmd->add_option("--resolution", o.resolution, "new input resolution");

    auto add_eval = [&](CLI::App* cmd) {
        cmd->add_option("--ckpt", o.ckpt, "checkpoint")->required();
        cmd->add_option("--format", o.format, "json | csv | table")->check(CLI::IsMember(kFormats))->capture_default_str();
        cmd->add_option("--out", o.out, "write the report here instead of stdout");
        cmd->add_flag("--fp64", o.fp64, "compute in 64-bit");
        cmd->add_option("--seed", o.seed, "seed")->capture_default_str();
    };

    auto* zeroshot_cmd = app.add_subcommand("zeroshot", "zero-shot classification");
    add_eval(zeroshot_cmd);
    zeroshot_cmd->add_option("--dataset", o.dataset, "dataset directory")->required();
    zeroshot_cmd->add_option("--metric", o.metric, "accuracy | mean_per_class | roc_auc");
    zeroshot_cmd->add_option("--split", o.split, "manifest split (default: test if present, else all)");

    auto* probe_cmd = app.add_subcommand("probe", "few-shot linear probe");
    add_eval(probe_cmd);
    probe_cmd->add_option("--dataset", o.dataset, "dataset directory")->required();
    probe_cmd->add_option("--shots", o.shots, "shots per class")->delimiter(',')->capture_default_str();
    probe_cmd->add_option("--seeds", o.seeds, "seeds per shot count")->capture_default_str();
    probe_cmd->add_option("--l2", o.l2, "L2 penalty on the head weights")->capture_default_str();
    probe_cmd->add_option("--max-iter", o.max_iter, "optimizer iterations")->capture_default_str();
    probe_cmd->add_option("--train-split", o.train_split, "split sampled for shots")->capture_default_str();
    probe_cmd->add_option("--test-split", o.test_split, "split scored")->capture_default_str();
    probe_cmd->add_flag("!--no-zeroshot", o.zeroshot_row, "omit the zero-shot row");

    auto* bench_cmd = app.add_subcommand("bench", "image-tower throughput");
    bench_cmd->add_option("--ckpt", o.ckpts, "checkpoint(s) to time");
    bench_cmd->add_option("--preset", o.presets, "preset(s) to time with random weights")->delimiter(',');
    bench_cmd->add_option("--batch", o.batch, "images per iteration")->capture_default_str();
    bench_cmd->add_option("--warmup", o.warmup, "untimed iterations")->capture_default_str();
    bench_cmd->add_option("--iters", o.iters, "timed iterations")->capture_default_str();
    bench_cmd->add_option("--threads", o.threads, "worker threads in the timed region")->capture_default_str();
    bench_cmd->add_option("--format", o.format, "json | csv | table")->check(CLI::IsMember(kFormats))->capture_default_str();
    bench_cmd->add_option("--out", o.out, "write the report here instead of stdout");
    bench_cmd->add_flag("--fp64", o.fp64, "compute in 64-bit");
    bench_cmd->add_option("--seed", o.seed, "seed for weights and inputs")->capture_default_str();

    auto* sim_cmd = app.add_subcommand("similarity", "text x image cosine matrix");
    add_eval(sim_cmd);
    sim_cmd->add_option("--text", o.texts, "text (repeatable)");
    sim_cmd->add_option("--texts-file", o.texts_file, "one text per line");
    sim_cmd->add_option("--image", o.images, "image path (repeatable)");

    auto* export_cmd = app.add_subcommand("export", "dump checkpoint config and tensor index as JSON");
    export_cmd->add_option("--ckpt", o.ckpt, "checkpoint")->required();
    export_cmd->add_option("--out", o.out, "write here instead of stdout");
    export_cmd->add_option("--vocab-out", o.export_vocab, "also write the embedded vocabulary");
    export_cmd->add_option("--seed", o.seed, "seed")->capture_default_str();

    if (argc <= 1) {
        err << app.help();
        return kExitUsage;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (vocab_build->parsed()) cmd_vocab(o, out, err);
        else if (train_cmd->parsed()) cmd_train(o, out, err);
        else if (finetune_cmd->parsed()) cmd_finetune(o, out, err);
        else if (zeroshot_cmd->parsed()) cmd_zeroshot(o, out, err);
        else if (probe_cmd->parsed()) cmd_probe(o, out, err);
        else if (bench_cmd->parsed()) cmd_bench(o, out, err);
        else if (sim_cmd->parsed()) cmd_similarity(o, out, err);
        else if (export_cmd->parsed()) cmd_export(o, out, err);
        return kExitOk;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
}

}  // namespace duoclip
