// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iterator>

#include "doctest.h"
#include "duoclip/checkpoint.hpp"
#include "json.hpp"
#include "toy_data.hpp"

using namespace duoclip;
using testing::run_cli;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_cli({}).code == kExitUsage);
    CHECK(run_cli({"frobnicate"}).code == kExitUsage);
    CHECK(run_cli({"zeroshot"}).code == kExitUsage);
    CHECK(run_cli({"bench", "--preset", "vit-huge", "--iters", "1"}).code == kExitUsage);
    CHECK(run_cli({"zeroshot", "--ckpt", "x", "--dataset", "y", "--format", "xml"}).code == kExitUsage);
    const auto help = run_cli({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("zeroshot") != std::string::npos);
}

TEST_CASE("data errors exit with code 2 and name the line") {
    testing::ScratchDir dir("duoclip_cli_bad");
    dir.write("captions.jsonl", "{\"image\": \"a.ppm\", \"caption\": \"x\"}\n{\"image\": oops}\n");
    const auto r = run_cli({"train", "--manifest", dir / "captions.jsonl", "--out", dir / "m.dclp", "--steps", "1"});
    CHECK(r.code == kExitData);
    CHECK(r.err.find("captions.jsonl:2") != std::string::npos);
    dir.write("broken.dclp", "DCLP but not really");
    CHECK(run_cli({"export", "--ckpt", dir / "broken.dclp"}).code == kExitData);
    CHECK(run_cli({"export", "--ckpt", dir / "missing.dclp"}).code == kExitData);
}

TEST_CASE("train, evaluate, inspect: the full toy workflow") {
    testing::ScratchDir dir("duoclip_cli_flow");
    testing::write_toy_corpus(dir);
    const std::string ckpt = dir / "tiny.dclp";
    const auto train = run_cli({"train", "--manifest", dir / "captions.jsonl", "--out", ckpt, "--steps", "20",
                                "--batch", "12", "--seed", "3", "--lr", "1e-3", "--metrics", dir / "m.csv"});
    REQUIRE_MESSAGE(train.code == kExitOk, train.err);
    CHECK(train.err.find("seed") != std::string::npos);
    CHECK(train.err.find("threads=") != std::string::npos);
    CHECK(slurp(dir / "m.csv").rfind("step,loss,lr,temperature\n", 0) == 0);
    CHECK(load_checkpoint(ckpt).metadata.is_object());

    const std::vector<std::string> zs{"zeroshot", "--ckpt", ckpt, "--dataset", dir / "ds", "--seed", "1"};
    const auto a = run_cli(zs);
    const auto b = run_cli(zs);
    REQUIRE_MESSAGE(a.code == kExitOk, a.err);
    CHECK(a.out == b.out);
    const auto report = nlohmann::json::parse(a.out);
    REQUIRE(report.is_array());
    CHECK(report[0].at("dataset") == "toy-colours");
    CHECK(report[0].at("shots") == "zero");

    auto csv_args = zs;
    csv_args.insert(csv_args.end(), {"--format", "csv", "--out", dir / "z.csv"});
    REQUIRE(run_cli(csv_args).code == kExitOk);
    CHECK(slurp(dir / "z.csv").rfind("dataset,metric,value,model,shots,seed\n", 0) == 0);

    const auto probe = run_cli({"probe", "--ckpt", ckpt, "--dataset", dir / "ds", "--shots", "1,2", "--seeds", "2"});
    REQUIRE_MESSAGE(probe.code == kExitOk, probe.err);
    const auto rows = nlohmann::json::parse(probe.out);
    CHECK(rows.size() == 1 + 2 * 3);
    CHECK(rows[0].at("shots") == "zero");

    const auto sim = run_cli({"similarity", "--ckpt", ckpt, "--text", "a red square", "--text", "a blue square",
                              "--image", dir / "ds/red0.ppm", "--format", "csv"});
    REQUIRE_MESSAGE(sim.code == kExitOk, sim.err);
    CHECK(sim.out.find("a red square") != std::string::npos);

    const auto exported = run_cli({"export", "--ckpt", ckpt, "--vocab-out", dir / "vocab.json"});
    REQUIRE(exported.code == kExitOk);
    CHECK(nlohmann::json::parse(exported.out).at("tensors").is_array());
    CHECK(Vocab::load(dir / "vocab.json") == load_checkpoint(ckpt).vocab);

    const auto grown = run_cli({"finetune", "--from", ckpt, "--manifest", dir / "captions.jsonl", "--out",
                                dir / "big.dclp", "--steps", "2", "--batch", "6", "--resolution", "64"});
    REQUIRE_MESSAGE(grown.code == kExitOk, grown.err);
    CHECK(load_checkpoint(dir / "big.dclp").model.config().image.spec.resolution == 64);

    CHECK(run_cli({"zeroshot", "--ckpt", ckpt, "--dataset", dir / "ds", "--metric", "roc_auc"}).code == kExitUsage);
}

TEST_CASE("vocab build and bench") {
    testing::ScratchDir dir("duoclip_cli_misc");
    dir.write("corpus.txt", "a red square\nкрасный квадрат\na blue circle\n");
    const auto v = run_cli({"vocab", "build", "--corpus", dir / "corpus.txt", "--size", "270", "--out", dir / "v.json"});
    REQUIRE_MESSAGE(v.code == kExitOk, v.err);
    CHECK(Vocab::load(dir / "v.json").size() == 270);

    const auto bench = run_cli({"bench", "--preset", "tiny-patch8-32,tiny-patch16-32", "--warmup", "1", "--iters",
                                "2", "--format", "json"});
    REQUIRE_MESSAGE(bench.code == kExitOk, bench.err);
    const auto reports = nlohmann::json::parse(bench.out);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].at("iters_per_sec").get<double>() > 0);
}
