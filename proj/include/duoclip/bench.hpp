// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Image-tower inference throughput.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "duoclip/config.hpp"
#include "duoclip/model.hpp"
#include "json.hpp"

namespace duoclip {

struct BenchReport {
    std::string preset;
    std::size_t batch_size = 0;
    std::size_t warmup_iters = 0;
    std::size_t measured_iters = 0;
    double iters_per_sec = 0;
    double wall_seconds = 0;
    std::string hardware;

    bool operator==(const BenchReport&) const = default;
};

void to_json(nlohmann::json& j, const BenchReport& r);
void from_json(const nlohmann::json& j, BenchReport& r);

std::string bench_reports_to_json(const std::vector<BenchReport>& reports);
std::vector<BenchReport> bench_reports_from_json(const std::string& text);
/// Header "preset,batch,iters_per_sec,wall_seconds,hardware".
std::string bench_reports_to_csv(const std::vector<BenchReport>& reports);

struct BenchOptions {
    std::size_t batch_size = 1;
    std::size_t warmup_iters = 10;
    std::size_t measured_iters = 100;
    int threads = 1;  // worker threads inside the timed region
};

struct TimedRun {
    std::size_t measured_iters = 0;
    double wall_seconds = 0;
};

/// Seconds from a monotonic clock.
double monotonic_seconds();

/// Runs body warmup times untimed, then measured times between two clock reads.
TimedRun time_iterations(const std::function<void()>& body, std::size_t warmup,
                         std::size_t measured,
                         const std::function<double()>& clock = monotonic_seconds);

/// CPU model, thread count and the timed boundary.
std::string hardware_descriptor(int threads);

/// Times encode_image on batch_size images drawn cyclically from source.
template <class T>
BenchReport run_bench(const ClipModel<T>& model, const ImageBatch& source, const BenchOptions& opts);

/// Multiply-accumulate count of one image through the tower (patch embed, blocks, head).
double image_tower_flops(const ModelConfig& config);

struct RankedRow {
    BenchReport report;
    double slowdown = 1.0;  // fastest iters_per_sec / this iters_per_sec
};

struct PresetComparison {
    std::vector<RankedRow> rows;  // descending iters_per_sec, stable
    std::vector<std::string> warnings;

    std::string to_table() const;
    std::string to_csv() const;
};

/// Batch sizes must agree; differing hardware only adds a warning.
PresetComparison compare_presets(const std::vector<BenchReport>& reports);

/// Published throughputs of the six presets (iters/sec on one V100), kept for ordering checks.
struct ReferenceThroughput {
    std::string preset;
    double iters_per_sec;
};
const std::vector<ReferenceThroughput>& reference_throughputs();

}  // namespace duoclip
