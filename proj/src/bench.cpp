// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "duoclip/error.hpp"
#include "duoclip/format.hpp"
#include "duoclip/kernels.hpp"

namespace duoclip {

using nlohmann::json;

void to_json(json& j, const BenchReport& r) {
    j = json{{"preset", r.preset},
             {"batch_size", r.batch_size},
             {"warmup_iters", r.warmup_iters},
             {"measured_iters", r.measured_iters},
             {"iters_per_sec", r.iters_per_sec},
             {"wall_seconds", r.wall_seconds},
             {"hardware", r.hardware}};
}

void from_json(const json& j, BenchReport& r) {
    r.preset = j.at("preset").get<std::string>();
    r.batch_size = j.at("batch_size").get<std::size_t>();
    r.warmup_iters = j.at("warmup_iters").get<std::size_t>();
    r.measured_iters = j.at("measured_iters").get<std::size_t>();
    r.iters_per_sec = j.at("iters_per_sec").get<double>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.hardware = j.at("hardware").get<std::string>();
}

std::string bench_reports_to_json(const std::vector<BenchReport>& reports) {
    return json(reports).dump(2) + "\n";
}

std::vector<BenchReport> bench_reports_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.is_object()) return {j.get<BenchReport>()};
        return j.get<std::vector<BenchReport>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("bench report: ") + e.what());
    }
}

std::string bench_reports_to_csv(const std::vector<BenchReport>& reports) {
    std::string out = "preset,batch,iters_per_sec,wall_seconds,hardware\n";
    for (const auto& r : reports)
        out += csv_field(r.preset) + "," + std::to_string(r.batch_size) + "," +
               format_number(r.iters_per_sec) + "," + format_number(r.wall_seconds) + "," +
               csv_field(r.hardware) + "\n";
    return out;
}

double monotonic_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

TimedRun time_iterations(const std::function<void()>& body, std::size_t warmup,
                         std::size_t measured, const std::function<double()>& clock) {
    if (measured == 0) throw UsageError("bench: measured iterations must be >= 1");
    for (std::size_t i = 0; i < warmup; ++i) body();
    const double start = clock();
    for (std::size_t i = 0; i < measured; ++i) body();
    const double stop = clock();
    return {measured, stop - start};
}

std::string hardware_descriptor(int threads) {
    std::string cpu = "unknown cpu";
    std::ifstream info("/proc/cpuinfo");
    std::string line;
    while (std::getline(info, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                cpu = line.substr(colon + 1);
                cpu.erase(0, cpu.find_first_not_of(' '));
            }
            break;
        }
    }
    return cpu + "; threads=" + std::to_string(threads) + "; timed=encode_image forward only";
}

template <class T>
BenchReport run_bench(const ClipModel<T>& model, const ImageBatch& source, const BenchOptions& opts) {
    const ImageSpec& want = model.config().image.spec;
    if (source.spec.resolution != want.resolution || source.spec.patch_size != want.patch_size)
        throw UsageError("bench: images are " + std::to_string(source.spec.resolution) +
                         " px but the model expects " + std::to_string(want.resolution) + " px");
    if (source.count == 0) throw UsageError("bench: no source images");
    if (opts.batch_size == 0) throw UsageError("bench: batch size must be >= 1");
    if (opts.threads < 1) throw UsageError("bench: threads must be >= 1");
    std::vector<std::size_t> rows(opts.batch_size);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i % source.count;
    const ImageBatch batch = source.select(rows);

    int threads = opts.threads;
    if (const int cap = kernels::configured_threads(); cap > 0) threads = std::min(threads, cap);
    const int previous = kernels::active_threads();
    kernels::set_threads(threads);
    TimedRun run;
    try {
        run = time_iterations([&] { (void)model.encode_image(batch); }, opts.warmup_iters,
                              opts.measured_iters);
    } catch (...) {
        kernels::set_threads(previous);
        throw;
    }
    kernels::set_threads(previous);

    BenchReport r;
    r.preset = model.config().preset_name;
    r.batch_size = opts.batch_size;
    r.warmup_iters = opts.warmup_iters;
    r.measured_iters = run.measured_iters;
    // A clock tick coarser than the run would give zero; clamp to keep the rate finite.
    r.wall_seconds = std::max(run.wall_seconds, 1e-9);
    r.iters_per_sec = static_cast<double>(r.measured_iters) / r.wall_seconds;
    r.hardware = hardware_descriptor(threads);
    return r;
}

double image_tower_flops(const ModelConfig& config) {
    const PatchGrid grid = patch_grid(config.image.spec);
    const double s = static_cast<double>(grid.sequence_length);
    const double w = static_cast<double>(config.image.width);
    const double layers = static_cast<double>(config.image.layers);
    const double patch = static_cast<double>(grid.num_patches) * static_cast<double>(grid.patch_dim) * w;
    // qkv 3W^2 + out W^2 + mlp 8W^2 per token, plus QK^T and PV.
    const double block = s * 12.0 * w * w + 2.0 * s * s * w;
    const double head = w * static_cast<double>(config.joint_dim);
    return patch + layers * block + head;
}

PresetComparison compare_presets(const std::vector<BenchReport>& reports) {
    if (reports.empty()) throw UsageError("compare_presets: no reports");
    PresetComparison out;
    for (const auto& r : reports) {
        if (r.batch_size != reports.front().batch_size)
            throw UsageError("compare_presets: reports use different batch sizes (" +
                             std::to_string(reports.front().batch_size) + " vs " +
                             std::to_string(r.batch_size) + ")");
        if (!(r.iters_per_sec > 0)) throw DataError("compare_presets: non-positive throughput for " + r.preset);
    }
    for (const auto& r : reports)
        if (r.hardware != reports.front().hardware) {
            out.warnings.push_back("reports come from different hardware: '" + reports.front().hardware +
                                   "' and '" + r.hardware + "'");
            break;
        }
    for (const auto& r : reports) out.rows.push_back({r, 1.0});
    std::stable_sort(out.rows.begin(), out.rows.end(), [](const RankedRow& a, const RankedRow& b) {
        return a.report.iters_per_sec > b.report.iters_per_sec;
    });
    const double fastest = out.rows.front().report.iters_per_sec;
    for (auto& row : out.rows) row.slowdown = fastest / row.report.iters_per_sec;
    return out;
}

std::string PresetComparison::to_table() const {
    std::vector<std::vector<std::string>> cells;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i].report;
        cells.push_back({std::to_string(i + 1), r.preset, std::to_string(r.batch_size),
                         format_fixed(r.iters_per_sec, 2), format_fixed(r.wall_seconds, 4),
                         format_fixed(rows[i].slowdown, 2) + "x"});
    }
    std::string out = render_table({"rank", "preset", "batch", "iters/sec", "wall_s", "slowdown"}, cells);
    if (!rows.empty()) out += "hardware: " + rows.front().report.hardware + "\n";
    for (const auto& w : warnings) out += "warning: " + w + "\n";
    return out;
}

std::string PresetComparison::to_csv() const {
    std::string out = "rank,preset,batch,iters_per_sec,wall_seconds,hardware,slowdown\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i].report;
        out += std::to_string(i + 1) + "," + csv_field(r.preset) + "," + std::to_string(r.batch_size) +
               "," + format_number(r.iters_per_sec) + "," + format_number(r.wall_seconds) + "," +
               csv_field(r.hardware) + "," + format_number(rows[i].slowdown) + "\n";
    }
    return out;
}

const std::vector<ReferenceThroughput>& reference_throughputs() {
    static const std::vector<ReferenceThroughput> table{
        {"vit-base-patch32-224", 308.84}, {"vit-base-patch16-224", 155.35},
        {"vit-large-patch14-224", 49.95}, {"vit-base-patch32-384", 147.26},
        {"vit-large-patch14-336", 22.11}, {"vit-base-patch16-384", 61.79},
    };
    return table;
}

template BenchReport run_bench<float>(const ClipModel<float>&, const ImageBatch&, const BenchOptions&);
template BenchReport run_bench<double>(const ClipModel<double>&, const ImageBatch&, const BenchOptions&);

}  // namespace duoclip
