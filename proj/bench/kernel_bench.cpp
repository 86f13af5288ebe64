// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels vs the OpenMP kernels: wall time and bitwise agreement.
// Worker count follows DUOCLIP_THREADS.

#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "duoclip/bench.hpp"
#include "duoclip/kernels.hpp"

namespace k = duoclip::kernels;

namespace {

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> v(n);
    for (float& x : v) x = dist(rng);
    return v;
}

double seconds_per_call(const std::function<void()>& body, std::size_t iters) {
    return duoclip::time_iterations(body, 2, iters).wall_seconds / static_cast<double>(iters);
}

void row(const std::string& name, double ref, double par, bool same) {
    std::printf("%-28s %12.3f %12.3f %8.2fx  %s\n", name.c_str(), ref * 1e3, par * 1e3, ref / par,
                same ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
    k::apply_thread_env();
    std::printf("threads: %d\n", k::active_threads());
    std::printf("%-28s %12s %12s %9s  %s\n", "kernel", "ref ms", "omp ms", "speedup", "check");

    for (std::size_t m : {256u, 1024u}) {
        const std::size_t kk = 512, n = 512;
        const auto in = random_vector(m * kk, 1), w = random_vector(kk * n, 2), b = random_vector(n, 3);
        std::vector<float> a(m * n), c(m * n);
        const double tr = seconds_per_call([&] { k::ref::matmul<float>(in, w, b, a, m, kk, n); }, 5);
        const double tp = seconds_per_call([&] { k::matmul<float>(in, w, b, c, m, kk, n); }, 5);
        row("matmul " + std::to_string(m) + "x512x512", tr, tp, a == c);

        const auto d_out = random_vector(m * n, 4);
        std::vector<float> di1(m * kk), dw1(kk * n), db1(n), di2(m * kk), dw2(kk * n), db2(n);
        const double br = seconds_per_call([&] {
            k::ref::matmul_backward<float>(d_out, in, w, di1, dw1, db1, m, kk, n);
        }, 3);
        const double bp = seconds_per_call([&] {
            k::matmul_backward<float>(d_out, in, w, di2, dw2, db2, m, kk, n);
        }, 3);
        row("matmul_backward " + std::to_string(m), br, bp, di1 == di2 && dw1 == dw2 && db1 == db2);
    }
    {
        const std::size_t rows = 4096, cols = 768;
        const auto in = random_vector(rows * cols, 5), g = random_vector(cols, 6), be = random_vector(cols, 7);
        std::vector<float> o1(rows * cols), o2(rows * cols), m1(rows), m2(rows), r1(rows), r2(rows);
        const double tr = seconds_per_call([&] { k::ref::layernorm<float>(in, g, be, o1, m1, r1, rows, cols); }, 10);
        const double tp = seconds_per_call([&] { k::layernorm<float>(in, g, be, o2, m2, r2, rows, cols); }, 10);
        row("layernorm 4096x768", tr, tp, o1 == o2 && m1 == m2 && r1 == r2);
    }
    for (bool causal : {false, true}) {
        const k::AttentionShape shape{8, 197, 768, 12, causal};
        const std::size_t tokens = shape.batch * shape.seq;
        const auto qkv = random_vector(tokens * 3 * shape.width, 8);
        const std::size_t probs = shape.batch * shape.heads * shape.seq * shape.seq;
        std::vector<float> o1(tokens * shape.width), o2(o1.size()), p1(probs), p2(probs);
        const double tr = seconds_per_call([&] { k::ref::attention<float>(qkv, o1, p1, shape); }, 3);
        const double tp = seconds_per_call([&] { k::attention<float>(qkv, o2, p2, shape); }, 3);
        row(std::string("attention 8x197x768") + (causal ? " causal" : ""), tr, tp, o1 == o2 && p1 == p2);
    }
    return 0;
}
