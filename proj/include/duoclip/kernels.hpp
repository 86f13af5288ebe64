// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dense kernels used by both encoder towers.
//
// Two implementations share one contract:
//   duoclip::kernels       OpenMP data-parallel loops (used by the model)
//   duoclip::kernels::ref  straight serial loops, kept as the test reference
//
// Every output element is reduced in the same fixed order in both, so the
// parallel kernels are bitwise identical to the reference for any thread
// count. All matrices are dense row-major. Backward kernels accumulate
// (+=) into their gradient outputs; an empty gradient span skips that output.

#pragma once

#include <cstddef>
#include <span>

namespace duoclip::kernels {

/// Shape of a multi-head attention call over a packed [B*S, 3W] qkv buffer.
struct AttentionShape {
    std::size_t batch = 0;
    std::size_t seq = 0;
    std::size_t width = 0;
    std::size_t heads = 0;
    bool causal = false;
};

constexpr double kLayerNormEps = 1e-5;

#define DUOCLIP_KERNEL_DECLS                                                                      \
    template <class T>                                                                            \
    void matmul(std::span<const T> in, std::span<const T> w, std::span<const T> bias,             \
                std::span<T> out, std::size_t m, std::size_t k, std::size_t n);                   \
    template <class T>                                                                            \
    void matmul_backward(std::span<const T> d_out, std::span<const T> in, std::span<const T> w,   \
                         std::span<T> d_in, std::span<T> d_w, std::span<T> d_bias,                \
                         std::size_t m, std::size_t k, std::size_t n);                            \
    template <class T>                                                                            \
    void layernorm(std::span<const T> in, std::span<const T> gamma, std::span<const T> beta,      \
                   std::span<T> out, std::span<T> mean, std::span<T> rstd, std::size_t rows,      \
                   std::size_t cols);                                                             \
    template <class T>                                                                            \
    void layernorm_backward(std::span<const T> d_out, std::span<const T> in,                      \
                            std::span<const T> gamma, std::span<const T> mean,                    \
                            std::span<const T> rstd, std::span<T> d_in, std::span<T> d_gamma,     \
                            std::span<T> d_beta, std::size_t rows, std::size_t cols);             \
    template <class T>                                                                            \
    void gelu(std::span<const T> in, std::span<T> out);                                           \
    template <class T>                                                                            \
    void gelu_backward(std::span<const T> d_out, std::span<const T> in, std::span<T> d_in);       \
    template <class T>                                                                            \
    void attention(std::span<const T> qkv, std::span<T> out, std::span<T> probs,                  \
                   const AttentionShape& shape);                                                  \
    template <class T>                                                                            \
    void attention_backward(std::span<const T> d_out, std::span<const T> qkv,                     \
                            std::span<const T> probs, std::span<T> d_qkv,                         \
                            const AttentionShape& shape);

// out[m,n] = in[m,k] * w[k,n] + bias[n]   (bias may be empty)
// layernorm: per-row normalisation, caches mean/rstd for the backward pass
// gelu: exact erf form
// attention: probs is [B, H, S, S]; out is [B*S, W]
DUOCLIP_KERNEL_DECLS

namespace ref {
DUOCLIP_KERNEL_DECLS
}  // namespace ref

#undef DUOCLIP_KERNEL_DECLS

/// Worker cap from DUOCLIP_THREADS (0 or unset = OpenMP default).
int configured_threads();

/// Applies configured_threads() to the OpenMP runtime. Idempotent.
void apply_thread_env();

/// Number of threads the parallel kernels will use right now.
int active_threads();

/// Sets the OpenMP thread count for subsequent kernel calls.
void set_threads(int n);

}  // namespace duoclip::kernels
