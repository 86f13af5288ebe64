// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels. Plain index loops, no threading, no blocking.
// Reduction order per output element matches the parallel kernels exactly.

#include "duoclip/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace duoclip::kernels::ref {

template <class T>
void matmul(std::span<const T> in, std::span<const T> w, std::span<const T> bias, std::span<T> out,
            std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = bias.empty() ? T(0) : bias[j];
            for (std::size_t p = 0; p < k; ++p) acc += in[i * k + p] * w[p * n + j];
            out[i * n + j] = acc;
        }
    }
}

template <class T>
void matmul_backward(std::span<const T> d_out, std::span<const T> in, std::span<const T> w,
                     std::span<T> d_in, std::span<T> d_w, std::span<T> d_bias, std::size_t m,
                     std::size_t k, std::size_t n) {
    if (!d_in.empty()) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                T acc = d_in[i * k + p];
                for (std::size_t j = 0; j < n; ++j) acc += d_out[i * n + j] * w[p * n + j];
                d_in[i * k + p] = acc;
            }
        }
    }
    if (!d_w.empty()) {
        for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t j = 0; j < n; ++j) {
                T acc = d_w[p * n + j];
                for (std::size_t i = 0; i < m; ++i) acc += in[i * k + p] * d_out[i * n + j];
                d_w[p * n + j] = acc;
            }
        }
    }
    if (!d_bias.empty()) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = d_bias[j];
            for (std::size_t i = 0; i < m; ++i) acc += d_out[i * n + j];
            d_bias[j] = acc;
        }
    }
}

template <class T>
void layernorm(std::span<const T> in, std::span<const T> gamma, std::span<const T> beta,
               std::span<T> out, std::span<T> mean, std::span<T> rstd, std::size_t rows,
               std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        T mu = 0;
        for (std::size_t j = 0; j < cols; ++j) mu += in[r * cols + j];
        mu /= static_cast<T>(cols);
        T var = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            const T d = in[r * cols + j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(cols);
        const T rs = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
        for (std::size_t j = 0; j < cols; ++j)
            out[r * cols + j] = (in[r * cols + j] - mu) * rs * gamma[j] + beta[j];
        mean[r] = mu;
        rstd[r] = rs;
    }
}

template <class T>
void layernorm_backward(std::span<const T> d_out, std::span<const T> in, std::span<const T> gamma,
                        std::span<const T> mean, std::span<const T> rstd, std::span<T> d_in,
                        std::span<T> d_gamma, std::span<T> d_beta, std::size_t rows,
                        std::size_t cols) {
    for (std::size_t r = 0; r < rows && !d_in.empty(); ++r) {
        T sum_g = 0;
        T sum_gx = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            const T gh = d_out[r * cols + j] * gamma[j];
            sum_g += gh;
            sum_gx += gh * (in[r * cols + j] - mean[r]) * rstd[r];
        }
        const T inv_n = T(1) / static_cast<T>(cols);
        for (std::size_t j = 0; j < cols; ++j) {
            const T xhat = (in[r * cols + j] - mean[r]) * rstd[r];
            const T gh = d_out[r * cols + j] * gamma[j];
            d_in[r * cols + j] += rstd[r] * (gh - inv_n * sum_g - xhat * inv_n * sum_gx);
        }
    }
    for (std::size_t j = 0; j < cols; ++j) {
        T dg = d_gamma.empty() ? T(0) : d_gamma[j];
        T dbeta = d_beta.empty() ? T(0) : d_beta[j];
        for (std::size_t r = 0; r < rows; ++r) {
            const T g = d_out[r * cols + j];
            dg += g * (in[r * cols + j] - mean[r]) * rstd[r];
            dbeta += g;
        }
        if (!d_gamma.empty()) d_gamma[j] = dg;
        if (!d_beta.empty()) d_beta[j] = dbeta;
    }
}

template <class T>
void gelu(std::span<const T> in, std::span<T> out) {
    for (std::size_t i = 0; i < in.size(); ++i) {
        const T x = in[i];
        out[i] = T(0.5) * x * (T(1) + std::erf(x * static_cast<T>(1.0 / std::numbers::sqrt2)));
    }
}

template <class T>
void gelu_backward(std::span<const T> d_out, std::span<const T> in, std::span<T> d_in) {
    for (std::size_t i = 0; i < in.size(); ++i) {
        const T x = in[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * static_cast<T>(1.0 / std::numbers::sqrt2)));
        const T pdf = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2) *
                      std::exp(T(-0.5) * x * x);
        d_in[i] += d_out[i] * (cdf + x * pdf);
    }
}

template <class T>
void attention(std::span<const T> qkv, std::span<T> out, std::span<T> probs,
               const AttentionShape& s) {
    const std::size_t hd = s.width / s.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    auto at = [&](std::size_t b, std::size_t t, std::size_t part, std::size_t h, std::size_t d) {
        return qkv[(b * s.seq + t) * 3 * s.width + part * s.width + h * hd + d];
    };
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t h = 0; h < s.heads; ++h) {
            for (std::size_t i = 0; i < s.seq; ++i) {
                T* prow = probs.data() + ((b * s.heads + h) * s.seq + i) * s.seq;
                const std::size_t visible = s.causal ? i + 1 : s.seq;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < visible; ++j) {
                    T dot = 0;
                    for (std::size_t d = 0; d < hd; ++d) dot += at(b, i, 0, h, d) * at(b, j, 1, h, d);
                    prow[j] = dot * scale;
                    mx = std::max(mx, prow[j]);
                }
                T sum = 0;
                for (std::size_t j = 0; j < visible; ++j) {
                    prow[j] = std::exp(prow[j] - mx);
                    sum += prow[j];
                }
                for (std::size_t j = 0; j < visible; ++j) prow[j] /= sum;
                for (std::size_t j = visible; j < s.seq; ++j) prow[j] = 0;
                for (std::size_t d = 0; d < hd; ++d) {
                    T acc = 0;
                    for (std::size_t j = 0; j < visible; ++j) acc += prow[j] * at(b, j, 2, h, d);
                    out[(b * s.seq + i) * s.width + h * hd + d] = acc;
                }
            }
        }
    }
}

template <class T>
void attention_backward(std::span<const T> d_out, std::span<const T> qkv, std::span<const T> probs,
                        std::span<T> d_qkv, const AttentionShape& s) {
    const std::size_t hd = s.width / s.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    auto idx = [&](std::size_t b, std::size_t t, std::size_t part, std::size_t h, std::size_t d) {
        return (b * s.seq + t) * 3 * s.width + part * s.width + h * hd + d;
    };
    std::vector<T> dp(s.seq);
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t h = 0; h < s.heads; ++h) {
            for (std::size_t i = 0; i < s.seq; ++i) {
                const T* prow = probs.data() + ((b * s.heads + h) * s.seq + i) * s.seq;
                const T* go = d_out.data() + (b * s.seq + i) * s.width + h * hd;
                const std::size_t visible = s.causal ? i + 1 : s.seq;
                T dot_pdp = 0;
                for (std::size_t j = 0; j < visible; ++j) {
                    T acc = 0;
                    for (std::size_t d = 0; d < hd; ++d) {
                        acc += go[d] * qkv[idx(b, j, 2, h, d)];
                        d_qkv[idx(b, j, 2, h, d)] += prow[j] * go[d];
                    }
                    dp[j] = acc;
                    dot_pdp += prow[j] * acc;
                }
                for (std::size_t j = 0; j < visible; ++j) {
                    const T ds = prow[j] * (dp[j] - dot_pdp) * scale;
                    for (std::size_t d = 0; d < hd; ++d) {
                        d_qkv[idx(b, i, 0, h, d)] += ds * qkv[idx(b, j, 1, h, d)];
                        d_qkv[idx(b, j, 1, h, d)] += ds * qkv[idx(b, i, 0, h, d)];
                    }
                }
            }
        }
    }
}

#define DUOCLIP_INSTANTIATE(T)                                                                   \
    template void matmul<T>(std::span<const T>, std::span<const T>, std::span<const T>,          \
                            std::span<T>, std::size_t, std::size_t, std::size_t);                \
    template void matmul_backward<T>(std::span<const T>, std::span<const T>, std::span<const T>, \
                                     std::span<T>, std::span<T>, std::span<T>, std::size_t,      \
                                     std::size_t, std::size_t);                                  \
    template void layernorm<T>(std::span<const T>, std::span<const T>, std::span<const T>,       \
                               std::span<T>, std::span<T>, std::span<T>, std::size_t,            \
                               std::size_t);                                                     \
    template void layernorm_backward<T>(std::span<const T>, std::span<const T>,                  \
                                        std::span<const T>, std::span<const T>,                  \
                                        std::span<const T>, std::span<T>, std::span<T>,          \
                                        std::span<T>, std::size_t, std::size_t);                 \
    template void gelu<T>(std::span<const T>, std::span<T>);                                     \
    template void gelu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);        \
    template void attention<T>(std::span<const T>, std::span<T>, std::span<T>,                   \
                               const AttentionShape&);                                           \
    template void attention_backward<T>(std::span<const T>, std::span<const T>,                  \
                                        std::span<const T>, std::span<T>, const AttentionShape&);

DUOCLIP_INSTANTIATE(float)
DUOCLIP_INSTANTIATE(double)

}  // namespace duoclip::kernels::ref
