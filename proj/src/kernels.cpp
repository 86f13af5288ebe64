// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace duoclip::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 14;

inline bool worth_it(std::size_t work) { return work >= kParallelWork; }

inline long as_long(std::size_t v) { return static_cast<long>(v); }

}  // namespace

template <class T>
void matmul(std::span<const T> in, std::span<const T> w, std::span<const T> bias, std::span<T> out,
            std::size_t m, std::size_t k, std::size_t n) {
    const T* a = in.data();
    const T* b = w.data();
    T* c = out.data();
    const bool has_bias = !bias.empty();
#pragma omp parallel for schedule(static) if (worth_it(m * k * n))
    for (long ii = 0; ii < as_long(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        T* row = c + i * n;
        if (has_bias) {
            std::copy_n(bias.data(), n, row);
        } else {
            std::fill_n(row, n, T(0));
        }
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
}

template <class T>
void matmul_backward(std::span<const T> d_out, std::span<const T> in, std::span<const T> w,
                     std::span<T> d_in, std::span<T> d_w, std::span<T> d_bias, std::size_t m,
                     std::size_t k, std::size_t n) {
    const T* g = d_out.data();
    const T* a = in.data();
    const T* b = w.data();
    if (!d_in.empty()) {
        T* da = d_in.data();
#pragma omp parallel for schedule(static) if (worth_it(m * k * n))
        for (long ii = 0; ii < as_long(m); ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            const T* grow = g + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const T* brow = b + p * n;
                T acc = da[i * k + p];
                for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                da[i * k + p] = acc;
            }
        }
    }
    if (!d_w.empty()) {
        T* db = d_w.data();
#pragma omp parallel for schedule(static) if (worth_it(m * k * n))
        for (long pp = 0; pp < as_long(k); ++pp) {
            const auto p = static_cast<std::size_t>(pp);
            T* dbrow = db + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const T av = a[i * k + p];
                const T* grow = g + i * n;
                for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
            }
        }
    }
    if (!d_bias.empty()) {
        T* dbias = d_bias.data();
        for (std::size_t i = 0; i < m; ++i) {
            const T* grow = g + i * n;
            for (std::size_t j = 0; j < n; ++j) dbias[j] += grow[j];
        }
    }
}

template <class T>
void layernorm(std::span<const T> in, std::span<const T> gamma, std::span<const T> beta,
               std::span<T> out, std::span<T> mean, std::span<T> rstd, std::size_t rows,
               std::size_t cols) {
    const T eps = static_cast<T>(kLayerNormEps);
#pragma omp parallel for schedule(static) if (worth_it(rows * cols * 8))
    for (long rr = 0; rr < as_long(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        const T* x = in.data() + r * cols;
        T* y = out.data() + r * cols;
        T mu = 0;
        for (std::size_t j = 0; j < cols; ++j) mu += x[j];
        mu /= static_cast<T>(cols);
        T var = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            const T d = x[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(cols);
        const T rs = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mu) * rs * gamma[j] + beta[j];
        mean[r] = mu;
        rstd[r] = rs;
    }
}

template <class T>
void layernorm_backward(std::span<const T> d_out, std::span<const T> in, std::span<const T> gamma,
                        std::span<const T> mean, std::span<const T> rstd, std::span<T> d_in,
                        std::span<T> d_gamma, std::span<T> d_beta, std::size_t rows,
                        std::size_t cols) {
    if (!d_in.empty()) {
#pragma omp parallel for schedule(static) if (worth_it(rows * cols * 8))
        for (long rr = 0; rr < as_long(rows); ++rr) {
            const auto r = static_cast<std::size_t>(rr);
            const T* x = in.data() + r * cols;
            const T* g = d_out.data() + r * cols;
            T* dx = d_in.data() + r * cols;
            const T mu = mean[r];
            const T rs = rstd[r];
            T sum_g = 0;
            T sum_gx = 0;
            for (std::size_t j = 0; j < cols; ++j) {
                const T gh = g[j] * gamma[j];
                sum_g += gh;
                sum_gx += gh * (x[j] - mu) * rs;
            }
            const T inv_n = T(1) / static_cast<T>(cols);
            for (std::size_t j = 0; j < cols; ++j) {
                const T xhat = (x[j] - mu) * rs;
                const T gh = g[j] * gamma[j];
                dx[j] += rs * (gh - inv_n * sum_g - xhat * inv_n * sum_gx);
            }
        }
    }
    if (!d_gamma.empty() || !d_beta.empty()) {
#pragma omp parallel for schedule(static) if (worth_it(rows * cols * 8))
        for (long jj = 0; jj < as_long(cols); ++jj) {
            const auto j = static_cast<std::size_t>(jj);
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
}

template <class T>
void gelu(std::span<const T> in, std::span<T> out) {
    const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
    const std::size_t n = in.size();
#pragma omp parallel for schedule(static) if (worth_it(n * 16))
    for (long ii = 0; ii < as_long(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const T x = in[i];
        out[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
    }
}

template <class T>
void gelu_backward(std::span<const T> d_out, std::span<const T> in, std::span<T> d_in) {
    const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
    const T inv_sqrt_2pi = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    const std::size_t n = in.size();
#pragma omp parallel for schedule(static) if (worth_it(n * 16))
    for (long ii = 0; ii < as_long(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const T x = in[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
        d_in[i] += d_out[i] * (cdf + x * pdf);
    }
}

template <class T>
void attention(std::span<const T> qkv, std::span<T> out, std::span<T> probs,
               const AttentionShape& s) {
    const std::size_t hd = s.width / s.heads;
    const std::size_t row = 3 * s.width;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    const std::size_t units = s.batch * s.heads;
#pragma omp parallel for schedule(static) if (worth_it(units * s.seq * s.seq * hd))
    for (long uu = 0; uu < as_long(units); ++uu) {
        const auto u = static_cast<std::size_t>(uu);
        const std::size_t b = u / s.heads;
        const std::size_t h = u % s.heads;
        const T* base = qkv.data() + b * s.seq * row;
        T* p = probs.data() + u * s.seq * s.seq;
        for (std::size_t i = 0; i < s.seq; ++i) {
            const T* q = base + i * row + h * hd;
            T* prow = p + i * s.seq;
            const std::size_t visible = s.causal ? i + 1 : s.seq;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < visible; ++j) {
                const T* kv = base + j * row + s.width + h * hd;
                T dot = 0;
                for (std::size_t d = 0; d < hd; ++d) dot += q[d] * kv[d];
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

            T* o = out.data() + (b * s.seq + i) * s.width + h * hd;
            std::fill_n(o, hd, T(0));
            for (std::size_t j = 0; j < visible; ++j) {
                const T* v = base + j * row + 2 * s.width + h * hd;
                const T pj = prow[j];
                for (std::size_t d = 0; d < hd; ++d) o[d] += pj * v[d];
            }
        }
    }
}

template <class T>
void attention_backward(std::span<const T> d_out, std::span<const T> qkv, std::span<const T> probs,
                        std::span<T> d_qkv, const AttentionShape& s) {
    const std::size_t hd = s.width / s.heads;
    const std::size_t row = 3 * s.width;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    const std::size_t units = s.batch * s.heads;
#pragma omp parallel for schedule(static) if (worth_it(units * s.seq * s.seq * hd))
    for (long uu = 0; uu < as_long(units); ++uu) {
        const auto u = static_cast<std::size_t>(uu);
        const std::size_t b = u / s.heads;
        const std::size_t h = u % s.heads;
        const T* base = qkv.data() + b * s.seq * row;
        T* dbase = d_qkv.data() + b * s.seq * row;
        const T* p = probs.data() + u * s.seq * s.seq;
        std::vector<T> dp(s.seq);
        for (std::size_t i = 0; i < s.seq; ++i) {
            const T* go = d_out.data() + (b * s.seq + i) * s.width + h * hd;
            const T* prow = p + i * s.seq;
            const std::size_t visible = s.causal ? i + 1 : s.seq;
            T dot_pdp = 0;
            for (std::size_t j = 0; j < visible; ++j) {
                const T* v = base + j * row + 2 * s.width + h * hd;
                T* dv = dbase + j * row + 2 * s.width + h * hd;
                T acc = 0;
                for (std::size_t d = 0; d < hd; ++d) {
                    acc += go[d] * v[d];
                    dv[d] += prow[j] * go[d];
                }
                dp[j] = acc;
                dot_pdp += prow[j] * acc;
            }
            const T* q = base + i * row + h * hd;
            T* dq = dbase + i * row + h * hd;
            for (std::size_t j = 0; j < visible; ++j) {
                const T ds = prow[j] * (dp[j] - dot_pdp) * scale;
                const T* kv = base + j * row + s.width + h * hd;
                T* dk = dbase + j * row + s.width + h * hd;
                for (std::size_t d = 0; d < hd; ++d) {
                    dq[d] += ds * kv[d];
                    dk[d] += ds * q[d];
                }
            }
        }
    }
}

int configured_threads() {
    const char* env = std::getenv("DUOCLIP_THREADS");
    if (env == nullptr || *env == '\0') return 0;
    try {
        const int n = std::stoi(env);
        return n > 0 ? n : 0;
    } catch (...) {
        return 0;
    }
}

void apply_thread_env() {
    if (const int n = configured_threads(); n > 0) omp_set_num_threads(n);
}

int active_threads() { return omp_get_max_threads(); }

void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

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

}  // namespace duoclip::kernels
