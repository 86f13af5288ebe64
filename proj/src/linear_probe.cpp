// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include "duoclip/linear_probe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>

#include "duoclip/error.hpp"

namespace duoclip {

void ProbeConfig::validate() const {
    if (shots.empty()) throw UsageError("probe: shot list is empty");
    for (std::size_t k : shots)
        if (k == 0) throw UsageError("probe: shots must be >= 1");
    if (!(l2_reg >= 0) || !std::isfinite(l2_reg)) throw UsageError("probe: l2_reg must be >= 0");
    if (seeds == 0) throw UsageError("probe: need at least one seed");
    if (max_iter == 0) throw UsageError("probe: max_iter must be >= 1");
}

FeatureSet FeatureSet::select(std::span<const std::size_t> rows) const {
    FeatureSet out;
    out.features = Matrix<double>(rows.size(), features.cols);
    out.num_classes = num_classes;
    out.split = split;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= size()) throw UsageError("FeatureSet::select: row out of range");
        const auto src = features.row(rows[r]);
        std::copy(src.begin(), src.end(), out.features.row(r).begin());
        out.labels.push_back(labels[rows[r]]);
    }
    return out;
}

template <class T>
FeatureSet extract_features(const ClipModel<T>& model, const ImageBatch& images,
                            std::vector<std::size_t> labels, std::size_t num_classes,
                            FeatureSplit split) {
    if (images.count == 0) throw UsageError("extract_features: no images");
    if (labels.size() != images.count) throw UsageError("extract_features: label count mismatch");
    for (std::size_t l : labels)
        if (l >= num_classes) throw DataError("extract_features: label " + std::to_string(l) + " out of range");
    constexpr std::size_t kChunk = 64;
    FeatureSet out;
    out.features = Matrix<double>(images.count, model.config().joint_dim);
    out.labels = std::move(labels);
    out.num_classes = num_classes;
    out.split = split;
    for (std::size_t start = 0; start < images.count; start += kChunk) {
        std::vector<std::size_t> rows;
        for (std::size_t i = start; i < std::min(images.count, start + kChunk); ++i) rows.push_back(i);
        const bool whole = rows.size() == images.count;
        const auto emb = model.encode_image(whole ? images : images.select(rows));
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t d = 0; d < emb.dim(); ++d)
                out.features(rows[r], d) = static_cast<double>(emb.vectors(r, d));
    }
    return out;
}

FeatureSet sample_shots(const FeatureSet& pool, std::size_t k, std::uint64_t seed,
                        const std::vector<std::string>& class_names) {
    if (k == 0) throw UsageError("sample_shots: k must be >= 1");
    std::vector<std::vector<std::size_t>> by_class(pool.num_classes);
    for (std::size_t i = 0; i < pool.size(); ++i) by_class.at(pool.labels[i]).push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> rows;
    for (std::size_t c = 0; c < pool.num_classes; ++c) {
        auto& members = by_class[c];
        if (members.size() < k) {
            const std::string name = c < class_names.size() ? "'" + class_names[c] + "'" : std::to_string(c);
            throw DataError("sample_shots: class " + name + " has " + std::to_string(members.size()) +
                            " examples, need " + std::to_string(k));
        }
        // Partial Fisher-Yates with explicit draws, independent of the standard library.
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng() % (members.size() - i));
            std::swap(members[i], members[j]);
            rows.push_back(members[i]);
        }
    }
    return pool.select(rows);
}

Matrix<double> LinearHead::logits(const Matrix<double>& features) const {
    if (features.cols != weight.rows) throw UsageError("LinearHead: feature dim mismatch");
    Matrix<double> out(features.rows, weight.cols);
    for (std::size_t i = 0; i < features.rows; ++i)
        for (std::size_t c = 0; c < weight.cols; ++c) {
            double z = bias[c];
            if (std::isinf(z)) {
                out(i, c) = z;
                continue;
            }
            for (std::size_t d = 0; d < weight.rows; ++d) z += features(i, d) * weight(d, c);
            out(i, c) = z;
        }
    return out;
}

std::vector<std::size_t> LinearHead::predict(const Matrix<double>& features) const {
    const auto z = logits(features);
    std::vector<std::size_t> out(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < z.cols; ++c)
            if (z(i, c) > z(i, best)) best = c;
        out[i] = best;
    }
    return out;
}

namespace {

/// Problem restricted to the classes present in the training labels.
struct Problem {
    const Matrix<double>& x;
    std::vector<std::size_t> target;  // compact class index per row
    std::size_t classes;
    double l2;

    std::size_t dim() const { return x.cols; }
    std::size_t params() const { return (x.cols + 1) * classes; }

    // theta = [W (dim x classes, row-major), b (classes)]
    double eval(const std::vector<double>& theta, std::vector<double>* grad) const {
        const std::size_t n = x.rows, d = dim(), c = classes;
        const double* w = theta.data();
        const double* b = theta.data() + d * c;
        if (grad) grad->assign(theta.size(), 0.0);
        std::vector<double> z(c);
        double ce = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < c; ++k) {
                double v = b[k];
                for (std::size_t j = 0; j < d; ++j) v += x(i, j) * w[j * c + k];
                z[k] = v;
            }
            const double mx = *std::max_element(z.begin(), z.end());
            double sum = 0;
            for (double v : z) sum += std::exp(v - mx);
            const double lse = mx + std::log(sum);
            ce += lse - z[target[i]];
            if (!grad) continue;
            for (std::size_t k = 0; k < c; ++k) {
                const double dz = (std::exp(z[k] - lse) - (k == target[i] ? 1.0 : 0.0)) / static_cast<double>(n);
                for (std::size_t j = 0; j < d; ++j) (*grad)[j * c + k] += x(i, j) * dz;
                (*grad)[d * c + k] += dz;
            }
        }
        double reg = 0;
        for (std::size_t k = 0; k < d * c; ++k) {
            reg += w[k] * w[k];
            if (grad) (*grad)[k] += l2 * w[k];
        }
        return ce / static_cast<double>(n) + 0.5 * l2 * reg;
    }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double inf_norm(const std::vector<double>& a) {
    double m = 0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

double probe_objective(const LinearHead& head, const FeatureSet& data, double l2_reg) {
    const auto z = head.logits(data.features);
    double ce = 0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < z.cols; ++c) mx = std::max(mx, z(i, c));
        double sum = 0;
        for (std::size_t c = 0; c < z.cols; ++c)
            if (!std::isinf(z(i, c))) sum += std::exp(z(i, c) - mx);
        ce += mx + std::log(sum) - z(i, data.labels[i]);
    }
    double reg = 0;
    for (double v : head.weight.data) reg += v * v;
    return ce / static_cast<double>(z.rows) + 0.5 * l2_reg * reg;
}

LinearHead train_linear(const FeatureSet& train, const ProbeConfig& cfg) {
    cfg.validate();
    if (train.size() == 0) throw UsageError("train_linear: empty training set");
    for (double v : train.features.data)
        if (!std::isfinite(v)) throw NumericError("train_linear: non-finite feature value");
    std::vector<std::size_t> compact(train.num_classes, train.num_classes);
    std::vector<std::size_t> active;
    for (std::size_t l : train.labels) {
        if (l >= train.num_classes) throw UsageError("train_linear: label out of range");
        if (compact[l] == train.num_classes) compact[l] = 0;
    }
    for (std::size_t c = 0; c < train.num_classes; ++c)
        if (compact[c] == 0) {
            compact[c] = active.size();
            active.push_back(c);
        }
    if (active.size() < 2) throw UsageError("train_linear: need at least two classes in the training set");

    Problem prob{train.features, {}, active.size(), cfg.l2_reg};
    for (std::size_t l : train.labels) prob.target.push_back(compact[l]);

    constexpr std::size_t kMemory = 10;
    constexpr double kArmijo = 1e-4;
    std::vector<double> theta(prob.params(), 0.0), grad, next, next_grad, dir(prob.params());
    double f = prob.eval(theta, &grad);
    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;

    LinearHead head;
    head.objective_history.push_back(f);
    bool first = true;
    while (head.iterations < cfg.max_iter) {
        if (inf_norm(grad) < cfg.tolerance) {
            head.converged = true;
            break;
        }
        // Two-loop recursion.
        dir = grad;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t m = s_hist.size(); m-- > 0;) {
            alpha[m] = rho_hist[m] * dot(s_hist[m], dir);
            for (std::size_t i = 0; i < dir.size(); ++i) dir[i] -= alpha[m] * y_hist[m][i];
        }
        if (!s_hist.empty()) {
            const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
            for (double& v : dir) v *= gamma;
        }
        for (std::size_t m = 0; m < s_hist.size(); ++m) {
            const double beta = rho_hist[m] * dot(y_hist[m], dir);
            for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += s_hist[m][i] * (alpha[m] - beta);
        }
        for (double& v : dir) v = -v;
        double slope = dot(grad, dir);
        if (!(slope < 0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = -grad[i];
            slope = dot(grad, dir);
        }
        double step = first ? std::min(1.0, 1.0 / std::sqrt(dot(grad, grad))) : 1.0;
        first = false;
        double f_next = f;
        bool accepted = false;
        for (int tries = 0; tries < 60; ++tries, step *= 0.5) {
            next = theta;
            for (std::size_t i = 0; i < next.size(); ++i) next[i] += step * dir[i];
            f_next = prob.eval(next, &next_grad);
            if (std::isfinite(f_next) && f_next <= f + kArmijo * step * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted || !(f_next <= f)) break;
        std::vector<double> s(theta.size()), y(theta.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = next[i] - theta[i];
            y[i] = next_grad[i] - grad[i];
        }
        const double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > kMemory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        theta.swap(next);
        grad.swap(next_grad);
        f = f_next;
        ++head.iterations;
        head.objective_history.push_back(f);
    }
    if (!head.converged && inf_norm(grad) < cfg.tolerance) head.converged = true;

    const std::size_t d = prob.dim(), ca = prob.classes;
    head.weight = Matrix<double>(d, train.num_classes);
    head.bias.assign(train.num_classes, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < ca; ++k) {
        for (std::size_t j = 0; j < d; ++j) head.weight(j, active[k]) = theta[j * ca + k];
        head.bias[active[k]] = theta[d * ca + k];
    }
    return head;
}

std::vector<EvalReport> probe_curve(const FeatureSet& pool, const FeatureSet& test,
                                    const ProbeConfig& cfg, const std::string& dataset_name,
                                    const std::string& model_name,
                                    const std::vector<std::string>& class_names) {
    cfg.validate();
    if (test.size() == 0) throw UsageError("probe_curve: empty test split");
    if (pool.num_classes != test.num_classes) throw UsageError("probe_curve: class counts differ");
    std::vector<EvalReport> out;
    for (std::size_t k : cfg.shots) {
        double sum = 0;
        for (std::size_t s = 0; s < cfg.seeds; ++s) {
            const std::uint64_t seed = cfg.seed + s;
            const auto shots = sample_shots(pool, k, seed, class_names);
            const auto head = train_linear(shots, cfg);
            EvalReport r;
            r.dataset = dataset_name;
            r.metric = Metric::accuracy;
            r.value = accuracy(head.predict(test.features), test.labels);
            r.model = model_name;
            r.shots = k;
            r.seed = seed;
            sum += r.value;
            out.push_back(r);
        }
        EvalReport mean = out.back();
        mean.seed.reset();
        mean.value = sum / static_cast<double>(cfg.seeds);
        out.push_back(mean);
    }
    return out;
}

template <class T>
std::vector<EvalReport> probe_curve(const ClipModel<T>& model, const ImageBatch& pool_images,
                                    const std::vector<std::size_t>& pool_labels,
                                    const ImageBatch& test_images,
                                    const std::vector<std::size_t>& test_labels,
                                    const ClassificationDataset& dataset, const ProbeConfig& cfg) {
    const std::size_t classes = dataset.classes.size();
    const auto pool = extract_features(model, pool_images, pool_labels, classes, FeatureSplit::train_pool);
    const auto test = extract_features(model, test_images, test_labels, classes, FeatureSplit::test);
    return probe_curve(pool, test, cfg, dataset.name, model.config().preset_name, dataset.classes);
}

#define DUOCLIP_INSTANTIATE(T)                                                                    \
    template FeatureSet extract_features<T>(const ClipModel<T>&, const ImageBatch&,               \
                                            std::vector<std::size_t>, std::size_t, FeatureSplit); \
    template std::vector<EvalReport> probe_curve<T>(                                              \
        const ClipModel<T>&, const ImageBatch&, const std::vector<std::size_t>&,                  \
        const ImageBatch&, const std::vector<std::size_t>&, const ClassificationDataset&,         \
        const ProbeConfig&);

DUOCLIP_INSTANTIATE(float)
DUOCLIP_INSTANTIATE(double)

}  // namespace duoclip
