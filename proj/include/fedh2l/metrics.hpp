// Evaluation: per-node accuracy metrics, checkpoint selection, and a small
// exact PCA for feature-space snapshots.
//
// For node i with test sets T_1..T_N:
//   wdp_i = accuracy of f_i on its own T_i            (within-domain)
//   cdp_i = accuracy of f_i on the union of T_j, j!=i (cross-domain)
//   acc_i = accuracy of f_i on the union of all T_j
// acc is the size-weighted blend of wdp and cdp by construction.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "data.hpp"
#include "losses.hpp"
#include "matrix.hpp"
#include "nn.hpp"

namespace fedh2l {

// Top-1 accuracy; argmax ties resolve to the lowest class index.
inline double evaluate(const ModelParams& model, const LabeledSet& set) {
    if (set.size() == 0) throw std::invalid_argument("evaluate: empty set");
    const Matrix logits = forward(model, set.x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* z = logits.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols; ++c)
            if (z[c] > z[best]) best = c;
        if (static_cast<int>(best) == set.y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows);
}

struct NodeMetrics {
    int node = 0;
    double wdp = 0.0;
    double cdp = 0.0;
    bool has_cdp = false;  // false for a single node: no "others" exist
    double acc = 0.0;
};

struct MetricsRecord {
    std::vector<NodeMetrics> nodes;
    double avg_wdp = 0.0;
    double avg_cdp = 0.0;
    double avg_acc = 0.0;
    bool has_cdp = false;
};

inline MetricsRecord metrics_record(const std::vector<ModelParams>& models,
                                    const std::vector<const LabeledSet*>& tests) {
    const std::size_t n = models.size();
    if (n == 0 || tests.size() != n)
        throw std::invalid_argument("metrics_record: need one test set per model");
    std::vector<std::size_t> sizes(n);
    for (std::size_t j = 0; j < n; ++j) {
        if (!tests[j] || tests[j]->size() == 0)
            throw std::invalid_argument("metrics_record: empty test set");
        sizes[j] = tests[j]->size();
    }
    MetricsRecord rec;
    rec.has_cdp = n > 1;
    for (std::size_t i = 0; i < n; ++i) {
        // Counting by raw corrects keeps wdp/cdp/acc exactly consistent.
        std::vector<double> correct(n);
        for (std::size_t j = 0; j < n; ++j)
            correct[j] = evaluate(models[i], *tests[j]) * static_cast<double>(sizes[j]);
        double all_c = 0.0, all_n = 0.0, oth_c = 0.0, oth_n = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            all_c += correct[j];
            all_n += static_cast<double>(sizes[j]);
            if (j != i) {
                oth_c += correct[j];
                oth_n += static_cast<double>(sizes[j]);
            }
        }
        NodeMetrics nm;
        nm.node = static_cast<int>(i);
        nm.wdp = correct[i] / static_cast<double>(sizes[i]);
        nm.acc = all_c / all_n;
        if (n > 1) {
            nm.cdp = oth_c / oth_n;
            nm.has_cdp = true;
        }
        rec.nodes.push_back(nm);
    }
    for (const NodeMetrics& nm : rec.nodes) {
        rec.avg_wdp += nm.wdp;
        rec.avg_cdp += nm.cdp;
        rec.avg_acc += nm.acc;
    }
    const double inv = 1.0 / static_cast<double>(n);
    rec.avg_wdp *= inv;
    rec.avg_cdp *= inv;
    rec.avg_acc *= inv;
    return rec;
}

// Checkpoint policy: keep the round with the highest validation accuracy;
// ties go to the earliest such round.
struct CheckpointEntry {
    int round = 0;
    double val_acc = 0.0;
};

inline std::size_t checkpoint_select(const std::vector<CheckpointEntry>& history) {
    if (history.empty()) throw std::invalid_argument("checkpoint_select: empty history");
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
        if (history[i].val_acc > history[best].val_acc) best = i;
    return best;
}

// Activations of the last hidden layer (the inputs themselves for a model
// with no hidden layers). Feature space for the PCA snapshots.
inline Matrix hidden_features(const ModelParams& model, const Matrix& x) {
    ForwardCache cache;
    forward(model, x, &cache);
    return cache.a[cache.a.size() - 2];
}

// First two principal components by power iteration with deflation on the
// centered covariance. Deterministic start vector; component signs are
// normalized so each loading's first nonzero entry is positive.
inline Matrix pca2d(const Matrix& x) {
    const std::size_t n = x.rows, d = x.cols;
    if (n < 2 || d < 2) throw std::invalid_argument("pca2d: need at least 2 samples and 2 dims");
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    Matrix centered(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centered(i, j) = x(i, j) - mean[j];

    Matrix cov(d, d);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += centered(i, a) * centered(i, b);
            s /= static_cast<double>(n - 1);
            cov(a, b) = s;
            cov(b, a) = s;
        }

    auto power_component = [&](Matrix& c) {
        std::vector<double> v(d);
        for (std::size_t j = 0; j < d; ++j) v[j] = 1.0 / std::sqrt(static_cast<double>(d));
        double lambda = 0.0;
        for (int it = 0; it < 10000; ++it) {
            std::vector<double> w(d, 0.0);
            for (std::size_t a = 0; a < d; ++a) {
                const double* row = c.row(a);
                for (std::size_t b = 0; b < d; ++b) w[a] += row[b] * v[b];
            }
            double nrm = 0.0;
            for (double q : w) nrm += q * q;
            nrm = std::sqrt(nrm);
            if (nrm == 0.0) break;  // degenerate direction; keep current v
            for (double& q : w) q /= nrm;
            double delta = 0.0;
            for (std::size_t j = 0; j < d; ++j) delta += std::fabs(w[j] - v[j]);
            v = w;
            lambda = nrm;
            if (delta < 1e-10) break;
        }
        for (std::size_t j = 0; j < d; ++j) {
            if (v[j] > 1e-12) break;
            if (v[j] < -1e-12) {
                for (double& q : v) q = -q;
                break;
            }
        }
        return std::make_pair(v, lambda);
    };

    auto [v1, l1] = power_component(cov);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) cov(a, b) -= l1 * v1[a] * v1[b];
    auto [v2, l2] = power_component(cov);

    Matrix out(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        double p1 = 0.0, p2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            p1 += centered(i, j) * v1[j];
            p2 += centered(i, j) * v2[j];
        }
        out(i, 0) = p1;
        out(i, 1) = p2;
    }
    return out;
}

}  // namespace fedh2l
