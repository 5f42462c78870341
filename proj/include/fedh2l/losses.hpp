// Loss functions and their exact logits-space gradients: cross-entropy,
// KL divergence, and the mutual distillation objective driven by peers'
// teaching signals.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "data.hpp"
#include "matrix.hpp"
#include "nn.hpp"
#include "signal.hpp"

namespace fedh2l {

// Max-shifted, row-wise.
inline Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* z = logits.row(i);
        double* pi = p.row(i);
        double zmax = z[0];
        for (std::size_t c = 1; c < logits.cols; ++c) zmax = std::max(zmax, z[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) {
            pi[c] = std::exp(z[c] - zmax);
            sum += pi[c];
        }
        for (std::size_t c = 0; c < logits.cols; ++c) pi[c] /= sum;
    }
    return p;
}

// Mean cross-entropy of a batch, computed through logsumexp, plus the
// gradient wrt logits: (softmax - onehot) / batch.
struct CeResult {
    double loss = 0.0;
    Matrix dlogits;
};

inline CeResult ce_loss_grad(const Matrix& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.rows, m = logits.cols;
    if (labels.size() != n) throw std::invalid_argument("ce_loss_grad: label count mismatch");
    if (n == 0) throw std::invalid_argument("ce_loss_grad: empty batch");
    CeResult out;
    out.dlogits = softmax(logits);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= m)
            throw std::invalid_argument("ce_loss_grad: label out of range");
        const double* z = logits.row(i);
        double zmax = z[0];
        for (std::size_t c = 1; c < m; ++c) zmax = std::max(zmax, z[c]);
        double lse = 0.0;
        for (std::size_t c = 0; c < m; ++c) lse += std::exp(z[c] - zmax);
        total += zmax + std::log(lse) - z[static_cast<std::size_t>(y)];
        out.dlogits(i, static_cast<std::size_t>(y)) -= 1.0;
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.loss = total * inv;
    for (double& v : out.dlogits.data) v *= inv;
    return out;
}

// KL(teacher || student) for one distribution pair. Student probabilities
// are clamped at 1e-12 inside the log; zero teacher entries contribute
// nothing.
inline double kl_divergence(const std::vector<double>& teacher,
                            const std::vector<double>& student) {
    if (teacher.size() != student.size())
        throw std::invalid_argument("kl_divergence: length mismatch");
    double s = 0.0;
    for (std::size_t c = 0; c < teacher.size(); ++c) {
        const double t = teacher[c];
        if (t <= 0.0) continue;
        s += t * (std::log(t) - std::log(std::max(student[c], 1e-12)));
    }
    return s;
}

// Components of the global-phase objective, with ablation weights already
// applied. The gradient handed back by mutual_grad is the gradient of
// kl_mutual + ce_public.
struct LossReport {
    double kl_mutual = 0.0;  // confidence-weighted distillation toward peers
    double ce_public = 0.0;  // supervised loss on peers' public batches
    double total() const { return kl_mutual + ce_public; }
};

struct MutualGrad {
    FlatVector grad;
    LossReport report;
};

// Gradient of the mutual objective for one student model given K peer
// signals:
//   kl term: (1/K) sum_j acc_j * mean_b KL(p_j,b || softmax(f(x_j,b)))
//   ce term: (1/K) sum_j mean_b CE(f(x_j,b), y_j,b)
// Teachers are constants; nothing differentiates through the signals. The
// inputs x and labels y are resolved from the public store by sample id.
inline MutualGrad mutual_grad(const ModelParams& model, const std::vector<TeachingSignal>& signals,
                              const PublicStore& store, double kl_weight = 1.0,
                              double ce_weight = 1.0) {
    if (signals.empty()) throw std::invalid_argument("mutual_grad: no teaching signals");
    const std::size_t m = model.output_dim();
    MutualGrad out;
    out.grad.assign(param_count(model), 0.0);
    const double inv_k = 1.0 / static_cast<double>(signals.size());
    for (const TeachingSignal& s : signals) {
        if (s.classes != m)
            throw std::invalid_argument("mutual_grad: signal class count mismatch");
        const Batch batch = store.lookup(static_cast<int>(s.sender), s.ids);
        ForwardCache cache;
        const Matrix logits = forward(model, batch.x, &cache);
        const Matrix probs = softmax(logits);
        const Matrix teach = signal_probs(s);
        const double acc = static_cast<double>(s.acc);
        const std::size_t b = batch.size();
        const double inv_b = 1.0 / static_cast<double>(b);

        Matrix dlogits(b, m, 0.0);
        double kl_sum = 0.0, ce_sum = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const double* t = teach.row(i);
            const double* p = probs.row(i);
            const double* z = logits.row(i);
            double zmax = z[0];
            for (std::size_t c = 1; c < m; ++c) zmax = std::max(zmax, z[c]);
            double lse = 0.0;
            for (std::size_t c = 0; c < m; ++c) lse += std::exp(z[c] - zmax);
            const int y = batch.y[i];
            if (y < 0 || static_cast<std::size_t>(y) >= m)
                throw std::invalid_argument("mutual_grad: public label out of range");
            ce_sum += zmax + std::log(lse) - z[static_cast<std::size_t>(y)];
            for (std::size_t c = 0; c < m; ++c) {
                const double tc = t[c];
                if (tc > 0.0) kl_sum += tc * (std::log(tc) - std::log(std::max(p[c], 1e-12)));
                const double onehot = static_cast<std::size_t>(y) == c ? 1.0 : 0.0;
                dlogits(i, c) = inv_k * inv_b * (kl_weight * acc * (p[c] - tc) +
                                                 ce_weight * (p[c] - onehot));
            }
        }
        axpy(1.0, backward(model, cache, dlogits), out.grad);
        out.report.kl_mutual += kl_weight * acc * kl_sum * inv_b * inv_k;
        out.report.ce_public += ce_weight * ce_sum * inv_b * inv_k;
    }
    return out;
}

}  // namespace fedh2l
