// Dense MLP with analytic backprop and flat parameter views.
//
// Flattening order is fixed and load-bearing (checkpoints, wire transfer,
// parameter averaging all rely on it): layers in order, and within layer k
// first the weight matrix W_k in row-major (out x in, row r = incoming
// weights of output unit r), then the bias vector b_k.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "matrix.hpp"
#include "rng.hpp"

namespace fedh2l {

struct ModelParams {
    std::vector<std::size_t> layer_dims;  // [input, hidden..., output]
    std::vector<Matrix> weights;          // weights[k] is dims[k+1] x dims[k]
    std::vector<std::vector<double>> biases;

    std::size_t layer_count() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }

    bool same_shape(const ModelParams& o) const { return layer_dims == o.layer_dims; }
};

inline std::size_t param_count(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("param_count: need at least two layer dims");
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k)
        n += dims[k + 1] * dims[k] + dims[k + 1];
    return n;
}

inline std::size_t param_count(const ModelParams& m) { return param_count(m.layer_dims); }

// He-uniform init: W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero.
inline ModelParams init_mlp(const std::vector<std::size_t>& dims, RngStream& rng) {
    if (dims.size() < 2) throw std::invalid_argument("init_mlp: need at least two layer dims");
    for (std::size_t d : dims)
        if (d == 0) throw std::invalid_argument("init_mlp: zero-width layer");
    ModelParams m;
    m.layer_dims = dims;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        const std::size_t fan_in = dims[k], fan_out = dims[k + 1];
        Matrix w(fan_out, fan_in);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& v : w.data) v = rng.uniform(-limit, limit);
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(fan_out, 0.0);
    }
    return m;
}

// Activations of every layer; a[0] is the input, a.back() the logits.
struct ForwardCache {
    std::vector<Matrix> a;
};

// ReLU on hidden layers, identity on the output layer. Returns logits B x M.
inline Matrix forward(const ModelParams& m, const Matrix& x, ForwardCache* cache = nullptr) {
    if (x.cols != m.input_dim())
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols) +
                                    " features, model expects " + std::to_string(m.input_dim()));
    if (cache) {
        cache->a.clear();
        cache->a.push_back(x);
    }
    Matrix cur = x;
    for (std::size_t k = 0; k < m.layer_count(); ++k) {
        const Matrix& w = m.weights[k];
        const std::vector<double>& b = m.biases[k];
        Matrix next(cur.rows, w.rows);
        for (std::size_t i = 0; i < cur.rows; ++i) {
            const double* xi = cur.row(i);
            double* ni = next.row(i);
            for (std::size_t r = 0; r < w.rows; ++r) {
                const double* wr = w.row(r);
                double s = b[r];
                for (std::size_t c = 0; c < w.cols; ++c) s += wr[c] * xi[c];
                ni[r] = s;
            }
        }
        const bool hidden = k + 1 < m.layer_count();
        if (hidden)
            for (double& v : next.data) v = v > 0.0 ? v : 0.0;
        if (cache) cache->a.push_back(next);
        cur = std::move(next);
    }
    return cur;
}

// Exact gradient of a scalar loss wrt all parameters, given d(loss)/d(logits).
// Returns the gradient already flattened in the canonical order.
inline FlatVector backward(const ModelParams& m, const ForwardCache& cache, const Matrix& dlogits) {
    const std::size_t layers = m.layer_count();
    if (cache.a.size() != layers + 1)
        throw std::invalid_argument("backward: cache does not match model depth");
    if (dlogits.rows != cache.a.back().rows || dlogits.cols != m.output_dim())
        throw std::invalid_argument("backward: dlogits shape mismatch");

    std::vector<Matrix> dw(layers);
    std::vector<std::vector<double>> db(layers);
    Matrix delta = dlogits;
    for (std::size_t k = layers; k-- > 0;) {
        const Matrix& ain = cache.a[k];
        const Matrix& w = m.weights[k];
        Matrix gw(w.rows, w.cols);
        std::vector<double> gb(w.rows, 0.0);
        for (std::size_t i = 0; i < delta.rows; ++i) {
            const double* di = delta.row(i);
            const double* xi = ain.row(i);
            for (std::size_t r = 0; r < w.rows; ++r) {
                const double d = di[r];
                gb[r] += d;
                if (d == 0.0) continue;
                double* gr = gw.row(r);
                for (std::size_t c = 0; c < w.cols; ++c) gr[c] += d * xi[c];
            }
        }
        dw[k] = std::move(gw);
        db[k] = std::move(gb);
        if (k > 0) {
            Matrix prev(delta.rows, w.cols, 0.0);
            for (std::size_t i = 0; i < delta.rows; ++i) {
                const double* di = delta.row(i);
                double* pi = prev.row(i);
                for (std::size_t r = 0; r < w.rows; ++r) {
                    const double d = di[r];
                    if (d == 0.0) continue;
                    const double* wr = w.row(r);
                    for (std::size_t c = 0; c < w.cols; ++c) pi[c] += d * wr[c];
                }
                const double* hin = ain.row(i);
                for (std::size_t c = 0; c < w.cols; ++c)
                    if (hin[c] <= 0.0) pi[c] = 0.0;  // ReLU mask of layer k's input
            }
            delta = std::move(prev);
        }
    }

    FlatVector g;
    g.reserve(param_count(m));
    for (std::size_t k = 0; k < layers; ++k) {
        g.insert(g.end(), dw[k].data.begin(), dw[k].data.end());
        g.insert(g.end(), db[k].begin(), db[k].end());
    }
    return g;
}

inline FlatVector flatten(const ModelParams& m) {
    FlatVector out;
    out.reserve(param_count(m));
    for (std::size_t k = 0; k < m.layer_count(); ++k) {
        out.insert(out.end(), m.weights[k].data.begin(), m.weights[k].data.end());
        out.insert(out.end(), m.biases[k].begin(), m.biases[k].end());
    }
    return out;
}

inline void unflatten(const FlatVector& flat, ModelParams& m) {
    if (flat.size() != param_count(m))
        throw std::invalid_argument("unflatten: expected " + std::to_string(param_count(m)) +
                                    " values, got " + std::to_string(flat.size()));
    std::size_t pos = 0;
    for (std::size_t k = 0; k < m.layer_count(); ++k) {
        Matrix& w = m.weights[k];
        std::copy(flat.begin() + pos, flat.begin() + pos + w.data.size(), w.data.begin());
        pos += w.data.size();
        std::vector<double>& b = m.biases[k];
        std::copy(flat.begin() + pos, flat.begin() + pos + b.size(), b.begin());
        pos += b.size();
    }
}

// Optimizers. AMSGrad follows the torch.optim.Adam(amsgrad=True) update:
// weight decay is added to the gradient, first/second moments use bias
// correction, and the second moment is replaced by its running maximum.
enum class OptimizerKind { Sgd, AmsGrad };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::AmsGrad;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    OptimizerConfig cfg;
    std::uint64_t step = 0;
    FlatVector m1, m2, m2_max;

    explicit OptimizerState(const OptimizerConfig& c = {}) : cfg(c) {
        if (cfg.lr <= 0.0) throw std::invalid_argument("OptimizerState: lr must be positive");
        if (cfg.weight_decay < 0.0)
            throw std::invalid_argument("OptimizerState: negative weight decay");
    }

    void apply(FlatVector& theta, const FlatVector& grad) {
        if (theta.size() != grad.size())
            throw std::invalid_argument("OptimizerState::apply: length mismatch");
        if (cfg.kind == OptimizerKind::Sgd) {
            for (std::size_t i = 0; i < theta.size(); ++i)
                theta[i] -= cfg.lr * (grad[i] + cfg.weight_decay * theta[i]);
            ++step;
            return;
        }
        if (m1.empty()) {
            m1.assign(theta.size(), 0.0);
            m2.assign(theta.size(), 0.0);
            m2_max.assign(theta.size(), 0.0);
        } else if (m1.size() != theta.size()) {
            throw std::invalid_argument("OptimizerState::apply: state size mismatch");
        }
        ++step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = grad[i] + cfg.weight_decay * theta[i];
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g;
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g * g;
            if (m2[i] > m2_max[i]) m2_max[i] = m2[i];
            const double mhat = m1[i] / bc1;
            const double vhat = m2_max[i] / bc2;
            theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
};

inline void apply_update(ModelParams& m, OptimizerState& opt, const FlatVector& grad) {
    FlatVector theta = flatten(m);
    opt.apply(theta, grad);
    unflatten(theta, m);
}

// Central-difference gradient of an arbitrary scalar loss over the flat
// parameter vector. Test oracle; O(2 * param_count) loss evaluations.
inline FlatVector finite_diff_gradient(const std::function<double(const ModelParams&)>& loss,
                                       const ModelParams& params, double h = 1e-5) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_gradient: h must be positive");
    ModelParams work = params;
    FlatVector theta = flatten(params);
    FlatVector g(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = theta[i];
        theta[i] = orig + h;
        unflatten(theta, work);
        const double up = loss(work);
        theta[i] = orig - h;
        unflatten(theta, work);
        const double down = loss(work);
        theta[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    unflatten(theta, work);
    return g;
}

}  // namespace fedh2l
