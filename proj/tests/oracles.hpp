// Independent reference implementations used to check the library. These
// deliberately share no code with the headers under test: straight-line
// arithmetic, brute-force search, and closed forms only.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <fedh2l/matrix.hpp>
#include <fedh2l/nn.hpp>

namespace oracle {

// Per-sample straight-line MLP evaluation: explicit loops over units,
// ReLU on hidden layers, identity output.
inline std::vector<double> ref_forward_sample(const fedh2l::ModelParams& m,
                                              const std::vector<double>& x) {
    std::vector<double> cur = x;
    for (std::size_t k = 0; k < m.weights.size(); ++k) {
        const fedh2l::Matrix& w = m.weights[k];
        std::vector<double> next(w.rows);
        for (std::size_t r = 0; r < w.rows; ++r) {
            double s = m.biases[k][r];
            for (std::size_t c = 0; c < w.cols; ++c) s += w(r, c) * cur[c];
            next[r] = s;
        }
        if (k + 1 < m.weights.size())
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        cur = next;
    }
    return cur;
}

// Central differences over a flat vector.
inline fedh2l::FlatVector fd_gradient(const std::function<double(const fedh2l::FlatVector&)>& f,
                                      fedh2l::FlatVector at, double h = 1e-5) {
    fedh2l::FlatVector g(at.size());
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double orig = at[i];
        at[i] = orig + h;
        const double up = f(at);
        at[i] = orig - h;
        const double down = f(at);
        at[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double max_rel_err(const fedh2l::FlatVector& a, const fedh2l::FlatVector& b,
                          double floor = 1e-8) {
    if (a.size() != b.size()) throw std::invalid_argument("max_rel_err: length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

// Brute-force dual multiplier: refine the minimizer of the (convex) dual
// 0.5 q v^2 + l v over v >= 0 by nested grid scans.
inline double grid_min_v(double q, double l, double hi, int refinements = 12) {
    double lo = 0.0;
    double best_v = 0.0;
    for (int pass = 0; pass < refinements; ++pass) {
        double best = std::numeric_limits<double>::infinity();
        const int steps = 400;
        for (int i = 0; i <= steps; ++i) {
            const double v = lo + (hi - lo) * static_cast<double>(i) / steps;
            const double f = 0.5 * q * v * v + l * v;
            if (f < best) {
                best = f;
                best_v = v;
            }
        }
        const double span = (hi - lo) / steps;
        lo = std::max(0.0, best_v - 2.0 * span);
        hi = best_v + 2.0 * span;
    }
    return best_v;
}

// Exact 90-degree clockwise rotation of a square image as an index
// permutation: dest(r, c) = src(h - 1 - c, r).
inline fedh2l::Matrix rot90_cw(const fedh2l::Matrix& img) {
    if (img.rows != img.cols) throw std::invalid_argument("rot90_cw: square images only");
    fedh2l::Matrix out(img.rows, img.cols);
    for (std::size_t r = 0; r < img.rows; ++r)
        for (std::size_t c = 0; c < img.cols; ++c) out(r, c) = img(img.rows - 1 - c, r);
    return out;
}

// Closed-form unit eigenvectors of a symmetric 2x2 matrix [[a, b], [b, d]],
// largest eigenvalue first, first nonzero loading positive.
struct Eig2 {
    double l1, l2;
    std::vector<double> v1, v2;
};

inline Eig2 eig2(double a, double b, double d) {
    const double tr = a + d;
    const double det = a * d - b * b;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    Eig2 e;
    e.l1 = tr / 2.0 + disc;
    e.l2 = tr / 2.0 - disc;
    auto unit_for = [&](double lambda) {
        std::vector<double> v;
        if (std::fabs(b) > 1e-12) {
            v = {lambda - d, b};
        } else if (a >= d) {
            v = lambda == e.l1 ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
        } else {
            v = lambda == e.l1 ? std::vector<double>{0.0, 1.0} : std::vector<double>{1.0, 0.0};
        }
        const double n = std::sqrt(v[0] * v[0] + v[1] * v[1]);
        v[0] /= n;
        v[1] /= n;
        for (double q : v) {
            if (q > 1e-12) break;
            if (q < -1e-12) {
                v[0] = -v[0];
                v[1] = -v[1];
                break;
            }
        }
        return v;
    };
    e.v1 = unit_for(e.l1);
    e.v2 = unit_for(e.l2);
    return e;
}

}  // namespace oracle
