// Gradient conflict resolution. The global-phase gradient g_pub is kept
// only if it does not fight the node's own progress direction g_loc
// (inner product >= 0); otherwise it is replaced by the closest vector that
// satisfies the constraint:
//
//   minimize  1/2 || g - g_pub ||^2   subject to  <g, g_loc> >= 0
//
// The dual of this QP is one-dimensional in the multiplier v >= 0, and when
// the constraint is active it has the closed form
//
//   v* = -<g_pub, g_loc> / <g_loc, g_loc>,   g~ = g_pub + v* g_loc,
//
// which lands exactly on the constraint boundary: <g~, g_loc> = 0. The
// projection never grows the step: ||g~|| <= ||g_pub||.
#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "matrix.hpp"

namespace fedh2l {

struct ProjectionResult {
    FlatVector g;            // the gradient to apply
    double v = 0.0;          // dual multiplier (0 when no conflict)
    bool conflicted = false; // <g_pub, g_loc> was negative
    bool degenerate = false; // conflict with ||g_loc|| ~ 0; g_pub passed through
    double dot_before = 0.0;
    double dot_after = 0.0;
};

inline ProjectionResult project(const FlatVector& g_pub, const FlatVector& g_loc) {
    if (g_pub.size() != g_loc.size())
        throw std::invalid_argument("project: dimension mismatch");
    if (g_pub.empty()) throw std::invalid_argument("project: empty gradients");
    ProjectionResult r;
    r.dot_before = dot(g_pub, g_loc);
    if (r.dot_before >= 0.0) {
        r.g = g_pub;
        r.dot_after = r.dot_before;
        return r;
    }
    r.conflicted = true;
    const double loc_sq = squared_norm(g_loc);
    if (loc_sq < 1e-24) {
        r.degenerate = true;
        r.g = g_pub;
        r.dot_after = r.dot_before;
        return r;
    }
    r.v = -r.dot_before / loc_sq;
    r.g = g_pub;
    axpy(r.v, g_loc, r.g);
    r.dot_after = dot(r.g, g_loc);
    return r;
}

// The same QP in explicit form, used to cross-check the closed form with a
// generic numeric solver. Minimize 1/2 v' C v + w' v subject to a' v >= b
// over the primal g, phrased in the dual scalar v:
//   f(v) = 1/2 q v^2 + l v,  q = a' C^-1 a,  l = w' C^-1 a + b,  v >= 0.
// For the projection instance C = I (left empty), w = -g_pub, a = -g_loc,
// b = 0, and the primal optimum is g_pub + v* g_loc.
struct QpProblem {
    Matrix c;      // empty means identity
    FlatVector w;
    FlatVector a;  // single constraint row
    double b = 0.0;
};

inline QpProblem make_projection_qp(const FlatVector& g_pub, const FlatVector& g_loc) {
    if (g_pub.size() != g_loc.size())
        throw std::invalid_argument("make_projection_qp: dimension mismatch");
    QpProblem qp;
    qp.w.reserve(g_pub.size());
    qp.a.reserve(g_loc.size());
    for (double v : g_pub) qp.w.push_back(-v);
    for (double v : g_loc) qp.a.push_back(-v);
    return qp;
}

// Numeric dual solve: the dual is convex and differentiable, so its
// constrained minimizer sits where the slope q v + l turns non-negative.
// Bracket that sign change by doubling, then bisect to the requested
// relative tolerance. Kept free of the closed form on purpose, so it can
// serve as an oracle for project(). Throws if C is not positive definite
// along a.
inline double qp_dual_numeric(const QpProblem& qp, double tol = 1e-10) {
    if (qp.a.size() != qp.w.size()) throw std::invalid_argument("qp_dual_numeric: shape mismatch");
    FlatVector cinv_a;
    if (qp.c.empty()) {
        cinv_a = qp.a;
    } else {
        cinv_a = solve_spd(qp.c, qp.a);
    }
    const double q = dot(qp.a, cinv_a);
    const double l = dot(qp.w, cinv_a) + qp.b;
    if (q < 0.0) throw std::domain_error("qp_dual_numeric: C not positive definite along a");
    if (q == 0.0) {
        if (l < 0.0) throw std::domain_error("qp_dual_numeric: dual unbounded");
        return 0.0;
    }
    // Slope at v = 0 is l; if it is already uphill the boundary is optimal.
    if (l >= 0.0) return 0.0;
    const auto slope = [&](double v) { return q * v + l; };
    double hi = 1.0;
    while (slope(hi) < 0.0) hi *= 2.0;
    double lo = 0.0;
    while (hi - lo > tol * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (slope(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// Symmetric two-sided conflict surgery (the comparison arm): when the two
// gradients conflict, each loses its component along the other. With no
// conflict both pass through unchanged, as do zero-norm inputs.
inline std::pair<FlatVector, FlatVector> pcgrad_symmetric(const FlatVector& ga,
                                                          const FlatVector& gb) {
    if (ga.size() != gb.size()) throw std::invalid_argument("pcgrad_symmetric: dimension mismatch");
    const double d = dot(ga, gb);
    if (d >= 0.0) return {ga, gb};
    const double na = squared_norm(ga), nb = squared_norm(gb);
    if (na < 1e-24 || nb < 1e-24) return {ga, gb};
    FlatVector pa = ga, pb = gb;
    axpy(-d / nb, gb, pa);
    axpy(-d / na, ga, pb);
    return {pa, pb};
}

}  // namespace fedh2l
