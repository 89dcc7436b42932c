#pragma once

#include "ldqn/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <vector>

namespace ldqn {

// Regularized binary logistic shard:
//   f(x) = (1/|rows|) sum_j log(1 + exp(-b_j a_j'x)) + (lambda/2) ||x||^2.
// Each shard carries the full regularizer so every component is
// lambda-strongly convex on its own.
struct Shard {
    std::vector<SparseRow> rows;
    std::vector<double> labels;  // in {-1, +1}
    double lambda = 0.0;
    int dim = 0;
};

// Quadratic shard f(x) = 1/2 (x - x*)' Q (x - x*), Q symmetric positive definite.
struct QuadraticShard {
    Matrix Q;
    Vector x_star;
    int dim() const { return static_cast<int>(Q.rows()); }
};

struct SmoothnessConstants {
    double mu = 0.0;
    double L = 0.0;
    double kappa() const { return L / mu; }
};

inline double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(-m)) without overflow for large |m|.
inline double softplus_neg(double m) {
    if (m > 0.0) return std::log1p(std::exp(-m));
    return -m + std::log1p(std::exp(m));
}

inline double shard_loss(const Shard& shard, const Vector& x) {
    double loss = 0.0;
    for (std::size_t j = 0; j < shard.rows.size(); ++j)
        loss += softplus_neg(shard.labels[j] * shard.rows[j].dot(x));
    if (!shard.rows.empty()) loss /= static_cast<double>(shard.rows.size());
    return loss + 0.5 * shard.lambda * x.squaredNorm();
}

inline double shard_loss(const QuadraticShard& shard, const Vector& x) {
    const Vector r = x - shard.x_star;
    return 0.5 * r.dot(shard.Q * r);
}

inline Vector shard_gradient(const Shard& shard, const Vector& x) {
    Vector g = shard.lambda * x;
    if (shard.rows.empty()) return g;
    const double inv = 1.0 / static_cast<double>(shard.rows.size());
    for (std::size_t j = 0; j < shard.rows.size(); ++j) {
        const double b = shard.labels[j];
        const double margin = b * shard.rows[j].dot(x);
        // d/dx log(1+exp(-m)) = -b * sigma(-m) * a
        shard.rows[j].add_scaled(g, -b * logistic(-margin) * inv);
    }
    return g;
}

inline Vector shard_gradient(const QuadraticShard& shard, const Vector& x) {
    return shard.Q * (x - shard.x_star);
}

inline Matrix shard_hessian(const Shard& shard, const Vector& x, int dense_cap = kDefaultDenseCap) {
    if (shard.dim > dense_cap) throw dimension_error("dense Hessian above cap");
    Matrix H = shard.lambda * Matrix::Identity(shard.dim, shard.dim);
    if (shard.rows.empty()) return H;
    const double inv = 1.0 / static_cast<double>(shard.rows.size());
    for (std::size_t j = 0; j < shard.rows.size(); ++j) {
        const double m = shard.labels[j] * shard.rows[j].dot(x);
        const double w = logistic(m) * logistic(-m) * inv;  // sigma'(m)
        const auto& row = shard.rows[j];
        for (std::size_t a = 0; a < row.idx.size(); ++a)
            for (std::size_t b = 0; b < row.idx.size(); ++b)
                H(row.idx[a], row.idx[b]) += w * row.val[a] * row.val[b];
    }
    return H;
}

inline Matrix shard_hessian(const QuadraticShard& shard, const Vector&,
                            int dense_cap = kDefaultDenseCap) {
    if (shard.dim() > dense_cap) throw dimension_error("dense Hessian above cap");
    return shard.Q;
}

// Conservative per-component bounds: mu >= lambda and
// L <= lambda + max_j ||a_j||^2 / 4 (the logistic curvature peak is 1/4).
inline SmoothnessConstants global_constants(const std::vector<Shard>& shards) {
    double max_row = 0.0;
    double lambda = shards.empty() ? 0.0 : shards.front().lambda;
    for (const auto& s : shards)
        for (const auto& r : s.rows) max_row = std::max(max_row, r.squared_norm());
    SmoothnessConstants c;
    c.mu = lambda;
    c.L = lambda + 0.25 * max_row;
    return c;
}

// Exact extreme eigenvalues across the quadratic components.
inline SmoothnessConstants global_constants(const std::vector<QuadraticShard>& shards) {
    SmoothnessConstants c;
    c.mu = std::numeric_limits<double>::infinity();
    c.L = 0.0;
    for (const auto& s : shards) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(s.Q, Eigen::EigenvaluesOnly);
        c.mu = std::min(c.mu, es.eigenvalues().minCoeff());
        c.L = std::max(c.L, es.eigenvalues().maxCoeff());
    }
    return c;
}

template <class ShardT>
double full_loss(const std::vector<ShardT>& shards, const Vector& x) {
    double f = 0.0;
    for (const auto& s : shards) f += shard_loss(s, x);
    return f / static_cast<double>(shards.size());
}

template <class ShardT>
Vector full_gradient(const std::vector<ShardT>& shards, const Vector& x) {
    Vector g = Vector::Zero(x.size());
    for (const auto& s : shards) g += shard_gradient(s, x);
    return g / static_cast<double>(shards.size());
}

struct ReferenceSolution {
    Vector x_star;
    double f_star = 0.0;
    int iterations = 0;
    double grad_norm = 0.0;
};

// High-accuracy reference optimum via damped Newton on the full objective.
// Needs dense Hessians, so d must be under the cap.
template <class ShardT>
ReferenceSolution reference_solve(const std::vector<ShardT>& shards, const Vector& x0,
                                  double grad_tol = 1e-12, int max_iters = 200,
                                  int dense_cap = kDefaultDenseCap) {
    Vector x = x0;
    const int d = static_cast<int>(x.size());
    ReferenceSolution sol;
    for (int it = 0; it < max_iters; ++it) {
        Vector g = full_gradient(shards, x);
        sol.grad_norm = g.norm();
        sol.iterations = it;
        if (sol.grad_norm <= grad_tol) break;
        Matrix H = Matrix::Zero(d, d);
        for (const auto& s : shards) H += shard_hessian(s, x, dense_cap);
        H /= static_cast<double>(shards.size());
        Vector step = H.ldlt().solve(g);
        double f0 = full_loss(shards, x);
        double a = 1.0;
        // backtrack on the rare non-descent step
        while (a > 1e-8 && full_loss(shards, x - a * step) > f0) a *= 0.5;
        x -= a * step;
    }
    sol.x_star = x;
    sol.f_star = full_loss(shards, x);
    sol.grad_norm = full_gradient(shards, x).norm();
    return sol;
}

}  // namespace ldqn
