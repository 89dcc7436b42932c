#pragma once

#include "ldqn/memory.hpp"
#include "ldqn/message.hpp"
#include "ldqn/objectives.hpp"
#include "ldqn/types.hpp"

#include <stdexcept>
#include <utility>
#include <vector>

namespace ldqn {

// Full-memory BFGS worker (DAve-QN): keeps the dense estimate
// B <- B + y y'/alpha - q q'/beta with q = B s. O(d^2) state by design.
// Produces the same message shape as the limited-memory worker, so the master
// is shared unchanged.
template <class ShardT>
class DenseBfgsWorker {
  public:
    DenseBfgsWorker(int id, ShardT shard, const Vector& x0, double gamma0,
                    double curvature_tol = kCurvatureTol, int dense_cap = kDefaultDenseCap)
        : id_(id), shard_(std::move(shard)), z_(x0), tol_(curvature_tol) {
        if (!(gamma0 > 0.0)) throw std::invalid_argument("gamma0 must be positive");
        const int d = static_cast<int>(x0.size());
        if (d > dense_cap) throw dimension_error("dense worker state above cap");
        B_ = gamma0 * Matrix::Identity(d, d);
        grad_z_ = shard_gradient(shard_, z_);
        u_prev_ = B_ * x0;
    }

    WorkerMessage step(const Vector& x) {
        const Vector grad_x = shard_gradient(shard_, x);
        const Vector s = x - z_;
        const Vector y = grad_x - grad_z_;

        WorkerMessage msg;
        msg.worker_id = id_;
        msg.y = y;

        if (curvature_ok(y, s, tol_)) {
            const Vector q = B_ * s;
            const double alpha = y.dot(s);
            const double beta = s.dot(q);
            B_.noalias() += (y * y.transpose()) / alpha;
            B_.noalias() -= (q * q.transpose()) / beta;
            msg.q_tilde = q;
            msg.alpha = alpha;
            msg.beta_tilde = beta;
        } else {
            msg.q_tilde = Vector::Zero(x.size());
            msg.skipped = true;
        }

        const Vector u = B_ * x;
        msg.delta_u = u - u_prev_;
        u_prev_ = u;
        z_ = x;
        grad_z_ = grad_x;
        return msg;
    }

    const Vector& local_gradient() const { return grad_z_; }
    int id() const { return id_; }
    const Vector& z() const { return z_; }
    const Matrix& B() const { return B_; }
    Matrix dense_estimate() const { return B_; }

    std::size_t state_bytes() const {
        return sizeof(double) * static_cast<std::size_t>(B_.size()) +
               sizeof(double) * 3 * static_cast<std::size_t>(z_.size());
    }

  private:
    int id_;
    ShardT shard_;
    Matrix B_;
    Vector z_;
    Vector grad_z_;
    Vector u_prev_;
    double tol_;
};

// Test-mode worker for quadratic shards with the estimate frozen at the exact
// Hessian Q. Every message is gradient-only (the estimate never changes), so
// the master's dense inverse stays fixed at (sum_i Q_i)^{-1}.
class ExactQuadraticWorker {
  public:
    ExactQuadraticWorker(int id, QuadraticShard shard, const Vector& x0)
        : id_(id), shard_(std::move(shard)), z_(x0) {
        grad_z_ = shard_gradient(shard_, z_);
    }

    WorkerMessage step(const Vector& x) {
        const Vector grad_x = shard_gradient(shard_, x);
        WorkerMessage msg;
        msg.worker_id = id_;
        msg.skipped = true;
        msg.y = grad_x - grad_z_;
        msg.delta_u = shard_.Q * (x - z_);
        msg.q_tilde = Vector::Zero(x.size());
        z_ = x;
        grad_z_ = grad_x;
        return msg;
    }

    const Vector& local_gradient() const { return grad_z_; }
    int id() const { return id_; }
    const Vector& z() const { return z_; }
    Matrix dense_estimate() const { return shard_.Q; }

  private:
    int id_;
    QuadraticShard shard_;
    Vector z_;
    Vector grad_z_;
};

// One synchronous full-gradient descent step: x - eta * (1/n) sum_i grad f_i(x).
template <class ShardT>
Vector sync_gd_step(const Vector& x, const std::vector<ShardT>& shards, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    return x - eta * full_gradient(shards, x);
}

}  // namespace ldqn
