#pragma once

#include "ldqn/memory.hpp"
#include "ldqn/message.hpp"
#include "ldqn/objectives.hpp"
#include "ldqn/types.hpp"

#include <stdexcept>
#include <utility>

namespace ldqn {

struct WorkerOptions {
    double curvature_tol = kCurvatureTol;
    // When false, gamma stays frozen at gamma0; exposed to isolate the effect
    // of per-step re-scaling (and to match dense DAve-QN within the
    // equivalence window).
    bool rescale_gamma = true;
    // When the memory is full, clear it and rebuild from the gamma*I base
    // (restarted window) instead of overwriting the oldest tuple. Plain FIFO
    // overwrite invalidates the inductive positive-definiteness argument for
    // the compact estimate: the retained tuples' stored q vectors reference a
    // window that no longer exists, and the materialized estimate can go
    // indefinite, after which the closed loop diverges. The flush keeps every
    // window an unbroken BFGS chain and lets the master replay it exactly.
    bool flush_on_full = true;
};

// Worker side of the protocol. Holds the local iterate copy z, its cached
// gradient, the limited-memory estimate, and the previous applied value
// u_prev = B(gamma, M) * z.
template <class ShardT>
class Worker {
  public:
    Worker(int id, ShardT shard, std::size_t memory_capacity, const Vector& x0, double gamma0,
           WorkerOptions opt = {})
        : id_(id),
          shard_(std::move(shard)),
          memory_(memory_capacity),
          gamma_{gamma0},
          z_(x0),
          opt_(opt) {
        if (!(gamma0 > 0.0)) throw std::invalid_argument("gamma0 must be positive");
        grad_z_ = shard_gradient(shard_, z_);
        u_prev_ = gamma0 * x0;  // B = gamma0*I before any tuple exists
    }

    WorkerMessage step(const Vector& x) {
        const Vector grad_x = shard_gradient(shard_, x);
        const Vector s = x - z_;
        const Vector y = grad_x - grad_z_;

        WorkerMessage msg;
        msg.worker_id = id_;
        msg.y = y;

        bool updated = false;
        if (curvature_ok(y, s, opt_.curvature_tol)) {
            const GammaScale gamma_new =
                opt_.rescale_gamma ? compute_gamma(y, s, opt_.curvature_tol) : gamma_;
            const bool flush = opt_.flush_on_full && memory_.capacity() > 0 &&
                               memory_.size() == memory_.capacity();
            // A flushed push builds on the bare gamma*I base, so q = gamma*s
            // and beta = gamma*||s||^2 > 0; it can never fail the guard below.
            const Vector q = flush ? Vector(gamma_new.value * s) : lbfgs_apply(gamma_new, memory_, s);
            const double alpha = y.dot(s);
            const double beta = s.dot(q);
            // Re-scaling gamma can leave the materialized estimate indefinite
            // along s; only a strictly positive beta keeps the tuple valid.
            if (beta > opt_.curvature_tol * s.squaredNorm()) {
                if (flush) memory_.clear();
                memory_.push(MemoryTuple{y, q, alpha, beta});
                gamma_ = gamma_new;
                msg.q_tilde = q;
                msg.alpha = alpha;
                msg.beta_tilde = beta;
                updated = true;
            }
        }
        if (!updated) {
            // Degenerate step (s = 0, nonpositive curvature, or indefinite
            // estimate): leave gamma and memory untouched, reply gradient-only.
            msg.q_tilde = Vector::Zero(x.size());
            msg.skipped = true;
        }

        const Vector u = lbfgs_apply(gamma_, memory_, x);
        msg.delta_u = u - u_prev_;
        u_prev_ = u;
        z_ = x;
        grad_z_ = grad_x;
        return msg;
    }

    const Vector& local_gradient() const { return grad_z_; }
    int id() const { return id_; }
    const Vector& z() const { return z_; }
    const GammaScale& gamma() const { return gamma_; }
    const TupleMemory& memory() const { return memory_; }
    const ShardT& shard() const { return shard_; }

    Matrix dense_estimate() const {
        return materialize(gamma_, memory_, static_cast<int>(z_.size()));
    }

    // Peak state footprint: tuples plus the O(d) vectors z, grad_z, u_prev.
    std::size_t state_bytes() const {
        return memory_.bytes() + sizeof(double) * 3 * static_cast<std::size_t>(z_.size());
    }

  private:
    int id_;
    ShardT shard_;
    TupleMemory memory_;
    GammaScale gamma_;
    Vector z_;
    Vector grad_z_;
    Vector u_prev_;
    WorkerOptions opt_;
};

}  // namespace ldqn
