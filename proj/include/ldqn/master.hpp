#pragma once

#include "ldqn/memory.hpp"
#include "ldqn/message.hpp"
#include "ldqn/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <unordered_map>
#include <vector>

namespace ldqn {

struct MasterOptions {
    // Relative threshold under which an SMW denominator is treated as
    // singular; the rank-two correction is then dropped (message handled as
    // gradient-only) so the u/g ledgers stay consistent.
    double denom_tol = 1e-12;
    // Worker tuple-memory capacity mirrored at the master (0 disables
    // mirroring). Workers with finite memory flush their window when it is
    // full; the incremental rank-two corrections alone would then track an
    // estimate the workers no longer hold and the closed loop diverges. The
    // master has seen every pushed tuple, so it replays the flush: when a
    // worker's (m+1)-th tuple arrives, each of that worker's stored tuples is
    // unwound from B newest-first with two Sherman-Morrison corrections,
    // keeping B = sum_i materialize(B_i) exact (for fixed gamma). Every
    // intermediate matrix is a sum of valid BFGS chain states, so all removal
    // denominators stay positive in exact arithmetic.
    std::size_t mirror_capacity = 0;
};

struct StepRecord {
    std::int64_t t = 0;
    int worker_id = 0;
    double denom1 = 0.0;
    double denom2 = 0.0;
    bool rank2_applied = false;
    bool rejected_singular = false;
    bool flush_mirrored = false;
    double g_norm = 0.0;
};

// Master state: iterate x, the dense inverse of the summed estimate, and the
// aggregates u = sum_i B_i z_i and g = sum_i grad f_i(z_i). Messages are
// processed strictly one at a time; t counts processed messages.
class Master {
  public:
    Vector x;
    Matrix B_inv;
    Vector u;
    Vector g;
    double eta = 1.0;
    std::int64_t t = 0;
    int n = 0;
    int singular_rejections = 0;

    static Master init(const Vector& x0, double eta, double gamma0,
                       const std::vector<Vector>& worker_gradients, MasterOptions opt = {}) {
        const int n = static_cast<int>(worker_gradients.size());
        const int d = static_cast<int>(x0.size());
        Master m;
        m.x = x0;
        m.eta = eta;
        m.n = n;
        m.opt_ = opt;
        m.B_inv = Matrix::Identity(d, d) / (n * gamma0);
        m.u = n * gamma0 * x0;
        m.g = Vector::Zero(d);
        for (const auto& gi : worker_gradients) m.g += gi;
        return m;
    }

    // Initialization from an explicit summed estimate (exact-Hessian test mode
    // and other dense setups).
    static Master init_dense(const Vector& x0, double eta, const Matrix& B_sum,
                             const std::vector<Vector>& worker_gradients, MasterOptions opt = {}) {
        Master m;
        m.x = x0;
        m.eta = eta;
        m.n = static_cast<int>(worker_gradients.size());
        m.opt_ = opt;
        m.B_inv = B_sum.ldlt().solve(Matrix::Identity(B_sum.rows(), B_sum.cols()));
        m.B_inv = 0.5 * (m.B_inv + m.B_inv.transpose().eval());
        m.u = B_sum * x0;
        m.g = Vector::Zero(x0.size());
        for (const auto& gi : worker_gradients) m.g += gi;
        return m;
    }

    StepRecord step(const WorkerMessage& msg) {
        StepRecord rec;
        rec.worker_id = msg.worker_id;
        u += msg.delta_u;
        g += msg.y;
        if (!msg.skipped) {
            if (opt_.mirror_capacity > 0) {
                // The worker flushes its full window before this push; unwind
                // our copy of that window first so the incoming rank-two lands
                // on the same base estimate.
                rec.flush_mirrored = mirror_flush_if_full(msg.worker_id);
            }
            const Vector v = B_inv * msg.y;
            const double vy = v.dot(msg.y);
            rec.denom1 = msg.alpha + vy;
            // Purely relative guards: near convergence every term scales as
            // ||s||^2, and an absolute floor would reject legitimate updates
            // the worker has already applied, desynchronizing the estimates.
            const double scale1 = std::max(std::abs(msg.alpha), std::abs(vy));
            if (!(rec.denom1 >= opt_.denom_tol * scale1)) {
                rec.rejected_singular = true;
            } else {
                Matrix U = B_inv - (v * v.transpose()) / rec.denom1;
                const Vector w = U * msg.q_tilde;
                const double qw = msg.q_tilde.dot(w);
                rec.denom2 = msg.beta_tilde - qw;
                const double scale2 = std::max(std::abs(msg.beta_tilde), std::abs(qw));
                if (!(rec.denom2 >= opt_.denom_tol * scale2)) {
                    rec.rejected_singular = true;
                } else {
                    B_inv = U + (w * w.transpose()) / rec.denom2;
                    // SMW drifts asymmetric in floating point
                    B_inv = 0.5 * (B_inv + B_inv.transpose().eval());
                    rec.rank2_applied = true;
                }
            }
            if (rec.rejected_singular) ++singular_rejections;
            if (opt_.mirror_capacity > 0) {
                mirror_[msg.worker_id].push_back(
                    MirrorTuple{msg.y, msg.q_tilde, msg.alpha, msg.beta_tilde, rec.rank2_applied});
            }
        }
        x = B_inv * (u - eta * g);
        ++t;
        rec.t = t;
        rec.g_norm = g.norm();
        return rec;
    }

  private:
    struct MirrorTuple {
        Vector y;
        Vector q;
        double alpha;
        double beta;
        bool applied;  // the rank-two made it into B (not rejected singular)
    };

    // Replay the worker's window flush: remove each stored tuple's rank-two
    // contribution newest-first, per tuple first adding back q q'/beta (a safe
    // Sherman-Morrison step on a PD matrix), then subtracting y y'/alpha.
    // Unwinding newest-first retraces the worker's BFGS chain backwards, so
    // every intermediate matrix is a sum of valid chain states and stays PD.
    // Returns true when a flush was mirrored.
    bool mirror_flush_if_full(int worker_id) {
        auto& fifo = mirror_[worker_id];
        if (fifo.size() < opt_.mirror_capacity) return false;
        while (!fifo.empty()) {
            const MirrorTuple e = std::move(fifo.back());
            fifo.pop_back();
            if (!e.applied) continue;
            const Matrix saved = B_inv;
            const Vector bq = B_inv * e.q;
            B_inv -= (bq * bq.transpose()) / (e.beta + e.q.dot(bq));
            const Vector by = B_inv * e.y;
            const double yby = by.dot(e.y);
            const double denom = e.alpha - yby;
            if (!(denom >= opt_.denom_tol * std::max(std::abs(e.alpha), std::abs(yby)))) {
                B_inv = saved;  // roll back; leave this tuple's terms in B
                ++singular_rejections;
                continue;
            }
            B_inv += (by * by.transpose()) / denom;
        }
        B_inv = 0.5 * (B_inv + B_inv.transpose().eval());
        return true;
    }

    MasterOptions opt_;
    std::unordered_map<int, std::deque<MirrorTuple>> mirror_;
};

// From-scratch consistency check of the master iterate against
// (sum_i B_i)^{-1} (sum_i B_i z_i - eta sum_i grad f_i(z_i)), with every
// worker estimate materialized densely. Returns 0 before the first step.
template <class WorkerT>
double iterate_residual(const Master& master, const std::vector<WorkerT>& workers,
                        int dense_cap = kDefaultDenseCap) {
    const int d = static_cast<int>(master.x.size());
    if (d > dense_cap) throw dimension_error("iterate_residual above dense cap");
    if (master.t == 0) return 0.0;
    Matrix B_sum = Matrix::Zero(d, d);
    Vector u_ref = Vector::Zero(d);
    Vector g_ref = Vector::Zero(d);
    for (const auto& w : workers) {
        const Matrix B = w.dense_estimate();
        B_sum += B;
        u_ref += B * w.z();
        g_ref += w.local_gradient();
    }
    const Vector x_ref = B_sum.ldlt().solve(u_ref - master.eta * g_ref);
    return (master.x - x_ref).norm();
}

}  // namespace ldqn
