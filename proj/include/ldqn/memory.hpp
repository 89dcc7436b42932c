#pragma once

#include "ldqn/types.hpp"

#include <cmath>
#include <cstddef>
#include <deque>

namespace ldqn {

// Relative threshold below which a step's curvature y's is treated as zero.
inline constexpr double kCurvatureTol = 1e-10;

// One limited-memory record: gradient difference y, the product q = B*s of the
// then-current estimate with the step, and the scalars alpha = y's, beta = s'q.
struct MemoryTuple {
    Vector y;
    Vector q_tilde;
    double alpha = 0.0;
    double beta_tilde = 0.0;
};

// Base scaling of the identity term in the compact estimate.
struct GammaScale {
    double value = 1.0;
};

// FIFO ring of at most `capacity` tuples, oldest first. Together with a
// GammaScale it implicitly represents the estimate
//   B = gamma*I + sum_i [ y_i y_i' / alpha_i - q_i q_i' / beta_i ].
class TupleMemory {
  public:
    explicit TupleMemory(std::size_t capacity) : capacity_(capacity) {}

    void push(MemoryTuple t) {
        if (!(t.alpha > 0.0) || !(t.beta_tilde > 0.0))
            throw invalid_tuple("tuple requires alpha > 0 and beta > 0");
        if (tuples_.size() == capacity_) tuples_.pop_front();
        tuples_.push_back(std::move(t));
    }

    void clear() { tuples_.clear(); }

    std::size_t size() const { return tuples_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return tuples_.empty(); }

    auto begin() const { return tuples_.begin(); }
    auto end() const { return tuples_.end(); }
    const MemoryTuple& operator[](std::size_t i) const { return tuples_[i]; }

    // Bytes held by tuple payloads; the O(m d) worker storage contract.
    std::size_t bytes() const {
        std::size_t b = 0;
        for (const auto& t : tuples_)
            b += sizeof(double) * (static_cast<std::size_t>(t.y.size() + t.q_tilde.size()) + 2);
        return b;
    }

  private:
    std::size_t capacity_;
    std::deque<MemoryTuple> tuples_;
};

inline bool curvature_ok(const Vector& y, const Vector& s, double tol = kCurvatureTol) {
    const double yn = y.norm(), sn = s.norm();
    if (yn == 0.0 || sn == 0.0) return false;
    return y.dot(s) > tol * yn * sn;
}

// gamma = ||y||^2 / (y's), an estimate of the largest local Hessian eigenvalue.
inline GammaScale compute_gamma(const Vector& y, const Vector& s, double tol = kCurvatureTol) {
    const double yn = y.norm(), sn = s.norm();
    if (yn == 0.0 || sn == 0.0) throw degenerate_step("zero y or s in gamma update");
    const double ys = y.dot(s);
    if (ys <= tol * yn * sn) throw curvature_error("nonpositive curvature y's");
    return GammaScale{y.squaredNorm() / ys};
}

// u = gamma*x + sum_i [ (y_i'x/alpha_i) y_i - (q_i'x/beta_i) q_i ], O(m d).
inline Vector lbfgs_apply(const GammaScale& gamma, const TupleMemory& memory, const Vector& x) {
    Vector u = gamma.value * x;
    for (const auto& t : memory) {
        const double c1 = t.y.dot(x) / t.alpha;
        const double c2 = t.q_tilde.dot(x) / t.beta_tilde;
        u.noalias() += c1 * t.y - c2 * t.q_tilde;
    }
    return u;
}

// Dense d x d form of the implicit estimate. Diagnostics and test oracle only;
// never on the production worker path.
inline Matrix materialize(const GammaScale& gamma, const TupleMemory& memory, int d) {
    Matrix B = gamma.value * Matrix::Identity(d, d);
    for (const auto& t : memory) {
        B.noalias() += (t.y * t.y.transpose()) / t.alpha;
        B.noalias() -= (t.q_tilde * t.q_tilde.transpose()) / t.beta_tilde;
    }
    return B;
}

}  // namespace ldqn
