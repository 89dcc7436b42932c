#pragma once

#include "ldqn/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <vector>

namespace ldqn {

// Extreme generalized eigenvalues of the pencil (H, B): the Hessian
// approximation quality constants.
struct ApproxQuality {
    double eps_d = 0.0;
    double eps_u = 0.0;
    double eps() const { return eps_u / eps_d; }
};

struct SpectrumBounds {
    double lambda_d = 0.0;
    double lambda_u = 0.0;
};

struct ConditionCheck {
    bool ok = false;
    double threshold = 0.0;
};

struct StepsizeWindow {
    double lo = 0.0;
    double hi = 0.0;
    bool empty() const { return !(lo < hi); }
};

enum class RateVariant {
    // max{ |1 - eta L/lambda_d|, |1 - eta mu/lambda_u| }, matching the
    // operator sandwich in the derivation
    Sandwich,
    // the displayed formula, which repeats lambda_d in both terms
    DisplayedMax,
};

struct RateReport {
    double rho_theory = 0.0;
    double rho_fitted = 0.0;
    int epochs_used = 0;
    double eta_lo = 0.0;
    double eta_hi = 0.0;
    bool violation = false;
};

inline ApproxQuality estimate_assumption2(const Matrix& B, const Matrix& H) {
    Eigen::LLT<Matrix> llt(B);
    if (llt.info() != Eigen::Success) throw not_positive_definite("estimate matrix not SPD");
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(H, B, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    ApproxQuality q;
    q.eps_d = ges.eigenvalues().minCoeff();
    q.eps_u = ges.eigenvalues().maxCoeff();
    return q;
}

// Accuracy condition on eps = eps_u/eps_d:
// eps < (1/2)[1 + 1/kappa + sqrt((1 + 1/kappa)^2 + 4/kappa)].
inline ConditionCheck check_condition13(double eps, double kappa) {
    ConditionCheck c;
    const double a = 1.0 + 1.0 / kappa;
    c.threshold = 0.5 * (a + std::sqrt(a * a + 4.0 / kappa));
    c.ok = eps < c.threshold;
    return c;
}

// Certified stepsize interval ( (1/eps_d)(1 - 1/(eps kappa)), 2/(eps_d+eps_u) ).
inline StepsizeWindow stepsize_window(double eps_d, double eps_u, double kappa) {
    StepsizeWindow w;
    const double eps = eps_u / eps_d;
    w.lo = (1.0 / eps_d) * (1.0 - 1.0 / (eps * kappa));
    w.hi = 2.0 / (eps_d + eps_u);
    return w;
}

// Linear epoch rate rho = sqrt(n) * kt/(kt + n - 1) * max{...} with
// kt = lambda_u/lambda_d.
inline double theoretical_rate(int n, const SpectrumBounds& b, double eta, double mu, double L,
                               RateVariant variant = RateVariant::Sandwich) {
    const double kt = b.lambda_u / b.lambda_d;
    const double prefactor = std::sqrt(static_cast<double>(n)) * kt / (kt + n - 1);
    const double term1 = std::abs(1.0 - eta * L / b.lambda_d);
    const double mu_denom = (variant == RateVariant::Sandwich) ? b.lambda_u : b.lambda_d;
    const double term2 = std::abs(1.0 - eta * mu / mu_denom);
    return prefactor * std::max(term1, term2);
}

// Fits the realized per-epoch contraction from distances to the optimum,
// indexed by master time t (dist[0] = ||x^0 - x*||). Epoch intervals are
// [E_m, E_{m+1}) with bound rho^m.
inline RateReport fit_epoch_rate(const std::vector<double>& dist_to_opt,
                                 const std::vector<std::int64_t>& epochs, double rho_theory = -1.0,
                                 bool certified = false) {
    if (epochs.size() < 4) throw insufficient_epochs("need at least 3 completed epochs");
    RateReport r;
    r.rho_theory = rho_theory;
    const double dist0 = dist_to_opt.at(0);
    const std::int64_t T = static_cast<std::int64_t>(dist_to_opt.size()) - 1;
    for (std::size_t m = 1; m + 1 < epochs.size(); ++m) {
        double worst = 0.0;
        for (std::int64_t t = epochs[m]; t < std::min<std::int64_t>(epochs[m + 1], T + 1); ++t)
            worst = std::max(worst, dist_to_opt[static_cast<std::size_t>(t)]);
        const double ratio = (dist0 > 0.0) ? worst / dist0 : 0.0;
        r.rho_fitted = std::max(r.rho_fitted, std::pow(ratio, 1.0 / static_cast<double>(m)));
        if (certified && rho_theory > 0.0 &&
            ratio > std::pow(rho_theory, static_cast<double>(m)) + 1e-9)
            r.violation = true;
        ++r.epochs_used;
    }
    return r;
}

// Literature spectrum bounds lambda_u = (m+d)L and
// lambda_d = mu^{m+d} / ((m+d)L)^{m+d-1}, evaluated in log space since
// lambda_d underflows quickly. Reporting only.
struct LiteratureBounds {
    double lambda_u = 0.0;
    double log_lambda_d = 0.0;
    double lambda_d() const { return std::exp(log_lambda_d); }
};

inline LiteratureBounds literature_lambda_bounds(int m, int d, double mu, double L) {
    LiteratureBounds b;
    const double k = static_cast<double>(m + d);
    b.lambda_u = k * L;
    b.log_lambda_d = k * std::log(mu) - (k - 1.0) * std::log(k * L);
    return b;
}

}  // namespace ldqn
