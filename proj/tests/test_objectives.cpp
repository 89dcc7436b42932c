#include <catch2/catch_amalgamated.hpp>

#include "ldqn/objectives.hpp"

#include <cmath>
#include <random>

using namespace ldqn;

namespace {

SparseRow dense_row(const Vector& a) {
    SparseRow r;
    for (int i = 0; i < a.size(); ++i)
        if (a[i] != 0.0) {
            r.idx.push_back(i);
            r.val.push_back(a[i]);
        }
    return r;
}

Shard random_logistic_shard(std::mt19937_64& rng, int d, int rows, double lambda) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::bernoulli_distribution coin;
    Shard sh;
    sh.dim = d;
    sh.lambda = lambda;
    for (int j = 0; j < rows; ++j) {
        Vector a(d);
        for (int i = 0; i < d; ++i) a[i] = g(rng);
        sh.rows.push_back(dense_row(a));
        sh.labels.push_back(coin(rng) ? 1.0 : -1.0);
    }
    return sh;
}

Vector central_difference(const Shard& sh, const Vector& x, double h) {
    Vector g(x.size());
    for (int i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (shard_loss(sh, xp) - shard_loss(sh, xm)) / (2 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("logistic loss at the origin") {
    std::mt19937_64 rng(3);
    Shard sh = random_logistic_shard(rng, 4, 6, 0.0);
    CHECK(shard_loss(sh, Vector::Zero(4)) == Catch::Approx(std::log(2.0)).margin(1e-15));
    sh.lambda = 2.0;  // regularizer vanishes at the origin
    Shard single = sh;
    single.rows.resize(1);
    single.labels.resize(1);
    CHECK(shard_loss(single, Vector::Zero(4)) == Catch::Approx(std::log(2.0)).margin(1e-15));
}

TEST_CASE("large margins neither overflow nor lose the tail") {
    Shard sh;
    sh.dim = 1;
    sh.lambda = 0.0;
    Vector a(1);
    a << 1.0;
    sh.rows.push_back(dense_row(a));
    sh.labels.push_back(1.0);
    Vector x(1);
    x << 50.0;
    const double loss = shard_loss(sh, x);
    CHECK(std::isfinite(loss));
    CHECK(loss <= 1e-20);
    CHECK(loss > 0.0);
    x << -800.0;  // exp(800) would overflow without the stable form
    CHECK(std::isfinite(shard_loss(sh, x)));
    CHECK(shard_loss(sh, x) == Catch::Approx(800.0).epsilon(1e-12));
}

TEST_CASE("quadratic shard gradient vanishes at the minimizer") {
    Matrix Q(2, 2);
    Q << 2, 0.5, 0.5, 1;
    QuadraticShard sh{Q, Vector::Ones(2)};
    CHECK(shard_gradient(sh, sh.x_star).norm() == 0.0);
    CHECK(shard_hessian(sh, Vector::Random(2)).isApprox(Q));
}

TEST_CASE("gradient matches central differences") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 2 + trial % 5;
        Shard sh = random_logistic_shard(rng, d, 3 + trial % 4, 0.1 * (trial % 3));
        Vector x(d);
        for (int i = 0; i < d; ++i) x[i] = 0.5 * g(rng);
        const Vector grad = shard_gradient(sh, x);
        const Vector fd = central_difference(sh, x, 1e-6);
        CHECK((grad - fd).cwiseAbs().maxCoeff() <= 1e-5);
    }
}

TEST_CASE("regularizer-only shard has gradient lambda x") {
    Shard sh;
    sh.dim = 3;
    sh.lambda = 0.7;
    Vector x(3);
    x << 1, -2, 4;
    CHECK(shard_gradient(sh, x).isApprox(0.7 * x));
    CHECK(shard_hessian(sh, x).isApprox(0.7 * Matrix::Identity(3, 3)));
}

TEST_CASE("logistic Hessian at x=0 for a single row") {
    Shard sh;
    sh.dim = 2;
    sh.lambda = 0.0;
    Vector a(2);
    a << 1, 0;
    sh.rows.push_back(dense_row(a));
    sh.labels.push_back(1.0);
    const Matrix H = shard_hessian(sh, Vector::Zero(2));
    CHECK(H(0, 0) == Catch::Approx(0.25));
    CHECK(H.cwiseAbs().sum() == Catch::Approx(0.25));
}

TEST_CASE("Hessian-vector product matches gradient differences") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    Shard sh = random_logistic_shard(rng, 4, 8, 0.05);
    Vector x(4), v(4);
    for (int i = 0; i < 4; ++i) {
        x[i] = 0.3 * g(rng);
        v[i] = g(rng);
    }
    const double h = 1e-6;
    const Vector hv = shard_hessian(sh, x) * v;
    const Vector fd = (shard_gradient(sh, x + h * v) - shard_gradient(sh, x - h * v)) / (2 * h);
    CHECK((hv - fd).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("dense Hessian refuses above the cap") {
    Shard sh;
    sh.dim = 600;
    sh.lambda = 1.0;
    CHECK_THROWS_AS(shard_hessian(sh, Vector::Zero(600)), dimension_error);
}

TEST_CASE("global constants") {
    SECTION("quadratic eigenvalues are exact") {
        Matrix Q = Vector::LinSpaced(2, 1.0, 4.0).asDiagonal();
        const SmoothnessConstants c = global_constants(std::vector<QuadraticShard>{{Q, Vector::Zero(2)}});
        CHECK(c.mu == Catch::Approx(1.0));
        CHECK(c.L == Catch::Approx(4.0));
        CHECK(c.kappa() == Catch::Approx(4.0));
    }
    SECTION("logistic bound lambda + max ||a||^2 / 4") {
        std::mt19937_64 rng(21);
        Shard sh = random_logistic_shard(rng, 3, 5, 0.1);
        for (auto& r : sh.rows) {  // normalize rows to ||a|| <= 1
            const double n = std::sqrt(r.squared_norm());
            for (auto& v : r.val) v /= n;
        }
        const SmoothnessConstants c = global_constants({sh});
        CHECK(c.mu == Catch::Approx(0.1));
        CHECK(c.L <= 0.35 + 1e-12);
    }
    SECTION("empty rows give mu = L = lambda") {
        Shard sh;
        sh.dim = 2;
        sh.lambda = 1.0;
        const SmoothnessConstants c = global_constants({sh});
        CHECK(c.mu == Catch::Approx(1.0));
        CHECK(c.L == Catch::Approx(1.0));
    }
}

TEST_CASE("strong convexity and smoothness witnesses") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 1.0);
    Shard sh = random_logistic_shard(rng, 4, 10, 0.2);
    const SmoothnessConstants c = global_constants({sh});
    for (int trial = 0; trial < 25; ++trial) {
        Vector x(4), xh(4);
        for (int i = 0; i < 4; ++i) {
            x[i] = g(rng);
            xh[i] = g(rng);
        }
        const double lhs = (shard_gradient(sh, x) - shard_gradient(sh, xh)).dot(x - xh);
        const double dist2 = (x - xh).squaredNorm();
        CHECK(lhs >= c.mu * dist2 - 1e-10);
        CHECK(lhs <= c.L * dist2 + 1e-10);
    }
}

TEST_CASE("reference solve reaches tiny gradients") {
    std::mt19937_64 rng(41);
    std::vector<Shard> shards;
    for (int i = 0; i < 3; ++i) shards.push_back(random_logistic_shard(rng, 5, 6, 0.1));
    const ReferenceSolution sol = reference_solve(shards, Vector::Zero(5));
    CHECK(sol.grad_norm <= 1e-12);
    CHECK(full_loss(shards, sol.x_star) <= full_loss(shards, Vector::Zero(5)));
}
