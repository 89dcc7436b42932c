#include <catch2/catch_amalgamated.hpp>

#include "ldqn/simulator.hpp"
#include "ldqn/worker.hpp"

#include <random>

using namespace ldqn;

namespace {

QuadraticShard shard_diag(int d, double lo, double hi, double shift) {
    Matrix Q = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) Q(i, i) = lo + (hi - lo) * i / std::max(1, d - 1);
    Vector xs = Vector::Constant(d, shift);
    return {Q, xs};
}

std::vector<Worker<QuadraticShard>> make_workers(int n, int d, const Vector& x0, double gamma0,
                                                 std::size_t mem = 64) {
    WorkerOptions opt;
    opt.rescale_gamma = false;  // closed-loop runs freeze gamma
    std::vector<Worker<QuadraticShard>> ws;
    for (int i = 0; i < n; ++i)
        ws.emplace_back(i, shard_diag(d, 1.0, 2.0, 0.5 * (i + 1)), mem, x0, gamma0, opt);
    return ws;
}

Master make_master(const std::vector<Worker<QuadraticShard>>& ws, const Vector& x0, double eta,
                   double gamma0, std::size_t mem = 64) {
    std::vector<Vector> grads;
    for (const auto& w : ws) grads.push_back(w.local_gradient());
    MasterOptions opt;
    opt.mirror_capacity = mem;
    return Master::init(x0, eta, gamma0, grads, opt);
}

// Largest realized delay d_i^t over all workers and all t up to T.
std::int64_t realized_max_delay(const CommHistory& h, std::int64_t T) {
    std::int64_t worst = 0;
    for (const auto& c : h.comms) {
        for (std::size_t k = 0; k + 1 < c.size(); ++k) worst = std::max(worst, c[k + 1] - 1 - c[k]);
        if (!c.empty()) worst = std::max(worst, T - c.back());
    }
    return worst;
}

}  // namespace

TEST_CASE("single-worker delay arithmetic on a fixed history") {
    const std::vector<std::int64_t> comms = {1, 5, 7};
    CHECK(delay_d(comms, 1) == 0);
    CHECK(delay_d(comms, 4) == 3);
    CHECK(delay_d(comms, 5) == 0);
    CHECK(delay_d(comms, 6) == 1);
    CHECK(delay_d(comms, 7) == 0);
    CHECK(delay_d(comms, 8) == 1);

    // D^t = d^t + d^{t-d^t-1} + 1 spans back to the second most recent
    // exchange: D^t = t - (previous communication time).
    CHECK(delay_D(comms, 6) == 5);
    CHECK(delay_D(comms, 7) == 2);
    CHECK(delay_D(comms, 8) == 3);

    CHECK_THROWS_AS(delay_d(comms, 0), insufficient_history);
    CHECK(delay_D(comms, 5) == 4);
    CHECK_THROWS_AS(delay_D(comms, 1), insufficient_history);  // needs t-d-1 >= 1
}

TEST_CASE("epoch starts from a fixed history") {
    CommHistory h;
    h.comms = {{1, 5, 7, 9}};
    const auto E = compute_epochs(h, 9);
    REQUIRE(E == std::vector<std::int64_t>{0, 5, 7, 9});

    CHECK(epoch_of(E, 0) == 1);
    CHECK(epoch_of(E, 4) == 1);
    CHECK(epoch_of(E, 5) == 2);
    CHECK(epoch_of(E, 6) == 2);
    CHECK(epoch_of(E, 7) == 3);
    CHECK(epoch_of(E, 9) == 4);
    CHECK(epoch_of(E, 100) == 4);
}

TEST_CASE("constant latency yields a round-robin schedule with delays <= n-1") {
    const int n = 4, d = 3;
    const Vector x0 = Vector::Ones(d);
    auto ws = make_workers(n, d, x0, 2.0);
    Master m = make_master(ws, x0, 0.5, 2.0);
    DelayModel dm;  // constant 1.0, no jitter
    StopRule stop;
    stop.max_updates = 40;
    const SimResult res = run(ws, m, dm, stop);

    REQUIRE(res.total_updates == 40);
    // Ties resolved by worker id: worker i is processed at t = i+1, n+i+1, ...
    for (int i = 0; i < n; ++i) {
        const auto& c = res.history.comms[static_cast<std::size_t>(i)];
        REQUIRE(c.size() == 10);
        for (std::size_t k = 0; k < c.size(); ++k)
            CHECK(c[k] == static_cast<std::int64_t>(k) * n + i + 1);
    }
    CHECK(realized_max_delay(res.history, res.total_updates) <= n - 1);
}

TEST_CASE("start jitter keeps the delay bound n-1 with constant latencies") {
    const int n = 5, d = 2;
    const Vector x0 = Vector::Ones(d);
    auto ws = make_workers(n, d, x0, 2.0);
    Master m = make_master(ws, x0, 0.5, 2.0);
    DelayModel dm;
    dm.start_jitter = true;
    dm.seed = 99;
    StopRule stop;
    stop.max_updates = 60;
    const SimResult res = run(ws, m, dm, stop);
    CHECK(realized_max_delay(res.history, res.total_updates) <= n - 1);
}

TEST_CASE("two workers with per-worker constant latencies interleave as scheduled") {
    // Compute times 1.0 and 3.5: worker 1 finishes at virtual times
    // 3.5, 7.0, ...; worker 0 at every integer, winning the tie at 7.0.
    const int d = 2;
    const Vector x0 = Vector::Ones(d);
    auto ws = make_workers(2, d, x0, 2.0);
    Master m = make_master(ws, x0, 0.5, 2.0);
    DelayModel dm;
    dm.kind = DelayModel::Kind::PerWorkerConstant;
    dm.params = {1.0, 3.5};
    StopRule stop;
    stop.max_updates = 9;
    const SimResult res = run(ws, m, dm, stop);
    CHECK(res.history.comms[0] == std::vector<std::int64_t>{1, 2, 3, 5, 6, 7, 8});
    CHECK(res.history.comms[1] == std::vector<std::int64_t>{4, 9});
}

TEST_CASE("identical seeds replay identically") {
    const int n = 3, d = 4;
    const Vector x0 = Vector::Ones(d);
    DelayModel dm;
    dm.kind = DelayModel::Kind::HeteroRandom;
    dm.params = {0.5, 2.0};
    dm.seed = 7;
    StopRule stop;
    stop.max_updates = 50;
    SimOptions opts;
    opts.record_iterates = true;

    auto ws1 = make_workers(n, d, x0, 2.0);
    Master m1 = make_master(ws1, x0, 0.5, 2.0);
    const SimResult r1 = run(ws1, m1, dm, stop, opts);

    auto ws2 = make_workers(n, d, x0, 2.0);
    Master m2 = make_master(ws2, x0, 0.5, 2.0);
    const SimResult r2 = run(ws2, m2, dm, stop, opts);

    REQUIRE(r1.events.size() == r2.events.size());
    for (std::size_t k = 0; k < r1.events.size(); ++k) {
        CHECK(r1.events[k].worker_id == r2.events[k].worker_id);
        CHECK(r1.events[k].vtime == r2.events[k].vtime);
    }
    REQUIRE(r1.iterates.size() == r2.iterates.size());
    for (std::size_t k = 0; k < r1.iterates.size(); ++k)
        CHECK(r1.iterates[k] == r2.iterates[k]);  // bitwise
    CHECK(m1.x == m2.x);
}

TEST_CASE("every worker communicates at least twice per epoch interval") {
    const int n = 4, d = 3;
    const Vector x0 = Vector::Ones(d);
    auto ws = make_workers(n, d, x0, 2.0);
    Master m = make_master(ws, x0, 0.5, 2.0);
    DelayModel dm;
    dm.kind = DelayModel::Kind::HeteroRandom;
    dm.params = {0.5, 2.0};
    dm.seed = 21;
    StopRule stop;
    stop.max_updates = 300;
    const SimResult res = run(ws, m, dm, stop);

    const auto& E = res.epochs;
    REQUIRE(E.size() >= 4);
    for (std::size_t mth = 0; mth + 1 < E.size(); ++mth) {
        for (const auto& c : res.history.comms) {
            int count = 0;
            for (auto t : c)
                if (t >= E[mth] && t <= E[mth + 1]) ++count;
            CHECK(count >= 2);
        }
    }
}

TEST_CASE("epoch spacing is at most 2d+1 for the realized delay bound") {
    const int n = 3, d = 3;
    const Vector x0 = Vector::Ones(d);
    auto ws = make_workers(n, d, x0, 2.0);
    Master m = make_master(ws, x0, 0.5, 2.0);
    DelayModel dm;
    dm.kind = DelayModel::Kind::UniformReal;
    dm.params = {0.5, 1.5};
    dm.seed = 5;
    StopRule stop;
    stop.max_updates = 400;
    const SimResult res = run(ws, m, dm, stop);

    const std::int64_t dmax = realized_max_delay(res.history, res.total_updates);
    const auto& E = res.epochs;
    REQUIRE(E.size() >= 4);
    for (std::size_t k = 0; k + 1 < E.size(); ++k) CHECK(E[k + 1] - E[k] <= 2 * dmax + 1);
}

TEST_CASE("stop rules cut the run short") {
    const int n = 2, d = 3;
    const Vector x0 = Vector::Ones(d);
    SECTION("gradient tolerance") {
        auto ws = make_workers(n, d, x0, 2.0);
        Master m = make_master(ws, x0, 0.8, 2.0);
        DelayModel dm;
        StopRule stop;
        stop.max_updates = 100000;
        stop.grad_tol = 1e-9;
        const SimResult res = run(ws, m, dm, stop);
        CHECK(res.total_updates < stop.max_updates);
        CHECK(m.g.norm() / n <= 1e-9);
    }
    SECTION("epoch budget") {
        auto ws = make_workers(n, d, x0, 2.0);
        Master m = make_master(ws, x0, 0.5, 2.0);
        DelayModel dm;
        StopRule stop;
        stop.max_updates = 100000;
        stop.max_epochs = 5;
        const SimResult res = run(ws, m, dm, stop);
        CHECK(res.completed_epochs == 5);
        CHECK(res.total_updates < 1000);
    }
}

TEST_CASE("recorded iterates cover x^0 through x^T") {
    const int n = 2, d = 2;
    const Vector x0 = Vector::Ones(d);
    auto ws = make_workers(n, d, x0, 2.0);
    Master m = make_master(ws, x0, 0.5, 2.0);
    DelayModel dm;
    StopRule stop;
    stop.max_updates = 17;
    SimOptions opts;
    opts.record_iterates = true;
    const SimResult res = run(ws, m, dm, stop, opts);
    REQUIRE(res.iterates.size() == 18);
    CHECK(res.iterates[0] == x0);
    CHECK(res.iterates.back() == m.x);
}
