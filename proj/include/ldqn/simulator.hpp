#pragma once

#include "ldqn/master.hpp"
#include "ldqn/types.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <utility>
#include <vector>

namespace ldqn {

// Compute-latency model for one worker round; communication latency is folded
// in (the paper does not separate them). All latencies are strictly positive.
struct DelayModel {
    enum class Kind { Constant, UniformReal, PerWorkerConstant, HeteroRandom };
    Kind kind = Kind::Constant;
    std::vector<double> params = {1.0};
    std::uint64_t seed = 0;
    // Adds a uniform random offset to each worker's first round; with constant
    // latencies this yields a randomly ordered round-robin schedule whose
    // delays stay bounded by n-1.
    bool start_jitter = false;
};

class LatencySampler {
  public:
    LatencySampler(const DelayModel& model, int n) : model_(model), rng_(model.seed) {
        if (model_.kind == DelayModel::Kind::HeteroRandom) {
            const double lo = model_.params.at(0), hi = model_.params.at(1);
            std::uniform_real_distribution<double> u(lo, hi);
            for (int i = 0; i < n; ++i) scales_.push_back(u(rng_));
        }
    }

    double first_offset(int worker) {
        if (!model_.start_jitter) return 0.0;
        std::uniform_real_distribution<double> u(0.0, base(worker));
        return u(rng_);
    }

    double sample(int worker) {
        switch (model_.kind) {
            case DelayModel::Kind::Constant:
            case DelayModel::Kind::PerWorkerConstant:
                return base(worker);
            case DelayModel::Kind::UniformReal: {
                std::uniform_real_distribution<double> u(model_.params.at(0), model_.params.at(1));
                return u(rng_);
            }
            case DelayModel::Kind::HeteroRandom: {
                std::uniform_real_distribution<double> u(0.5, 1.5);
                return scales_.at(static_cast<std::size_t>(worker)) * u(rng_);
            }
        }
        return 1.0;
    }

  private:
    double base(int worker) const {
        if (model_.kind == DelayModel::Kind::PerWorkerConstant)
            return model_.params.at(static_cast<std::size_t>(worker) % model_.params.size());
        return model_.params.at(0);
    }

    DelayModel model_;
    std::mt19937_64 rng_;
    std::vector<double> scales_;
};

struct StopRule {
    std::int64_t max_updates = 1000;
    int max_epochs = -1;        // completed epoch intervals; -1 disables
    double grad_tol = -1.0;     // on ||g||/n; negative disables
};

// Per-worker ordered master-update indices at which that worker's message was
// processed.
struct CommHistory {
    std::vector<std::vector<std::int64_t>> comms;  // comms[i] strictly increasing
};

struct SimEvent {
    std::int64_t t = 0;
    double vtime = 0.0;
    int worker_id = 0;
    StepRecord record;
};

struct SimResult {
    std::vector<SimEvent> events;
    std::vector<Vector> iterates;  // x^0..x^T when recorded
    CommHistory history;
    std::int64_t total_updates = 0;
    int completed_epochs = 0;
    std::vector<std::int64_t> epochs;  // E_1 = 0, E_2, ...
};

// Delay of worker i at master time t: updates elapsed since its last
// processed message at or before t.
inline std::int64_t delay_d(const std::vector<std::int64_t>& comms_i, std::int64_t t) {
    auto it = std::upper_bound(comms_i.begin(), comms_i.end(), t);
    if (it == comms_i.begin()) throw insufficient_history("no communication at or before t");
    return t - *(--it);
}

// Double delay D_i^t = d_i^t + d_i^{t - d_i^t - 1} + 1, spanning the two most
// recent exchanges.
inline std::int64_t delay_D(const std::vector<std::int64_t>& comms_i, std::int64_t t) {
    const std::int64_t d = delay_d(comms_i, t);
    const std::int64_t d_prev = delay_d(comms_i, t - d - 1);
    return d + d_prev + 1;
}

inline std::pair<std::int64_t, std::int64_t> delays(const CommHistory& history, std::int64_t t,
                                                    int worker) {
    const auto& c = history.comms.at(static_cast<std::size_t>(worker));
    return {delay_d(c, t), delay_D(c, t)};
}

// Epoch starts: E_1 = 0, E_{m+1} = min{ t : t - D_i^t >= E_m for all i }.
inline std::vector<std::int64_t> compute_epochs(const CommHistory& history, std::int64_t T) {
    std::vector<std::int64_t> E = {0};
    for (std::int64_t t = 1; t <= T; ++t) {
        bool ok = true;
        for (const auto& c : history.comms) {
            try {
                if (t - delay_D(c, t) < E.back()) {
                    ok = false;
                    break;
                }
            } catch (const insufficient_history&) {
                ok = false;
                break;
            }
        }
        if (ok) E.push_back(t);
    }
    return E;
}

// Epoch interval index m (1-based) with t in [E_m, E_{m+1}); the last interval
// is open-ended.
inline int epoch_of(const std::vector<std::int64_t>& E, std::int64_t t) {
    auto it = std::upper_bound(E.begin(), E.end(), t);
    return static_cast<int>(it - E.begin());
}

struct SimOptions {
    bool record_iterates = false;
    // invoked as snapshot_cb(t) every snapshot_interval master updates
    std::function<void(std::int64_t)> snapshot_cb;
    std::int64_t snapshot_interval = 0;
    // extra stop predicate on (t, x); return true to stop
    std::function<bool(std::int64_t, const Vector&)> stop_cb;
};

// Deterministic event loop: each worker computes on the iterate it last
// received and its message is delivered after a sampled latency; the earliest
// finish (ties by worker id) is processed next and immediately answered with
// the new iterate.
template <class WorkerT>
SimResult run(std::vector<WorkerT>& workers, Master& master, const DelayModel& delay_model,
              const StopRule& stop, const SimOptions& opts = {}) {
    const int n = static_cast<int>(workers.size());
    LatencySampler latency(delay_model, n);

    struct Pending {
        double finish;
        int worker;
        Vector x_received;
        bool operator>(const Pending& o) const {
            return finish > o.finish || (finish == o.finish && worker > o.worker);
        }
    };
    std::priority_queue<Pending, std::vector<Pending>, std::greater<Pending>> queue;
    for (int i = 0; i < n; ++i)
        queue.push({latency.first_offset(i) + latency.sample(i), i, master.x});

    SimResult result;
    result.history.comms.resize(static_cast<std::size_t>(n));
    if (opts.record_iterates) result.iterates.push_back(master.x);

    std::int64_t last_epoch = 0;
    int epoch_count = 0;

    while (master.t < stop.max_updates) {
        Pending ev = queue.top();
        queue.pop();
        WorkerT& w = workers[static_cast<std::size_t>(ev.worker)];
        const WorkerMessage msg = w.step(ev.x_received);
        const StepRecord rec = master.step(msg);

        result.history.comms[static_cast<std::size_t>(ev.worker)].push_back(master.t);
        result.events.push_back({master.t, ev.finish, ev.worker, rec});
        if (opts.record_iterates) result.iterates.push_back(master.x);
        if (opts.snapshot_cb && opts.snapshot_interval > 0 && master.t % opts.snapshot_interval == 0)
            opts.snapshot_cb(master.t);

        // online epoch detection, same recursion as compute_epochs
        bool epoch_done = true;
        for (const auto& c : result.history.comms) {
            if (c.size() < 2 || master.t - delay_D(c, master.t) < last_epoch) {
                epoch_done = false;
                break;
            }
        }
        if (epoch_done) {
            last_epoch = master.t;
            ++epoch_count;
        }

        if (stop.grad_tol > 0.0 && master.g.norm() / n <= stop.grad_tol) break;
        if (stop.max_epochs > 0 && epoch_count >= stop.max_epochs) break;
        if (opts.stop_cb && opts.stop_cb(master.t, master.x)) break;

        queue.push({ev.finish + latency.sample(ev.worker), ev.worker, master.x});
    }

    result.total_updates = master.t;
    result.completed_epochs = epoch_count;
    result.epochs = compute_epochs(result.history, master.t);
    return result;
}

}  // namespace ldqn
