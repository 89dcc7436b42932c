// Experiment runner: configures solver/dataset/delay model, executes a run,
// and emits plot-ready traces plus a diagnostics report.

#include "ldqn/ldqn.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ldqn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct RunConfig {
    std::string solver = "ldqn";
    std::string dataset_path;
    std::string synthetic;  // "d=50,N=2000[,sigma2=..,sparsity=..,seed=..]"
    bool normalize = false;
    double lambda = 0.01;
    int workers = 4;
    int memory = 20;
    double eta = 0.8;
    double gamma0 = 0.0;  // 0: use the smoothness estimate L
    bool rescale_gamma = false;
    std::string delay = "constant:1.0";
    bool start_jitter = false;
    std::uint64_t seed = 1;
    std::int64_t max_updates = 2000;
    int max_epochs = -1;
    double grad_tol = -1.0;
    double subopt_tol = -1.0;
    std::string out_dir = "out";
    std::int64_t snapshot_interval = 25;
    std::int64_t metrics_interval = 1;
    int dense_cap = kDefaultDenseCap;
    bool no_fstar = false;
};

SynthConfig parse_synth_spec(const std::string& spec) {
    SynthConfig cfg;
    cfg.seed = 42;
    std::stringstream ss(spec);
    std::string kv;
    while (std::getline(ss, kv, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--synthetic", "expected key=value: " + kv);
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "d") cfg.d = std::stoi(val);
        else if (key == "N") cfg.N = std::stoull(val);
        else if (key == "sigma2") cfg.noise_sigma2 = std::stod(val);
        else if (key == "sparsity") cfg.sparsity = std::stod(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else throw CLI::ValidationError("--synthetic", "unknown key: " + key);
    }
    if (cfg.d <= 0 || cfg.N == 0) throw CLI::ValidationError("--synthetic", "d and N are required");
    return cfg;
}

DelayModel parse_delay_spec(const std::string& spec, std::uint64_t seed, bool jitter) {
    DelayModel m;
    m.seed = seed;
    m.start_jitter = jitter;
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    m.params.clear();
    if (colon != std::string::npos) {
        std::stringstream ss(spec.substr(colon + 1));
        std::string v;
        while (std::getline(ss, v, ',')) m.params.push_back(std::stod(v));
    }
    if (m.params.empty()) m.params = {1.0};
    if (kind == "constant") m.kind = DelayModel::Kind::Constant;
    else if (kind == "uniform") m.kind = DelayModel::Kind::UniformReal;
    else if (kind == "perworker") m.kind = DelayModel::Kind::PerWorkerConstant;
    else if (kind == "hetrand") m.kind = DelayModel::Kind::HeteroRandom;
    else throw CLI::ValidationError("--delay", "unknown delay model: " + kind);
    if ((m.kind == DelayModel::Kind::UniformReal || m.kind == DelayModel::Kind::HeteroRandom) &&
        m.params.size() != 2)
        throw CLI::ValidationError("--delay", "model needs two parameters lo,hi");
    for (double p : m.params)
        if (!(p > 0.0)) throw CLI::ValidationError("--delay", "latencies must be positive");
    return m;
}

struct SnapshotStats {
    double lambda_d = std::numeric_limits<double>::infinity();
    double lambda_u = 0.0;
    double eps_d = std::numeric_limits<double>::infinity();
    double eps_u = 0.0;
    int count = 0;
    bool valid() const { return count > 0 && lambda_u > 0.0; }
};

struct RunOutput {
    std::vector<TraceRecord> trace;
    std::vector<std::int64_t> epochs;
    int completed_epochs = 0;
    std::int64_t updates = 0;
    int singular_rejections = 0;
    std::size_t peak_worker_bytes = 0;
    SnapshotStats snapshots;
};

// Builds trace rows from recorded iterates; metric columns are filled every
// `interval` rows (and always on the last row).
template <class MetricsFn>
std::vector<TraceRecord> build_trace(const SimResult& sim, const std::vector<std::int64_t>& epochs,
                                     std::int64_t interval, MetricsFn&& metrics) {
    std::vector<TraceRecord> rows;
    for (std::size_t k = 0; k < sim.events.size(); ++k) {
        const auto& ev = sim.events[k];
        TraceRecord r;
        r.t = ev.t;
        r.epoch = epoch_of(epochs, ev.t);
        r.virtual_time = ev.vtime;
        r.worker_id = ev.worker_id;
        if (interval <= 1 || ev.t % interval == 0 || k + 1 == sim.events.size())
            metrics(sim.iterates.at(static_cast<std::size_t>(ev.t)), r);
        rows.push_back(r);
    }
    return rows;
}

template <class WorkerT>
RunOutput run_async(std::vector<WorkerT>& workers, Master& master, const RunConfig& cfg,
                    const std::vector<Shard>& shards, const std::optional<ReferenceSolution>& ref) {
    const int d = static_cast<int>(master.x.size());
    SimOptions opts;
    opts.record_iterates = true;

    RunOutput out;
    auto track_snapshot = [&](std::int64_t) {
        if (d > cfg.dense_cap) return;
        for (const auto& w : workers) {
            const Matrix B = w.dense_estimate();
            Eigen::SelfAdjointEigenSolver<Matrix> es(B, Eigen::EigenvaluesOnly);
            out.snapshots.lambda_d = std::min(out.snapshots.lambda_d, es.eigenvalues().minCoeff());
            out.snapshots.lambda_u = std::max(out.snapshots.lambda_u, es.eigenvalues().maxCoeff());
            try {
                const Matrix H = shard_hessian(shards.at(static_cast<std::size_t>(w.id())),
                                               master.x, cfg.dense_cap);
                const ApproxQuality q = estimate_assumption2(B, H);
                out.snapshots.eps_d = std::min(out.snapshots.eps_d, q.eps_d);
                out.snapshots.eps_u = std::max(out.snapshots.eps_u, q.eps_u);
            } catch (const not_positive_definite&) {
                // estimate drifted indefinite; skip this snapshot
            }
        }
        ++out.snapshots.count;
    };
    if (cfg.snapshot_interval > 0 && d <= cfg.dense_cap) {
        opts.snapshot_cb = track_snapshot;
        opts.snapshot_interval = cfg.snapshot_interval;
    }
    if (cfg.subopt_tol > 0.0 && ref) {
        opts.stop_cb = [&](std::int64_t, const Vector& x) {
            return full_loss(shards, x) - ref->f_star <= cfg.subopt_tol;
        };
    }

    StopRule stop;
    stop.max_updates = cfg.max_updates;
    stop.max_epochs = cfg.max_epochs;
    stop.grad_tol = cfg.grad_tol;

    DelayModel delay = parse_delay_spec(cfg.delay, cfg.seed + 1, cfg.start_jitter);
    SimResult sim = run(workers, master, delay, stop, opts);

    out.epochs = sim.epochs;
    out.completed_epochs = sim.completed_epochs;
    out.updates = sim.total_updates;
    out.singular_rejections = master.singular_rejections;
    for (const auto& w : workers) out.peak_worker_bytes = std::max(out.peak_worker_bytes, w.state_bytes());

    out.trace = build_trace(sim, sim.epochs, cfg.metrics_interval, [&](const Vector& x, TraceRecord& r) {
        r.grad_norm = full_gradient(shards, x).norm();
        if (ref) {
            r.suboptimality = full_loss(shards, x) - ref->f_star;
            r.dist_to_opt = (x - ref->x_star).norm();
        }
    });
    return out;
}

RunOutput run_gd(const RunConfig& cfg, const std::vector<Shard>& shards, const Vector& x0,
                 const std::optional<ReferenceSolution>& ref) {
    RunOutput out;
    Vector x = x0;
    for (std::int64_t t = 1; t <= cfg.max_updates; ++t) {
        x = sync_gd_step(x, shards, cfg.eta);
        TraceRecord r;
        r.t = t;
        r.epoch = t;  // one synchronous pass touches every shard
        r.virtual_time = static_cast<double>(t);
        r.worker_id = 0;
        const double gn = full_gradient(shards, x).norm();
        if (cfg.metrics_interval <= 1 || t % cfg.metrics_interval == 0 || t == cfg.max_updates)
            r.grad_norm = gn;
        if (ref) {
            r.suboptimality = full_loss(shards, x) - ref->f_star;
            r.dist_to_opt = (x - ref->x_star).norm();
        }
        out.trace.push_back(r);
        out.updates = t;
        out.completed_epochs = static_cast<int>(t);
        if (cfg.grad_tol > 0.0 && gn <= cfg.grad_tol) break;
        if (cfg.subopt_tol > 0.0 && ref && out.trace.back().suboptimality <= cfg.subopt_tol) break;
        if (cfg.max_epochs > 0 && t >= cfg.max_epochs) break;
    }
    return out;
}

int do_run(const RunConfig& cfg, const std::string& resolved_config) {
    // dataset
    Dataset ds;
    try {
        if (!cfg.synthetic.empty()) {
            ds = generate_synthetic(parse_synth_spec(cfg.synthetic));
            if (cfg.normalize) normalize_features(ds);
        } else if (!cfg.dataset_path.empty()) {
            ds = load_libsvm_file(cfg.dataset_path, cfg.normalize);
        } else {
            std::cerr << "error: one of --dataset or --synthetic is required\n";
            return kExitConfig;
        }
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }

    if (cfg.solver == "daveqn" && ds.d > cfg.dense_cap) {
        std::cerr << "error: daveqn needs O(d^2) worker memory and d=" << ds.d
                  << " exceeds the dense cap " << cfg.dense_cap
                  << "; use --solver ldqn (O(md) per worker) or raise --dense-cap\n";
        return kExitConfig;
    }

    const char* env_out = std::getenv("LDQN_OUT");
    const fs::path out_dir = env_out ? fs::path(env_out) : fs::path(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    try {
        std::vector<Shard> shards = partition(ds, cfg.workers, cfg.seed, cfg.lambda);
        const SmoothnessConstants constants = global_constants(shards);
        const double gamma0 = cfg.gamma0 > 0.0 ? cfg.gamma0 : constants.L;
        const Vector x0 = Vector::Zero(ds.d);

        std::optional<ReferenceSolution> ref;
        if (!cfg.no_fstar && ds.d <= cfg.dense_cap)
            ref = reference_solve(shards, x0, 1e-12, 200, cfg.dense_cap);

        RunOutput out;
        if (cfg.solver == "gd") {
            out = run_gd(cfg, shards, x0, ref);
        } else if (cfg.solver == "ldqn") {
            // Closed-loop runs freeze gamma: the master's incremental B
            // recursion never observes per-step gamma changes, so re-scaling
            // desynchronizes the two sides (--rescale-gamma re-enables it for
            // experimentation). The master mirrors the workers' window
            // flushes to keep B equal to the summed worker estimates.
            WorkerOptions wopt;
            wopt.rescale_gamma = cfg.rescale_gamma;
            std::vector<Worker<Shard>> workers;
            std::vector<Vector> grads;
            for (int i = 0; i < cfg.workers; ++i) {
                workers.emplace_back(i, shards[static_cast<std::size_t>(i)],
                                     static_cast<std::size_t>(cfg.memory), x0, gamma0, wopt);
                grads.push_back(workers.back().local_gradient());
            }
            MasterOptions mopt;
            mopt.mirror_capacity = static_cast<std::size_t>(cfg.memory);
            Master master = Master::init(x0, cfg.eta, gamma0, grads, mopt);
            out = run_async(workers, master, cfg, shards, ref);
        } else if (cfg.solver == "daveqn") {
            std::vector<DenseBfgsWorker<Shard>> workers;
            std::vector<Vector> grads;
            for (int i = 0; i < cfg.workers; ++i) {
                workers.emplace_back(i, shards[static_cast<std::size_t>(i)], x0, gamma0,
                                     kCurvatureTol, cfg.dense_cap);
                grads.push_back(workers.back().local_gradient());
            }
            Master master = Master::init(x0, cfg.eta, gamma0, grads);
            out = run_async(workers, master, cfg, shards, ref);
        } else {
            std::cerr << "error: unknown solver '" << cfg.solver << "'\n";
            return kExitConfig;
        }

        // trace
        {
            std::ofstream tf(out_dir / "trace.csv", std::ios::binary);
            write_trace_csv(tf, out.trace);
        }
        // resolved config
        {
            std::ofstream cf(out_dir / "config.resolved", std::ios::binary);
            cf << resolved_config;
        }
        // diagnostics report
        json report;
        report["solver"] = cfg.solver;
        report["d"] = ds.d;
        report["N"] = ds.rows.size();
        report["workers"] = cfg.workers;
        report["memory"] = cfg.memory;
        report["eta"] = cfg.eta;
        report["gamma0"] = gamma0;
        report["seed"] = cfg.seed;
        report["mu"] = constants.mu;
        report["L"] = constants.L;
        report["kappa"] = constants.kappa();
        report["updates"] = out.updates;
        report["completed_epochs"] = out.completed_epochs;
        report["singular_rejections"] = out.singular_rejections;
        report["peak_worker_bytes"] = out.peak_worker_bytes;
        if (ref) {
            report["f_star"] = ref->f_star;
            report["reference_grad_norm"] = ref->grad_norm;
            report["final_suboptimality"] = out.trace.empty()
                                                ? nullptr
                                                : json(out.trace.back().suboptimality);
        }
        if (out.snapshots.valid()) {
            const SnapshotStats& s = out.snapshots;
            report["spectrum"] = {{"lambda_d", s.lambda_d}, {"lambda_u", s.lambda_u},
                                  {"snapshots", s.count}};
            if (s.eps_u > 0.0) {
                report["assumption2"] = {{"eps_d", s.eps_d}, {"eps_u", s.eps_u},
                                         {"eps", s.eps_u / s.eps_d}};
                const ConditionCheck c13 = check_condition13(s.eps_u / s.eps_d, constants.kappa());
                report["condition13"] = {{"ok", c13.ok}, {"threshold", c13.threshold}};
                const StepsizeWindow w = stepsize_window(s.eps_d, s.eps_u, constants.kappa());
                report["stepsize_window"] = {{"lo", w.lo}, {"hi", w.hi}, {"empty", w.empty()}};
            }
            if (s.lambda_d > 0.0) {
                const SpectrumBounds b{s.lambda_d, s.lambda_u};
                report["rho_theory"] = {
                    {"sandwich", theoretical_rate(cfg.workers, b, cfg.eta, constants.mu,
                                                  constants.L, RateVariant::Sandwich)},
                    {"displayed_max", theoretical_rate(cfg.workers, b, cfg.eta, constants.mu,
                                                       constants.L, RateVariant::DisplayedMax)}};
            }
        }
        if (!out.epochs.empty()) {
            report["epoch_count"] = out.epochs.size() - 1;
            if (ref && cfg.metrics_interval <= 1 && out.epochs.size() >= 4) {
                std::vector<double> dists;
                dists.reserve(out.trace.size() + 1);
                dists.push_back((Vector::Zero(ds.d) - ref->x_star).norm());
                for (const auto& r : out.trace) dists.push_back(r.dist_to_opt);
                try {
                    const RateReport rr = fit_epoch_rate(dists, out.epochs);
                    report["rho_fitted"] = rr.rho_fitted;
                } catch (const insufficient_epochs&) {
                }
            }
        }
        {
            std::ofstream rf(out_dir / "report.json", std::ios::binary);
            rf << report.dump(2) << "\n";
        }
        std::cout << "wrote " << (out_dir / "trace.csv").string() << " ("
                  << out.trace.size() << " rows, " << out.completed_epochs << " epochs)\n";
        return 0;
    } catch (const dimension_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    }
}

int do_compare(const std::vector<std::string>& files, double tol) {
    std::vector<std::vector<TraceRecord>> traces;
    std::vector<std::string> names;
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) {
            std::cerr << "data error: cannot open " << f << "\n";
            return kExitData;
        }
        try {
            traces.push_back(read_trace_csv(in));
        } catch (const std::exception& e) {
            std::cerr << "data error: " << f << ": " << e.what() << "\n";
            return kExitData;
        }
        names.push_back(f);
    }
    try {
        const auto table = compare_runs(traces, names, tol);
        std::cout << "trace,epochs_to_tol,vtime_to_tol,updates_to_tol,final_suboptimality\n";
        for (const auto& s : table)
            std::cout << s.name << ',' << s.epochs_to_tol << ',' << s.vtime_to_tol << ','
                      << s.updates_to_tol << ',' << s.final_suboptimality << '\n';
        return 0;
    } catch (const incompatible_traces& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"L-DQN experiment runner"};
    app.require_subcommand(1);

    RunConfig cfg;
    CLI::App* run_cmd = app.add_subcommand("run", "execute one experiment");
    run_cmd->set_config("--config");
    run_cmd->add_option("--solver", cfg.solver, "ldqn|daveqn|gd")->capture_default_str();
    run_cmd->add_option("--dataset", cfg.dataset_path, "LIBSVM file (.gz accepted)");
    run_cmd->add_option("--synthetic", cfg.synthetic, "synthetic spec, e.g. d=50,N=2000");
    run_cmd->add_flag("--normalize", cfg.normalize, "min-max normalize features to [0,1]");
    run_cmd->add_option("--lambda", cfg.lambda, "L2 regularization weight")->capture_default_str();
    run_cmd->add_option("--workers", cfg.workers, "worker count n")->check(CLI::PositiveNumber)
        ->capture_default_str();
    run_cmd->add_option("--memory", cfg.memory, "tuple memory capacity m")->check(CLI::PositiveNumber)
        ->capture_default_str();
    run_cmd->add_option("--eta", cfg.eta, "master stepsize")->check(CLI::PositiveNumber)
        ->capture_default_str();
    run_cmd->add_option("--gamma0", cfg.gamma0, "initial estimate scale (0: auto = L)")
        ->capture_default_str();
    run_cmd->add_flag("--rescale-gamma", cfg.rescale_gamma,
                      "re-scale gamma every worker step (desynchronizes the master's "
                      "incremental inverse; off by default)");
    run_cmd->add_option("--delay", cfg.delay,
                        "constant:c | uniform:lo,hi | perworker:c1,c2,... | hetrand:lo,hi")
        ->capture_default_str();
    run_cmd->add_flag("--jitter", cfg.start_jitter, "randomize first-round offsets");
    run_cmd->add_option("--seed", cfg.seed, "master seed")->capture_default_str();
    run_cmd->add_option("--max-updates", cfg.max_updates, "stop after this many master updates")
        ->capture_default_str();
    run_cmd->add_option("--max-epochs", cfg.max_epochs, "stop after this many completed epochs")
        ->capture_default_str();
    run_cmd->add_option("--grad-tol", cfg.grad_tol, "stop when ||g||/n drops below")
        ->capture_default_str();
    run_cmd->add_option("--subopt-tol", cfg.subopt_tol, "stop when f(x)-f* drops below")
        ->capture_default_str();
    run_cmd->add_option("--out", cfg.out_dir, "output directory (env LDQN_OUT overrides)")
        ->capture_default_str();
    run_cmd->add_option("--snapshot-interval", cfg.snapshot_interval,
                        "master updates between diagnostic snapshots")->capture_default_str();
    run_cmd->add_option("--metrics-interval", cfg.metrics_interval,
                        "master updates between metric evaluations")->capture_default_str();
    run_cmd->add_option("--dense-cap", cfg.dense_cap, "max d for dense d x d objects")
        ->capture_default_str();
    run_cmd->add_flag("--no-fstar", cfg.no_fstar, "skip the reference solve");

    std::vector<std::string> compare_files;
    double compare_tol = 1e-4;
    CLI::App* cmp_cmd = app.add_subcommand("compare", "summarize traces sharing an objective");
    cmp_cmd->add_option("traces", compare_files, "trace.csv files")->required()->expected(-1);
    cmp_cmd->add_option("--tol", compare_tol, "suboptimality tolerance")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (run_cmd->parsed()) return do_run(cfg, run_cmd->config_to_str(true, false));
    return do_compare(compare_files, compare_tol);
}
