#include "cobo/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cobo/rng.hpp"

namespace cobo {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::Cobo: return "cobo";
        case Algorithm::Local: return "local";
        case Algorithm::FedAvg: return "fedavg";
        case Algorithm::FinetuneFedAvg: return "finetune_fedavg";
        case Algorithm::Ditto: return "ditto";
        case Algorithm::Ifca: return "ifca";
        case Algorithm::Oracle: return "oracle";
    }
    return "cobo";
}

Algorithm algorithm_from_string(const std::string& s) {
    for (Algorithm a : all_algorithms()) {
        if (to_string(a) == s) return a;
    }
    throw std::invalid_argument("unknown algorithm: " + s);
}

const std::vector<Algorithm>& all_algorithms() {
    static const std::vector<Algorithm> algos = {
        Algorithm::Cobo,   Algorithm::Local, Algorithm::FedAvg, Algorithm::FinetuneFedAvg,
        Algorithm::Ditto,  Algorithm::Ifca,  Algorithm::Oracle};
    return algos;
}

Vector initial_point(const TaskFamily& tasks, const TrainConfig& cfg) {
    Vector x0(tasks.model_dim(), 0.0);
    if (cfg.init == TrainConfig::Init::Gaussian) {
        auto rng = substream(cfg.seed, "init");
        std::normal_distribution<double> normal(0.0, cfg.init_scale);
        for (double& x : x0) x = normal(rng);
    }
    return x0;
}

TrainerState make_initial_state(const TaskFamily& tasks, const TrainConfig& cfg) {
    TrainerState state;
    state.X.assign(tasks.num_clients(), initial_point(tasks, cfg));
    state.W = CollaborationMatrix::initial(tasks.num_clients(), cfg.mode);
    state.round = 0;
    return state;
}

namespace {

Vector model_gradient(const TaskFamily& tasks, const TrainConfig& cfg, int round, int client,
                      const Vector& x, std::string_view label = "model") {
    if (cfg.exact_gradients) return tasks.exact_gradient(client, x);
    auto rng = substream(cfg.seed, label, static_cast<std::uint64_t>(round),
                         static_cast<std::uint64_t>(client));
    return tasks.stoch_grad(client, x, cfg.batch, rng).grad;
}

void enforce_verify_invariants(const TrainerState& state, const TaskFamily& tasks,
                               const TrainConfig& cfg) {
    if (!cfg.verify_mode) return;
    for (const Vector& x : state.X) {
        if (!all_finite(x)) throw std::runtime_error("verify mode: non-finite model entries");
    }
    if (const auto* quad = dynamic_cast<const QuadraticFamily*>(&tasks)) {
        const double cap = 1.0 / (2.0 * std::sqrt(3.0) * quad->max_curvature());
        if (cfg.eta > cap * (1.0 + 1e-12)) {
            throw std::runtime_error("verify mode: eta exceeds 1/(2*sqrt(3)*L)");
        }
    }
}

SelectionContext selection_context(const TrainConfig& cfg) {
    SelectionContext ctx;
    ctx.gamma = cfg.gamma;
    ctx.batch = cfg.batch;
    ctx.strategy = cfg.strategy;
    ctx.total_rounds = cfg.rounds;
    ctx.seed = cfg.seed;
    ctx.exact_gradients = cfg.exact_gradients;
    ctx.exact_inner = cfg.exact_inner;
    return ctx;
}

}  // namespace

double auto_scale_gamma(const TaskFamily& tasks, const TrainerState& state,
                        const TrainConfig& cfg) {
    const int n = tasks.num_clients();
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
        const int j_start = cfg.mode == WeightMode::Simplex ? i : i + 1;
        for (int j = j_start; j < n; ++j) {
            double a;
            if (cfg.exact_gradients) {
                a = midpoint_alignment_exact(tasks, i, j, state.X);
            } else {
                auto rng_i = substream(cfg.seed, "gamma_calib_i", static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(j));
                auto rng_j = substream(cfg.seed, "gamma_calib_j", static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(j));
                a = midpoint_alignment(tasks, i, j, state.X, cfg.batch, rng_i, rng_j);
            }
            sum += std::abs(a);
            ++count;
        }
    }
    const double mean_abs = count > 0 ? sum / count : 0.0;
    if (mean_abs < 1e-12) return cfg.gamma;
    return 1.0 / (2.0 * mean_abs);
}

void model_update_pass(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg) {
    const int n = tasks.num_clients();
    std::vector<Vector> next(n);
    for (int i = 0; i < n; ++i) {
        Vector step = model_gradient(tasks, cfg, state.round, i, state.X[i]);
        if (cfg.rho > 0.0) {
            for (int k = 0; k < n; ++k) {
                if (k == i) continue;
                const double w = state.W.at(i, k);
                if (w == 0.0) continue;
                const double pull = cfg.rho * w;
                for (std::size_t m = 0; m < step.size(); ++m) {
                    step[m] += pull * (state.X[i][m] - state.X[k][m]);
                }
            }
        }
        next[i] = state.X[i];
        axpy(-cfg.eta, step, next[i]);
    }
    state.X = std::move(next);
    state.round += 1;
    enforce_verify_invariants(state, tasks, cfg);
}

void cobo_round(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg) {
    client_selection_pass(state.X, state.W, tasks, selection_context(cfg), state.round);
    model_update_pass(state, tasks, cfg);
}

void local_round(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg) {
    const int n = tasks.num_clients();
    for (int i = 0; i < n; ++i) {
        Vector g = model_gradient(tasks, cfg, state.round, i, state.X[i]);
        axpy(-cfg.eta, g, state.X[i]);
    }
    state.round += 1;
    enforce_verify_invariants(state, tasks, cfg);
}

void fedavg_round(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg) {
    const int n = tasks.num_clients();
    Vector mean_grad(tasks.model_dim(), 0.0);
    for (int i = 0; i < n; ++i) {
        axpy(1.0 / n, model_gradient(tasks, cfg, state.round, i, state.X[0]), mean_grad);
    }
    Vector shared = state.X[0];
    axpy(-cfg.eta, mean_grad, shared);
    for (Vector& x : state.X) x = shared;
    state.round += 1;
    enforce_verify_invariants(state, tasks, cfg);
}

void ditto_round(TrainerState& state, Vector& global, const TaskFamily& tasks,
                 const TrainConfig& cfg) {
    const int n = tasks.num_clients();
    // Personal and global models advance simultaneously from the round-t snapshot.
    Vector mean_grad(tasks.model_dim(), 0.0);
    for (int i = 0; i < n; ++i) {
        axpy(1.0 / n, model_gradient(tasks, cfg, state.round, i, global, "ditto_global"),
             mean_grad);
    }
    for (int i = 0; i < n; ++i) {
        Vector step = model_gradient(tasks, cfg, state.round, i, state.X[i]);
        for (std::size_t m = 0; m < step.size(); ++m) {
            step[m] += cfg.ditto_lambda * (state.X[i][m] - global[m]);
        }
        axpy(-cfg.eta, step, state.X[i]);
    }
    axpy(-cfg.eta, mean_grad, global);
    state.round += 1;
    enforce_verify_invariants(state, tasks, cfg);
}

std::vector<Vector> make_ifca_centers(const TaskFamily& tasks, const TrainerState& state,
                                      const TrainConfig& cfg) {
    const int k = cfg.ifca_k > 0 ? cfg.ifca_k : tasks.layout().num_clusters();
    std::vector<Vector> centers(k, state.X[0]);
    if (cfg.ifca_center_scale > 0.0) {
        for (int m = 0; m < k; ++m) {
            auto rng = substream(cfg.seed, "ifca_centers", static_cast<std::uint64_t>(m));
            std::normal_distribution<double> normal(0.0, cfg.ifca_center_scale);
            for (double& x : centers[m]) x += normal(rng);
        }
    }
    return centers;
}

void ifca_round(TrainerState& state, std::vector<Vector>& centers, const TaskFamily& tasks,
                const TrainConfig& cfg) {
    const int n = tasks.num_clients();
    const int k = static_cast<int>(centers.size());
    std::vector<int> adopted(n, 0);
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int m = 0; m < k; ++m) {
            double loss;
            if (cfg.exact_gradients) {
                loss = tasks.objective(i, centers[m]);
            } else {
                auto rng = substream(cfg.seed, "ifca_eval", static_cast<std::uint64_t>(state.round),
                                     static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(m));
                loss = tasks.stoch_loss(i, centers[m], cfg.batch, rng);
            }
            if (loss < best) {  // strict: ties keep the lowest center index
                best = loss;
                adopted[i] = m;
            }
        }
    }
    std::vector<Vector> grad_sum(k, Vector(tasks.model_dim(), 0.0));
    std::vector<int> adopters(k, 0);
    for (int i = 0; i < n; ++i) {
        const int m = adopted[i];
        axpy(1.0, model_gradient(tasks, cfg, state.round, i, centers[m]), grad_sum[m]);
        ++adopters[m];
    }
    for (int m = 0; m < k; ++m) {
        if (adopters[m] == 0) continue;
        axpy(-cfg.eta / adopters[m], grad_sum[m], centers[m]);
    }
    for (int i = 0; i < n; ++i) state.X[i] = centers[adopted[i]];
    state.round += 1;
    enforce_verify_invariants(state, tasks, cfg);
}

void oracle_round(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg) {
    const ClusterLayout& layout = tasks.layout();
    for (const auto& members : layout.cluster_members) {
        if (members.empty()) continue;
        Vector mean_grad(tasks.model_dim(), 0.0);
        const Vector& shared = state.X[members.front()];
        for (int i : members) {
            axpy(1.0 / static_cast<double>(members.size()),
                 model_gradient(tasks, cfg, state.round, i, shared), mean_grad);
        }
        Vector next = shared;
        axpy(-cfg.eta, mean_grad, next);
        for (int i : members) state.X[i] = next;
    }
    state.round += 1;
    enforce_verify_invariants(state, tasks, cfg);
}

MetricsRecord measure_round(int round, const TrainerState& state, const TaskFamily& tasks,
                            bool track_w) {
    const int n = tasks.num_clients();
    const ClusterLayout& layout = tasks.layout();
    MetricsRecord rec;
    rec.round = round;
    rec.per_client_loss.resize(n);
    rec.per_client_grad_norm_sq.resize(n);
    for (int i = 0; i < n; ++i) {
        rec.per_client_loss[i] = tasks.eval_loss(i, state.X[i]);
        rec.per_client_grad_norm_sq[i] = norm_sq(tasks.exact_gradient(i, state.X[i]));
    }
    rec.per_cluster_consensus.resize(layout.num_clusters());
    rec.per_cluster_pair_grad_norm.assign(layout.num_clusters(), kNaN);
    const bool pair_metrics = tasks.cheap_exact_gradients();
    double pair_sum = 0.0;
    for (int k = 0; k < layout.num_clusters(); ++k) {
        rec.per_cluster_consensus[k] = consensus_distance(state.X, layout.cluster_members[k]);
        if (pair_metrics) {
            rec.per_cluster_pair_grad_norm[k] =
                pair_grad_norm_avg(state.X, layout.cluster_members[k], tasks);
            pair_sum += rec.per_cluster_pair_grad_norm[k];
        }
    }
    rec.pair_grad_norm_avg = pair_metrics ? pair_sum / layout.num_clusters() : kNaN;
    rec.recovery_error = (track_w && state.W.mode() == WeightMode::Box)
                             ? recovery_error(state.W, layout)
                             : kNaN;
    if (tasks.has_accuracy()) {
        rec.accuracy.resize(n);
        for (int i = 0; i < n; ++i) rec.accuracy[i] = tasks.accuracy(i, state.X[i]);
    }
    return rec;
}

RunResult run_experiment(Algorithm kind, const TaskFamily& tasks, const TrainConfig& base_cfg,
                         const RoundObserver& observer, bool keep_records) {
    base_cfg.validate();
    TrainConfig cfg = base_cfg;
    if (kind == Algorithm::Cobo && cfg.gamma_auto_scale) {
        TrainerState probe = make_initial_state(tasks, cfg);
        cfg.gamma = auto_scale_gamma(tasks, probe, cfg);
    }

    TrainerState state = make_initial_state(tasks, cfg);
    Vector ditto_global;
    std::vector<Vector> ifca_centers;
    if (kind == Algorithm::Ditto) ditto_global = state.X[0];
    if (kind == Algorithm::Ifca) ifca_centers = make_ifca_centers(tasks, state, cfg);

    const bool track_w = kind == Algorithm::Cobo;
    const int snapshot_every = cfg.effective_snapshot_every();
    RunResult result;
    result.gamma_used = cfg.gamma;

    auto record_round = [&](int round) {
        MetricsRecord rec = measure_round(round, state, tasks, track_w);
        if (observer) observer(rec, state);
        if (keep_records) result.records.push_back(std::move(rec));
        if (track_w && (round % snapshot_every == 0 || round == cfg.rounds)) {
            result.snapshots.emplace_back(round, state.W);
        }
    };

    record_round(0);
    const int finetune_switch =
        static_cast<int>(std::llround(cfg.finetune_split * static_cast<double>(cfg.rounds)));
    for (int t = 0; t < cfg.rounds; ++t) {
        switch (kind) {
            case Algorithm::Cobo: cobo_round(state, tasks, cfg); break;
            case Algorithm::Local: local_round(state, tasks, cfg); break;
            case Algorithm::FedAvg: fedavg_round(state, tasks, cfg); break;
            case Algorithm::FinetuneFedAvg:
                if (t < finetune_switch) {
                    fedavg_round(state, tasks, cfg);
                } else {
                    local_round(state, tasks, cfg);
                }
                break;
            case Algorithm::Ditto: ditto_round(state, ditto_global, tasks, cfg); break;
            case Algorithm::Ifca: ifca_round(state, ifca_centers, tasks, cfg); break;
            case Algorithm::Oracle: oracle_round(state, tasks, cfg); break;
        }
        record_round(t + 1);
    }
    result.final_w = state.W;
    return result;
}

}  // namespace cobo
