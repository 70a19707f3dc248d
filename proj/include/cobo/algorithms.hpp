#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cobo/collab.hpp"
#include "cobo/config.hpp"
#include "cobo/metrics.hpp"
#include "cobo/tasks.hpp"

namespace cobo {

enum class Algorithm { Cobo, Local, FedAvg, FinetuneFedAvg, Ditto, Ifca, Oracle };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);
const std::vector<Algorithm>& all_algorithms();

struct TrainerState {
    std::vector<Vector> X;
    CollaborationMatrix W;
    int round = 0;
};

// Common initial point x^0 shared by every client.
Vector initial_point(const TaskFamily& tasks, const TrainConfig& cfg);

// x^0 replicated across clients plus the mode's initial collaboration matrix.
TrainerState make_initial_state(const TaskFamily& tasks, const TrainConfig& cfg);

// gamma = 1/(2 * mean |alignment|) over one full pass at the initial models,
// so a handful of consistent signs saturates a box weight.
double auto_scale_gamma(const TaskFamily& tasks, const TrainerState& state,
                        const TrainConfig& cfg);

// Phase 2 of the round: every x_i steps on its own stochastic gradient plus the
// rho-weighted pull toward neighbors, reading the frozen round-t snapshot.
void model_update_pass(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg);

// Weight update from the frozen X^t first, then model updates with W^{t+1}.
void cobo_round(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg);

// Independent SGD per client; matches cobo_round with rho = 0 bit-exactly.
void local_round(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg);

// One synchronized global SGD step; all clients hold the shared model.
void fedavg_round(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg);

// Global model advanced alongside the personal ones (simultaneous update);
// personal models are pulled toward the previous global with ditto_lambda.
void ditto_round(TrainerState& state, Vector& global, const TaskFamily& tasks,
                 const TrainConfig& cfg);

// Cluster-model baseline: every client adopts the lowest-loss center on a fresh
// batch (ties -> lowest index), centers step on their adopters' mean gradient.
void ifca_round(TrainerState& state, std::vector<Vector>& centers, const TaskFamily& tasks,
                const TrainConfig& cfg);

std::vector<Vector> make_ifca_centers(const TaskFamily& tasks, const TrainerState& state,
                                      const TrainConfig& cfg);

// FedAvg restricted to each ground-truth cluster.
void oracle_round(TrainerState& state, const TaskFamily& tasks, const TrainConfig& cfg);

MetricsRecord measure_round(int round, const TrainerState& state, const TaskFamily& tasks,
                            bool track_w);

struct RunResult {
    std::vector<MetricsRecord> records;
    std::vector<std::pair<int, CollaborationMatrix>> snapshots;
    CollaborationMatrix final_w;
    double gamma_used = 0.0;
};

using RoundObserver = std::function<void(const MetricsRecord&, const TrainerState&)>;

// Full driver: initializes per the config, runs T rounds, records metrics every
// round and W snapshots on the snapshot cadence. Bit-reproducible in the seed.
RunResult run_experiment(Algorithm kind, const TaskFamily& tasks, const TrainConfig& cfg,
                         const RoundObserver& observer = {}, bool keep_records = true);

}  // namespace cobo
