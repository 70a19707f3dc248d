#pragma once

#include <cstdint>
#include <string>

#include "cobo/collab.hpp"

namespace cobo {

// Hyperparameters of one training run. Field names follow the update rules:
// eta is the model step size, gamma the weight step size, rho the penalty.
struct TrainConfig {
    double eta = 0.05;
    double gamma = 1e-3;
    bool gamma_auto_scale = false;  // gamma = 1/(2 * mean |alignment|) over a first full pass
    double rho = 2.0;
    int rounds = 2000;  // T
    int batch = 1;      // b
    SamplingStrategy strategy = SamplingStrategy::constant();
    WeightMode mode = WeightMode::Box;
    double ditto_lambda = 1.0;
    int ifca_k = 0;                  // 0 -> ground-truth number of clusters
    double ifca_center_scale = 0.01;  // seeded center offset; 0 keeps the symmetric init
    std::uint64_t seed = 0;
    int snapshot_every = 0;  // 0 -> max(1, T/20)
    double finetune_split = 0.5;

    enum class Init { Zero, Gaussian };
    Init init = Init::Zero;
    double init_scale = 1.0;

    // Theory-regime switches (set by verify-theory, off for normal runs).
    bool exact_gradients = false;
    bool exact_inner = false;
    bool verify_mode = false;  // enforce eta <= 1/(2*sqrt(3)*L) and finite iterates

    int effective_snapshot_every() const;

    // Throws std::invalid_argument naming the offending field.
    void validate() const;
};

}  // namespace cobo
