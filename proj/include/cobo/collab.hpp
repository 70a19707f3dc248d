#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cobo/tasks.hpp"
#include "cobo/vec.hpp"

namespace cobo {

enum class WeightMode { Box, Simplex };

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& s);

// Collaboration weights W. Box mode keeps entries in [0,1] and W symmetric
// (initialized all-ones); Simplex mode keeps every row on the probability
// simplex (initialized uniform). Diagonal entries are stored but have no
// effect on model updates.
class CollaborationMatrix {
public:
    CollaborationMatrix() = default;
    static CollaborationMatrix initial(int n, WeightMode mode);

    int size() const { return n_; }
    WeightMode mode() const { return mode_; }

    double at(int i, int j) const { return w_[static_cast<std::size_t>(i) * n_ + j]; }
    void set(int i, int j, double v) { w_[static_cast<std::size_t>(i) * n_ + j] = v; }

    std::span<const double> row(int i) const { return {w_.data() + static_cast<std::size_t>(i) * n_, static_cast<std::size_t>(n_)}; }
    void set_row(int i, std::span<const double> r);

    const std::vector<double>& entries() const { return w_; }  // row-major

    bool box_valid() const;      // entries in [0,1] and symmetric
    bool simplex_valid(double tol = 1e-9) const;

private:
    int n_ = 0;
    WeightMode mode_ = WeightMode::Box;
    std::vector<double> w_;
};

// Pair-sampling schedules of the client-selection pass.
struct SamplingStrategy {
    enum class Kind { EveryPair, Constant, TimeDependent, Mixed };
    Kind kind = Kind::Constant;
    double p = -1.0;                // Constant probability; < 0 means 1/n
    double c0 = -1.0;               // TimeDependent scale; < 0 means T/n * switch_fraction * e
    double switch_fraction = 0.002;  // Mixed: constant phase length as a fraction of T

    static SamplingStrategy every_pair() { return {Kind::EveryPair, -1.0, -1.0, 0.002}; }
    static SamplingStrategy constant(double prob = -1.0) { return {Kind::Constant, prob, -1.0, 0.002}; }
    static SamplingStrategy time_dependent(double scale = -1.0) { return {Kind::TimeDependent, -1.0, scale, 0.002}; }
    static SamplingStrategy mixed(double sw = 0.002, double scale = -1.0) { return {Kind::Mixed, -1.0, scale, sw}; }

    // Per-pair inclusion probability at round t (n clients, horizon T).
    double pair_probability(int t, int n, int T) const;

    std::string name() const;
};

// Unordered pairs (i < j), each included independently with the strategy's
// probability at round t. EveryPair returns all n(n-1)/2 pairs.
std::vector<std::pair<int, int>> sample_pairs(const SamplingStrategy& strategy, int t, int n,
                                              int T, std::mt19937_64& rng);

// <g_i(z), g_j(z)> with z = (x_i + x_j)/2 and independent stochastic gradients
// from the two streams. For i == j this is ||g_i(x_i)||^2 from a single draw.
double midpoint_alignment(const TaskFamily& tasks, int i, int j, const std::vector<Vector>& X,
                          int batch, std::mt19937_64& rng_i, std::mt19937_64& rng_j);

// Same alignment with exact gradients (theory regime; sigma plays no role).
double midpoint_alignment_exact(const TaskFamily& tasks, int i, int j,
                                const std::vector<Vector>& X);

// Projected scalar step of the box-mode weight update.
double update_weight_box(double w, double alignment, double gamma);

// Projected row step of the simplex-mode weight update.
Vector update_row_simplex(const Vector& row, const Vector& alignments, double gamma);

struct SelectionContext {
    double gamma = 1e-3;     // effective step (auto-scaling resolved by the caller)
    int batch = 1;
    SamplingStrategy strategy;
    int total_rounds = 1;    // T
    std::uint64_t seed = 0;
    bool exact_gradients = false;  // full-gradient alignments
    bool exact_inner = false;      // Box only: w <- argmax in {0,1} instead of a projected step
};

// One client-selection pass over a frozen model snapshot. Box mode writes each
// sampled pair's update to both w_ij and w_ji; Simplex mode re-projects every
// row that had at least one sampled partner (self entry included, z_ii = x_i;
// unsampled columns contribute zero gradient this round).
void client_selection_pass(const std::vector<Vector>& X, CollaborationMatrix& W,
                           const TaskFamily& tasks, const SelectionContext& ctx, int round);

}  // namespace cobo
