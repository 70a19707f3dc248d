#pragma once

#include <string>
#include <vector>

#include "cobo/config.hpp"
#include "cobo/metrics.hpp"
#include "cobo/tasks.hpp"

namespace cobo {

struct TheoryCondition {
    std::string name;
    bool satisfied = false;
    bool gating = true;  // non-gating conditions are reported but do not affect the verdict
    std::string detail;
};

// Per-cluster bound evaluation. Right-hand sides depend only on task constants
// (L, sigma, curvatures, centers), the initial point and the run length; the
// measured left-hand sides are attached after the run.
struct ClusterBoundReport {
    int cluster = 0;
    int size = 0;
    double m_sq = 0.0;         // max same-cluster M_ij^2
    double initial_gap = 0.0;  // S_C = sum over ordered pairs of (f~_ij(z0) - f~*_ij)
    double consensus_rhs = 0.0;
    double gradnorm_rhs = 0.0;
    double corollary_rhs = 0.0;
    double consensus_lhs = 0.0;
    double gradnorm_lhs = 0.0;
    double corollary_lhs = 0.0;
    bool measured = false;
};

struct TheoryReport {
    std::vector<TheoryCondition> conditions;
    std::vector<ClusterBoundReport> clusters;
    double smoothness = 0.0;  // L = max curvature
    double sigma = 0.0;
    double rho = 0.0;
    double eta = 0.0;
    long long rounds = 0;
    std::string regime;  // how the verified run evaluates gradients / the inner problem

    // Worst cluster values, for the headline scalars.
    double consensus_bound_rhs = 0.0;
    double gradnorm_bound_rhs = 0.0;
    double corollary_rhs = 0.0;
    double consensus_lhs = 0.0;
    double gradnorm_lhs = 0.0;
    double corollary_lhs = 0.0;

    bool conditions_ok() const;  // all gating conditions
    bool bounds_hold(double tol = 1e-6) const;
};

// Closed-form minimum of f~_ij = (f_i + f_j)/2 for two quadratics, attained at
// (a_i mu_i + a_j mu_j)/(a_i + a_j).
double quad_pair_min(const QuadraticTask& ti, const QuadraticTask& tj);

// Evaluates the convergence-theorem conditions and bound right-hand sides for a
// quadratic family at the given hyperparameters; left-hand sides stay unset.
TheoryReport theorem_bounds(const QuadraticFamily& family, const Vector& x0, double eta,
                            double rho, int batch, long long rounds);

// Theorem-compliant run configuration derived from task constants: rho at its
// lower bound, eta at its cap, T raised to the step-size balance threshold,
// EveryPair sampling, exact gradients and exact inner solve.
TrainConfig derive_theory_train_config(const QuadraticFamily& family, const TrainConfig& base);

// Streaming accumulator for the three time-averaged left-hand sides.
class TheoryAccumulator {
public:
    TheoryAccumulator(const ClusterLayout& layout, long long total_rounds);
    void observe(const MetricsRecord& rec);
    void finalize(TheoryReport& report) const;

private:
    const ClusterLayout& layout_;
    long long total_rounds_;
    std::vector<double> consensus_sum_;
    std::vector<double> pair_grad_sum_;
    std::vector<double> client_grad_sum_;
    long long consensus_rounds_ = 0;
    long long grad_rounds_ = 0;
};

}  // namespace cobo
