#pragma once

#include <span>
#include <vector>

#include "cobo/collab.hpp"
#include "cobo/tasks.hpp"
#include "cobo/vec.hpp"

namespace cobo {

// One round's measurements. recovery_error and pair-gradient fields are NaN
// where not applicable (no box-mode W being trained / non-quadratic tasks).
struct MetricsRecord {
    int round = 0;
    std::vector<double> per_client_loss;
    std::vector<double> per_client_grad_norm_sq;
    std::vector<double> per_cluster_consensus;
    std::vector<double> per_cluster_pair_grad_norm;
    double pair_grad_norm_avg = 0.0;  // mean of the per-cluster values
    double recovery_error = 0.0;
    std::vector<double> accuracy;  // empty when the task has none
};

// (1/c^2) * sum over ordered pairs (i, j) in the cluster, including i = j,
// of ||x_i - x_j||^2.
double consensus_distance(const std::vector<Vector>& X, const std::vector<int>& cluster);

// ||(grad f_i(z) + grad f_j(z)) / 2||^2 at the pair midpoint z = (x_i + x_j)/2.
double midpoint_pair_grad_norm(const TaskFamily& tasks, int i, int j,
                               const std::vector<Vector>& X);

// (1/c^2) * sum over ordered pairs (i, j) in the cluster, including i = j,
// of the midpoint pair-gradient norms. Exact gradients.
double pair_grad_norm_avg(const std::vector<Vector>& X, const std::vector<int>& cluster,
                          const TaskFamily& tasks);

// Fraction of off-diagonal entries on the wrong side of the threshold relative
// to the ground-truth block structure. Box mode only (throws otherwise).
double recovery_error(const CollaborationMatrix& w, const ClusterLayout& layout,
                      double threshold = 0.5);

struct PairConstants {
    int i = 0, j = 0;
    bool same_cluster = false;
    double m_analytic = 0.0;   // |a_i - a_j| / (a_i + a_j), same-cluster pairs
    double m_empirical = 0.0;  // max gradient-difference ratio over sampled points
    double zeta_numeric = 0.0;  // exact min over x of ||grad f_i||^2 + ||grad f_j||^2, cross pairs
    double zeta_paper = 0.0;    // the printed closed form (squared denominator)
};

std::vector<PairConstants> collaborativeness_constants(const QuadraticFamily& family);

// Fraction of clients with final loss strictly below the baseline's.
double improved_fraction(std::span<const double> final_losses,
                         std::span<const double> local_baseline_losses);

}  // namespace cobo
