#include "cobo/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "cobo/rng.hpp"

namespace cobo {

double consensus_distance(const std::vector<Vector>& X, const std::vector<int>& cluster) {
    if (cluster.empty()) throw std::invalid_argument("consensus_distance: empty cluster");
    const double c = static_cast<double>(cluster.size());
    double sum = 0.0;
    for (std::size_t a = 0; a < cluster.size(); ++a) {
        for (std::size_t b = a + 1; b < cluster.size(); ++b) {
            sum += 2.0 * dist_sq(X[cluster[a]], X[cluster[b]]);  // ordered pairs, i = j adds 0
        }
    }
    return sum / (c * c);
}

double midpoint_pair_grad_norm(const TaskFamily& tasks, int i, int j,
                               const std::vector<Vector>& X) {
    if (i == j) return norm_sq(tasks.exact_gradient(i, X[i]));
    const Vector z = midpoint(X[i], X[j]);
    Vector g = tasks.exact_gradient(i, z);
    axpy(1.0, tasks.exact_gradient(j, z), g);
    return 0.25 * norm_sq(g);
}

double pair_grad_norm_avg(const std::vector<Vector>& X, const std::vector<int>& cluster,
                          const TaskFamily& tasks) {
    if (cluster.empty()) throw std::invalid_argument("pair_grad_norm_avg: empty cluster");
    const double c = static_cast<double>(cluster.size());
    double sum = 0.0;
    for (int i : cluster) {
        for (int j : cluster) {
            if (i == j) {
                sum += midpoint_pair_grad_norm(tasks, i, i, X);
            } else if (i < j) {
                sum += 2.0 * midpoint_pair_grad_norm(tasks, i, j, X);  // symmetric in (i, j)
            }
        }
    }
    return sum / (c * c);
}

double recovery_error(const CollaborationMatrix& w, const ClusterLayout& layout,
                      double threshold) {
    if (w.mode() != WeightMode::Box) {
        throw std::invalid_argument("recovery_error applies to box-mode matrices only");
    }
    const int n = w.size();
    if (n != layout.num_clients()) throw std::invalid_argument("recovery_error: layout size mismatch");
    if (n < 2) return 0.0;
    int wrong = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const bool same = layout.assignment[i] == layout.assignment[j];
            const bool connected = w.at(i, j) >= threshold;
            if (same != connected) ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(n * (n - 1));
}

std::vector<PairConstants> collaborativeness_constants(const QuadraticFamily& family) {
    const int n = family.num_clients();
    const int d = family.model_dim();
    const ClusterLayout& layout = family.layout();

    // Seeded sample points for the empirical ratio; the scale covers both the
    // neighborhood of the centers and points well outside the cluster spread.
    double center_scale = 1.0;
    for (const QuadraticTask& t : family.tasks()) {
        center_scale = std::max(center_scale, std::sqrt(norm_sq(t.center)));
    }
    auto rng = substream(0x636f6e7374u, "mpoints");
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr int kPoints = 100;
    std::vector<Vector> points(kPoints, Vector(d));
    for (Vector& p : points) {
        for (double& x : p) x = normal(rng) * 2.0 * center_scale;
    }

    std::vector<PairConstants> out;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            PairConstants pc;
            pc.i = i;
            pc.j = j;
            pc.same_cluster = layout.assignment[i] == layout.assignment[j];
            const QuadraticTask& ti = family.task(i);
            const QuadraticTask& tj = family.task(j);
            if (pc.same_cluster) {
                pc.m_analytic = std::abs(ti.curvature - tj.curvature) / (ti.curvature + tj.curvature);
                double worst = 0.0;
                for (const Vector& p : points) {
                    const Vector gi = quad_value_grad(ti, p).second;
                    const Vector gj = quad_value_grad(tj, p).second;
                    const double denom = norm_sq(add(gi, gj));
                    if (denom < 1e-24) continue;  // excluded where the denominator vanishes
                    worst = std::max(worst, std::sqrt(norm_sq(sub(gi, gj)) / denom));
                }
                pc.m_empirical = worst;
            } else {
                const double ai2 = ti.curvature * ti.curvature;
                const double aj2 = tj.curvature * tj.curvature;
                const double dist = dist_sq(ti.center, tj.center);
                // Exact minimizer of ||grad f_i||^2 + ||grad f_j||^2.
                Vector xstar(d);
                for (int k = 0; k < d; ++k) {
                    xstar[k] = (ai2 * ti.center[k] + aj2 * tj.center[k]) / (ai2 + aj2);
                }
                pc.zeta_numeric = norm_sq(quad_value_grad(ti, xstar).second) +
                                  norm_sq(quad_value_grad(tj, xstar).second);
                pc.zeta_paper = ai2 * aj2 / ((ai2 + aj2) * (ai2 + aj2)) * dist;
            }
            out.push_back(std::move(pc));
        }
    }
    return out;
}

double improved_fraction(std::span<const double> final_losses,
                         std::span<const double> local_baseline_losses) {
    if (final_losses.size() != local_baseline_losses.size()) {
        throw std::invalid_argument("improved_fraction: length mismatch");
    }
    if (final_losses.empty()) return 0.0;
    int improved = 0;
    for (std::size_t i = 0; i < final_losses.size(); ++i) {
        if (final_losses[i] < local_baseline_losses[i]) ++improved;
    }
    return static_cast<double>(improved) / static_cast<double>(final_losses.size());
}

}  // namespace cobo
