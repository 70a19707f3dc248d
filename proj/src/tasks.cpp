#include "cobo/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cobo/rng.hpp"

namespace cobo {

ClusterLayout ClusterLayout::from_assignment(std::vector<int> assignment) {
    ClusterLayout layout;
    layout.assignment = std::move(assignment);
    int max_cluster = -1;
    for (int c : layout.assignment) {
        if (c < 0) throw std::invalid_argument("cluster index must be nonnegative");
        max_cluster = std::max(max_cluster, c);
    }
    layout.cluster_members.resize(max_cluster + 1);
    for (std::size_t i = 0; i < layout.assignment.size(); ++i) {
        layout.cluster_members[layout.assignment[i]].push_back(static_cast<int>(i));
    }
    return layout;
}

std::pair<double, Vector> quad_value_grad(const QuadraticTask& task, const Vector& x) {
    Vector diff = sub(x, task.center);
    const double value = 0.5 * task.curvature * norm_sq(diff);
    for (double& d : diff) d *= task.curvature;
    return {value, std::move(diff)};
}

GradientSample quad_stoch_grad(const QuadraticTask& task, const Vector& x, int batch,
                               std::mt19937_64& rng) {
    if (batch < 1) throw std::invalid_argument("batch size must be >= 1");
    auto [value, grad] = quad_value_grad(task, x);
    if (task.noise_sigma > 0.0) {
        const double d = static_cast<double>(grad.size());
        // Per-coordinate std sigma/sqrt(b*d) makes the total noise second
        // moment exactly sigma^2 / b.
        std::normal_distribution<double> noise(0.0, task.noise_sigma / std::sqrt(batch * d));
        for (double& g : grad) g += noise(rng);
        std::normal_distribution<double> vnoise(0.0,
                                                task.noise_sigma / std::sqrt(static_cast<double>(batch)));
        value += vnoise(rng);
    }
    return GradientSample{value, std::move(grad), batch};
}

std::pair<double, Vector> softmax_value_grad(const ClassificationTask& task, const Vector& params,
                                             std::span<const LabeledSample> batch) {
    const int C = task.n_classes;
    const int d = task.feature_dim;
    if (static_cast<int>(params.size()) != C * (d + 1)) {
        throw std::invalid_argument("softmax params size must be n_classes*(feature_dim+1)");
    }
    if (batch.empty()) throw std::invalid_argument("softmax_value_grad: empty batch");

    double loss = 0.0;
    Vector grad(params.size(), 0.0);
    std::vector<double> logits(C);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const LabeledSample& s : batch) {
        const int target = task.label_perm[s.label];
        double max_logit = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < C; ++c) {
            const double* w = params.data() + static_cast<std::size_t>(c) * (d + 1);
            double z = w[d];
            for (int k = 0; k < d; ++k) z += w[k] * s.x[k];
            logits[c] = z;
            max_logit = std::max(max_logit, z);
        }
        double denom = 0.0;
        for (int c = 0; c < C; ++c) {
            logits[c] = std::exp(logits[c] - max_logit);
            denom += logits[c];
        }
        loss -= inv_b * std::log(logits[target] / denom);
        for (int c = 0; c < C; ++c) {
            const double delta = (logits[c] / denom - (c == target ? 1.0 : 0.0)) * inv_b;
            double* g = grad.data() + static_cast<std::size_t>(c) * (d + 1);
            for (int k = 0; k < d; ++k) g[k] += delta * s.x[k];
            g[d] += delta;
        }
    }
    return {loss, std::move(grad)};
}

double eval_accuracy(const ClassificationTask& task, const Vector& params) {
    if (task.holdout.empty()) throw std::invalid_argument("eval_accuracy: empty holdout");
    const int C = task.n_classes;
    const int d = task.feature_dim;
    int hits = 0;
    for (const LabeledSample& s : task.holdout) {
        int best = 0;
        double best_z = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < C; ++c) {
            const double* w = params.data() + static_cast<std::size_t>(c) * (d + 1);
            double z = w[d];
            for (int k = 0; k < d; ++k) z += w[k] * s.x[k];
            if (z > best_z) {  // strict: ties keep the lowest class index
                best_z = z;
                best = c;
            }
        }
        if (best == task.label_perm[s.label]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(task.holdout.size());
}

QuadraticFamily::QuadraticFamily(std::vector<QuadraticTask> tasks, ClusterLayout layout)
    : tasks_(std::move(tasks)), layout_(std::move(layout)) {
    if (tasks_.empty()) throw std::invalid_argument("QuadraticFamily: no tasks");
    if (layout_.num_clients() != static_cast<int>(tasks_.size())) {
        throw std::invalid_argument("QuadraticFamily: layout size mismatch");
    }
}

double QuadraticFamily::objective(int client, const Vector& x) const {
    return quad_value_grad(tasks_.at(client), x).first;
}

Vector QuadraticFamily::exact_gradient(int client, const Vector& x) const {
    return quad_value_grad(tasks_.at(client), x).second;
}

GradientSample QuadraticFamily::stoch_grad(int client, const Vector& x, int batch,
                                           std::mt19937_64& rng) const {
    return quad_stoch_grad(tasks_.at(client), x, batch, rng);
}

double QuadraticFamily::stoch_loss(int client, const Vector& x, int batch,
                                   std::mt19937_64& rng) const {
    const QuadraticTask& task = tasks_.at(client);
    double value = quad_value_grad(task, x).first;
    if (task.noise_sigma > 0.0) {
        std::normal_distribution<double> vnoise(0.0,
                                                task.noise_sigma / std::sqrt(static_cast<double>(batch)));
        value += vnoise(rng);
    }
    return value;
}

double QuadraticFamily::max_curvature() const {
    double L = 0.0;
    for (const QuadraticTask& t : tasks_) L = std::max(L, t.curvature);
    return L;
}

double QuadraticFamily::noise_sigma() const { return tasks_.front().noise_sigma; }

ClassificationFamily::ClassificationFamily(std::vector<ClassificationTask> tasks,
                                           ClusterLayout layout)
    : tasks_(std::move(tasks)), layout_(std::move(layout)) {
    if (tasks_.empty()) throw std::invalid_argument("ClassificationFamily: no tasks");
    if (layout_.num_clients() != static_cast<int>(tasks_.size())) {
        throw std::invalid_argument("ClassificationFamily: layout size mismatch");
    }
}

double ClassificationFamily::objective(int client, const Vector& x) const {
    const ClassificationTask& t = tasks_.at(client);
    return softmax_value_grad(t, x, t.train).first;
}

Vector ClassificationFamily::exact_gradient(int client, const Vector& x) const {
    const ClassificationTask& t = tasks_.at(client);
    return softmax_value_grad(t, x, t.train).second;
}

GradientSample ClassificationFamily::stoch_grad(int client, const Vector& x, int batch,
                                                std::mt19937_64& rng) const {
    const ClassificationTask& t = tasks_.at(client);
    if (batch < 1) throw std::invalid_argument("batch size must be >= 1");
    std::uniform_int_distribution<std::size_t> pick(0, t.train.size() - 1);
    std::vector<LabeledSample> batch_samples;
    batch_samples.reserve(batch);
    for (int k = 0; k < batch; ++k) batch_samples.push_back(t.train[pick(rng)]);
    auto [value, grad] = softmax_value_grad(t, x, batch_samples);
    return GradientSample{value, std::move(grad), batch};
}

double ClassificationFamily::stoch_loss(int client, const Vector& x, int batch,
                                        std::mt19937_64& rng) const {
    const ClassificationTask& t = tasks_.at(client);
    std::uniform_int_distribution<std::size_t> pick(0, t.train.size() - 1);
    std::vector<LabeledSample> batch_samples;
    batch_samples.reserve(batch);
    for (int k = 0; k < batch; ++k) batch_samples.push_back(t.train[pick(rng)]);
    return softmax_value_grad(t, x, batch_samples).first;
}

double ClassificationFamily::eval_loss(int client, const Vector& x) const {
    const ClassificationTask& t = tasks_.at(client);
    return softmax_value_grad(t, x, t.holdout).first;
}

double ClassificationFamily::accuracy(int client, const Vector& x) const {
    return eval_accuracy(tasks_.at(client), x);
}

namespace {

Vector gaussian_vector(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(dim);
    for (double& x : v) x = normal(rng);
    return v;
}

Vector unit_vector(int dim, std::mt19937_64& rng) {
    Vector v = gaussian_vector(dim, rng);
    const double n = std::sqrt(norm_sq(v));
    if (n < 1e-300) return unit_vector(dim, rng);
    for (double& x : v) x /= n;
    return v;
}

}  // namespace

QuadraticFamily make_clustered_quadratics(int clusters, int per_cluster, int dim,
                                          std::pair<double, double> curvature_range,
                                          double separation, double sigma, std::uint64_t seed) {
    if (clusters < 1) throw std::invalid_argument("clusters must be >= 1");
    if (per_cluster < 1) throw std::invalid_argument("per_cluster must be >= 1");
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    if (!(curvature_range.first > 0.0) || curvature_range.second < curvature_range.first) {
        throw std::invalid_argument("curvature range must satisfy 0 < low <= high");
    }
    if (!(separation > 0.0)) throw std::invalid_argument("separation must be positive");
    if (sigma < 0.0) throw std::invalid_argument("sigma must be nonnegative");
    if (dim < clusters) {
        throw std::invalid_argument("axis-aligned center placement needs dim >= clusters (got dim=" +
                                    std::to_string(dim) + ", clusters=" + std::to_string(clusters) +
                                    ")");
    }

    auto center_rng = substream(seed, "centers");
    std::vector<Vector> centers(clusters);
    for (int k = 0; k < clusters; ++k) {
        Vector c(dim, 0.0);
        c[k] = separation;
        Vector jitter = unit_vector(dim, center_rng);
        axpy(separation / 100.0, jitter, c);
        centers[k] = std::move(c);
    }
    // Jitter can only shave a little off the sqrt(2)*separation axis spacing,
    // but enforce the documented minimum explicitly.
    if (clusters > 1) {
        double min_dist_sq = std::numeric_limits<double>::infinity();
        for (int a = 0; a < clusters; ++a)
            for (int b = a + 1; b < clusters; ++b)
                min_dist_sq = std::min(min_dist_sq, dist_sq(centers[a], centers[b]));
        const double min_dist = std::sqrt(min_dist_sq);
        if (min_dist < separation) {
            const double scale = separation / min_dist * (1.0 + 1e-12);
            for (Vector& c : centers)
                for (double& x : c) x *= scale;
        }
    }

    auto curvature_rng = substream(seed, "curvatures");
    std::uniform_real_distribution<double> curv(curvature_range.first, curvature_range.second);
    std::vector<QuadraticTask> tasks;
    std::vector<int> assignment;
    tasks.reserve(static_cast<std::size_t>(clusters) * per_cluster);
    for (int k = 0; k < clusters; ++k) {
        for (int m = 0; m < per_cluster; ++m) {
            tasks.push_back(QuadraticTask{curv(curvature_rng), centers[k], sigma});
            assignment.push_back(k);
        }
    }
    return QuadraticFamily(std::move(tasks), ClusterLayout::from_assignment(std::move(assignment)));
}

ClassificationFamily make_label_permuted_classification(int clusters, int per_cluster, int dim,
                                                        int n_classes, int n_per_client,
                                                        std::uint64_t seed) {
    if (n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");
    if (clusters < 1 || per_cluster < 1) throw std::invalid_argument("clusters and per_cluster must be >= 1");
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    if (n_per_client < 1) throw std::invalid_argument("n_per_client must be >= 1");
    if (clusters > n_classes) {
        throw std::invalid_argument("cannot build " + std::to_string(clusters) +
                                    " class-wise distinct permutations over " +
                                    std::to_string(n_classes) + " classes");
    }

    // Shared mixture: one unit-variance Gaussian component per class, means on
    // a sphere whose radius keeps the task learnable but not trivial.
    constexpr double kMixtureRadius = 3.0;
    auto mix_rng = substream(seed, "mixture");
    std::vector<Vector> component_means(n_classes);
    for (int y = 0; y < n_classes; ++y) {
        component_means[y] = scaled(unit_vector(dim, mix_rng), kMixtureRadius);
    }

    // pi_k = tau o (shift by k) o tau^{-1}: pi_0 is the identity and two
    // distinct clusters disagree on every class.
    auto perm_rng = substream(seed, "permutations");
    std::vector<int> tau(n_classes);
    std::iota(tau.begin(), tau.end(), 0);
    std::shuffle(tau.begin(), tau.end(), perm_rng);
    std::vector<int> tau_inv(n_classes);
    for (int y = 0; y < n_classes; ++y) tau_inv[tau[y]] = y;
    std::vector<std::vector<int>> perms(clusters, std::vector<int>(n_classes));
    for (int k = 0; k < clusters; ++k) {
        for (int y = 0; y < n_classes; ++y) {
            perms[k][y] = tau[(tau_inv[y] + k) % n_classes];
        }
    }

    const int n_holdout = std::max(1, n_per_client / 5);
    std::vector<ClassificationTask> tasks(static_cast<std::size_t>(clusters) * per_cluster);
    std::vector<int> assignment(tasks.size());

    std::normal_distribution<double> unit_normal(0.0, 1.0);
    auto draw_sample = [&](std::mt19937_64& rng) {
        std::uniform_int_distribution<int> pick_class(0, n_classes - 1);
        LabeledSample s;
        s.label = pick_class(rng);
        s.x = component_means[s.label];
        for (double& x : s.x) x += unit_normal(rng);
        return s;
    };

    for (int k = 0; k < clusters; ++k) {
        auto data_rng = substream(seed, "pool", static_cast<std::uint64_t>(k));
        std::vector<LabeledSample> pool(static_cast<std::size_t>(per_cluster) * n_per_client);
        for (LabeledSample& s : pool) s = draw_sample(data_rng);

        auto split_rng = substream(seed, "split", static_cast<std::uint64_t>(k));
        std::vector<std::size_t> order(pool.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), split_rng);

        for (int m = 0; m < per_cluster; ++m) {
            const int client = k * per_cluster + m;
            ClassificationTask& task = tasks[client];
            task.n_classes = n_classes;
            task.feature_dim = dim;
            task.label_perm = perms[k];
            task.train.reserve(n_per_client);
            for (int s = 0; s < n_per_client; ++s) {
                task.train.push_back(pool[order[static_cast<std::size_t>(m) * n_per_client + s]]);
            }
            auto holdout_rng = substream(seed, "holdout", static_cast<std::uint64_t>(k),
                                         static_cast<std::uint64_t>(m));
            task.holdout.reserve(n_holdout);
            for (int s = 0; s < n_holdout; ++s) task.holdout.push_back(draw_sample(holdout_rng));
            assignment[client] = k;
        }
    }
    return ClassificationFamily(std::move(tasks),
                                ClusterLayout::from_assignment(std::move(assignment)));
}

}  // namespace cobo
