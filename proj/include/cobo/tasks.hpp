#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "cobo/vec.hpp"

namespace cobo {

// Ground-truth partition of clients into clusters.
struct ClusterLayout {
    std::vector<int> assignment;                    // client -> cluster index
    std::vector<std::vector<int>> cluster_members;  // cluster -> client list

    static ClusterLayout from_assignment(std::vector<int> assignment);
    int num_clients() const { return static_cast<int>(assignment.size()); }
    int num_clusters() const { return static_cast<int>(cluster_members.size()); }
};

struct GradientSample {
    double value = 0.0;  // mini-batch loss estimate
    Vector grad;
    int batch_size = 1;
};

// f(x) = (a/2) ||x - mu||^2 with additive Gaussian gradient noise of total
// second moment sigma^2 / batch. Smoothness constant L equals a.
struct QuadraticTask {
    double curvature = 1.0;  // a > 0
    Vector center;           // mu
    double noise_sigma = 0.0;
};

std::pair<double, Vector> quad_value_grad(const QuadraticTask& task, const Vector& x);
GradientSample quad_stoch_grad(const QuadraticTask& task, const Vector& x, int batch,
                               std::mt19937_64& rng);

struct LabeledSample {
    Vector x;
    int label = 0;  // raw mixture component index; the task permutation maps it to the target
};

// Linear softmax classification over a shared Gaussian mixture; the client's
// cluster permutation is applied to raw labels when computing loss/accuracy.
struct ClassificationTask {
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> holdout;
    std::vector<int> label_perm;
    int n_classes = 2;
    int feature_dim = 1;

    int param_dim() const { return n_classes * (feature_dim + 1); }
};

// Mean cross-entropy over the batch and its exact gradient w.r.t. the flattened
// parameters (n_classes rows of [weights..., bias]). Throws on empty batch.
std::pair<double, Vector> softmax_value_grad(const ClassificationTask& task, const Vector& params,
                                             std::span<const LabeledSample> batch);

// Holdout accuracy; argmax ties resolve to the lowest class index.
double eval_accuracy(const ClassificationTask& task, const Vector& params);

// Uniform oracle interface the round operations train against.
class TaskFamily {
public:
    virtual ~TaskFamily() = default;

    virtual int num_clients() const = 0;
    virtual int model_dim() const = 0;
    virtual const ClusterLayout& layout() const = 0;

    // Exact training objective and its gradient.
    virtual double objective(int client, const Vector& x) const = 0;
    virtual Vector exact_gradient(int client, const Vector& x) const = 0;

    // Unbiased stochastic oracles (Assumption-2 style).
    virtual GradientSample stoch_grad(int client, const Vector& x, int batch,
                                      std::mt19937_64& rng) const = 0;
    virtual double stoch_loss(int client, const Vector& x, int batch,
                              std::mt19937_64& rng) const = 0;

    // Loss reported in metrics (holdout CE for classification, objective for quadratics).
    virtual double eval_loss(int client, const Vector& x) const { return objective(client, x); }

    virtual bool has_accuracy() const { return false; }
    virtual double accuracy(int /*client*/, const Vector& /*x*/) const { return 0.0; }

    // Midpoint pair-gradient metrics are evaluated every round only where exact
    // gradients are cheap (quadratics); the theory module requires quadratics anyway.
    virtual bool cheap_exact_gradients() const { return false; }
};

class QuadraticFamily final : public TaskFamily {
public:
    QuadraticFamily(std::vector<QuadraticTask> tasks, ClusterLayout layout);

    int num_clients() const override { return static_cast<int>(tasks_.size()); }
    int model_dim() const override { return static_cast<int>(tasks_.front().center.size()); }
    const ClusterLayout& layout() const override { return layout_; }

    double objective(int client, const Vector& x) const override;
    Vector exact_gradient(int client, const Vector& x) const override;
    GradientSample stoch_grad(int client, const Vector& x, int batch,
                              std::mt19937_64& rng) const override;
    double stoch_loss(int client, const Vector& x, int batch, std::mt19937_64& rng) const override;
    bool cheap_exact_gradients() const override { return true; }

    const QuadraticTask& task(int client) const { return tasks_.at(client); }
    const std::vector<QuadraticTask>& tasks() const { return tasks_; }
    double max_curvature() const;          // smoothness constant L
    double noise_sigma() const;            // shared Assumption-2 sigma

private:
    std::vector<QuadraticTask> tasks_;
    ClusterLayout layout_;
};

class ClassificationFamily final : public TaskFamily {
public:
    ClassificationFamily(std::vector<ClassificationTask> tasks, ClusterLayout layout);

    int num_clients() const override { return static_cast<int>(tasks_.size()); }
    int model_dim() const override { return tasks_.front().param_dim(); }
    const ClusterLayout& layout() const override { return layout_; }

    double objective(int client, const Vector& x) const override;
    Vector exact_gradient(int client, const Vector& x) const override;
    GradientSample stoch_grad(int client, const Vector& x, int batch,
                              std::mt19937_64& rng) const override;
    double stoch_loss(int client, const Vector& x, int batch, std::mt19937_64& rng) const override;
    double eval_loss(int client, const Vector& x) const override;
    bool has_accuracy() const override { return true; }
    double accuracy(int client, const Vector& x) const override;

    const ClassificationTask& task(int client) const { return tasks_.at(client); }

private:
    std::vector<ClassificationTask> tasks_;
    ClusterLayout layout_;
};

// K clusters of c clients each. Cluster centers sit on distinct coordinate axes
// scaled by `separation` plus a seeded jitter of magnitude separation/100; the
// minimum pairwise center distance is enforced by rescaling. Requires d >= K.
QuadraticFamily make_clustered_quadratics(int clusters, int per_cluster, int dim,
                                          std::pair<double, double> curvature_range,
                                          double separation, double sigma, std::uint64_t seed);

// One shared Gaussian mixture; cluster k relabels classes with pi_k where
// pi_0 = identity and pi_k(y) != pi_k'(y) for every class when k != k'
// (requires K <= n_classes). Each cluster's pooled sample set is split
// uniformly at random among its c clients.
ClassificationFamily make_label_permuted_classification(int clusters, int per_cluster, int dim,
                                                        int n_classes, int n_per_client,
                                                        std::uint64_t seed);

}  // namespace cobo
