#include "cobo/collab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "cobo/rng.hpp"

namespace cobo {

std::string to_string(WeightMode mode) { return mode == WeightMode::Box ? "box" : "simplex"; }

WeightMode weight_mode_from_string(const std::string& s) {
    if (s == "box") return WeightMode::Box;
    if (s == "simplex") return WeightMode::Simplex;
    throw std::invalid_argument("unknown weight mode: " + s);
}

CollaborationMatrix CollaborationMatrix::initial(int n, WeightMode mode) {
    if (n < 1) throw std::invalid_argument("collaboration matrix needs n >= 1");
    CollaborationMatrix w;
    w.n_ = n;
    w.mode_ = mode;
    const double fill = mode == WeightMode::Box ? 1.0 : 1.0 / static_cast<double>(n);
    w.w_.assign(static_cast<std::size_t>(n) * n, fill);
    return w;
}

void CollaborationMatrix::set_row(int i, std::span<const double> r) {
    if (static_cast<int>(r.size()) != n_) throw std::invalid_argument("row size mismatch");
    std::copy(r.begin(), r.end(), w_.begin() + static_cast<std::size_t>(i) * n_);
}

bool CollaborationMatrix::box_valid() const {
    for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < n_; ++j) {
            const double v = at(i, j);
            if (!(v >= 0.0 && v <= 1.0)) return false;
            if (at(j, i) != v) return false;
        }
    }
    return true;
}

bool CollaborationMatrix::simplex_valid(double tol) const {
    for (int i = 0; i < n_; ++i) {
        double sum = 0.0;
        for (int j = 0; j < n_; ++j) {
            const double v = at(i, j);
            if (v < 0.0) return false;
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
}

double SamplingStrategy::pair_probability(int t, int n, int T) const {
    const double default_p = 1.0 / static_cast<double>(n);
    const double constant_p = p > 0.0 ? p : default_p;
    const double scale = c0 > 0.0
                             ? c0
                             : static_cast<double>(T) * default_p * switch_fraction * std::exp(1.0);
    switch (kind) {
        case Kind::EveryPair:
            return 1.0;
        case Kind::Constant:
            return std::min(1.0, constant_p);
        case Kind::TimeDependent:
            return std::min(1.0, scale / static_cast<double>(t + 1));
        case Kind::Mixed:
            if (static_cast<double>(t) < switch_fraction * static_cast<double>(T)) {
                return std::min(1.0, constant_p);
            }
            return std::min(1.0, scale / static_cast<double>(t + 1));
    }
    return default_p;
}

std::string SamplingStrategy::name() const {
    switch (kind) {
        case Kind::EveryPair: return "every_pair";
        case Kind::Constant: return "constant";
        case Kind::TimeDependent: return "time_dependent";
        case Kind::Mixed: return "mixed";
    }
    return "constant";
}

std::vector<std::pair<int, int>> sample_pairs(const SamplingStrategy& strategy, int t, int n,
                                              int T, std::mt19937_64& rng) {
    if (n < 2) return {};
    std::vector<std::pair<int, int>> pairs;
    if (strategy.kind == SamplingStrategy::Kind::EveryPair) {
        pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
        return pairs;
    }
    const double prob = strategy.pair_probability(t, n, T);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (uniform(rng) < prob) pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

double midpoint_alignment(const TaskFamily& tasks, int i, int j, const std::vector<Vector>& X,
                          int batch, std::mt19937_64& rng_i, std::mt19937_64& rng_j) {
    if (i == j) {
        // Self entry (simplex rows): squared norm of one stochastic gradient at x_i.
        const GradientSample g = tasks.stoch_grad(i, X[i], batch, rng_i);
        return norm_sq(g.grad);
    }
    const Vector z = midpoint(X[i], X[j]);
    const GradientSample gi = tasks.stoch_grad(i, z, batch, rng_i);
    const GradientSample gj = tasks.stoch_grad(j, z, batch, rng_j);
    return dot(gi.grad, gj.grad);
}

double midpoint_alignment_exact(const TaskFamily& tasks, int i, int j,
                                const std::vector<Vector>& X) {
    if (i == j) return norm_sq(tasks.exact_gradient(i, X[i]));
    const Vector z = midpoint(X[i], X[j]);
    return dot(tasks.exact_gradient(i, z), tasks.exact_gradient(j, z));
}

double update_weight_box(double w, double alignment, double gamma) {
    return std::clamp(w + gamma * alignment, 0.0, 1.0);
}

Vector update_row_simplex(const Vector& row, const Vector& alignments, double gamma) {
    if (row.size() != alignments.size()) {
        throw std::invalid_argument("update_row_simplex: dimension mismatch");
    }
    Vector shifted = row;
    for (std::size_t k = 0; k < shifted.size(); ++k) shifted[k] += gamma * alignments[k];
    return project_simplex(shifted);
}

namespace {

double pair_alignment(const std::vector<Vector>& X, const TaskFamily& tasks,
                      const SelectionContext& ctx, int round, int i, int j) {
    if (ctx.exact_gradients) return midpoint_alignment_exact(tasks, i, j, X);
    auto rng_i = substream(ctx.seed, "align_i", static_cast<std::uint64_t>(round),
                           static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    auto rng_j = substream(ctx.seed, "align_j", static_cast<std::uint64_t>(round),
                           static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    return midpoint_alignment(tasks, i, j, X, ctx.batch, rng_i, rng_j);
}

}  // namespace

void client_selection_pass(const std::vector<Vector>& X, CollaborationMatrix& W,
                           const TaskFamily& tasks, const SelectionContext& ctx, int round) {
    const int n = W.size();
    auto pair_rng = substream(ctx.seed, "pairs", static_cast<std::uint64_t>(round));
    const auto pairs = sample_pairs(ctx.strategy, round, n, ctx.total_rounds, pair_rng);
    if (pairs.empty()) return;

    if (W.mode() == WeightMode::Box) {
        for (const auto& [i, j] : pairs) {
            const double alignment = pair_alignment(X, tasks, ctx, round, i, j);
            double w;
            if (ctx.exact_inner) {
                // Exact inner solve: the objective is linear in w, so the argmax
                // sits at a box vertex; zero alignment keeps the current value.
                w = alignment > 0.0 ? 1.0 : (alignment < 0.0 ? 0.0 : W.at(i, j));
            } else {
                w = update_weight_box(W.at(i, j), alignment, ctx.gamma);
            }
            W.set(i, j, w);
            W.set(j, i, w);
        }
        return;
    }

    // Simplex mode: one alignment evaluation per sampled unordered pair feeds
    // both endpoint rows; rows with no sampled partner stay untouched.
    std::vector<Vector> row_alignments(n);
    std::vector<bool> row_touched(n, false);
    auto touch = [&](int i) {
        if (!row_touched[i]) {
            row_touched[i] = true;
            row_alignments[i].assign(n, 0.0);
        }
    };
    for (const auto& [i, j] : pairs) {
        const double alignment = pair_alignment(X, tasks, ctx, round, i, j);
        touch(i);
        touch(j);
        row_alignments[i][j] = alignment;
        row_alignments[j][i] = alignment;
    }
    for (int i = 0; i < n; ++i) {
        if (!row_touched[i]) continue;
        if (ctx.exact_gradients) {
            row_alignments[i][i] = midpoint_alignment_exact(tasks, i, i, X);
        } else {
            auto self_rng = substream(ctx.seed, "align_self", static_cast<std::uint64_t>(round),
                                      static_cast<std::uint64_t>(i));
            auto unused = self_rng;  // single stream; second arg unused for i == j
            row_alignments[i][i] =
                midpoint_alignment(tasks, i, i, X, ctx.batch, self_rng, unused);
        }
        const Vector current(W.row(i).begin(), W.row(i).end());
        W.set_row(i, update_row_simplex(current, row_alignments[i], ctx.gamma));
    }
}

}  // namespace cobo
