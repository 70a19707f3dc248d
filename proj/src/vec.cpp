#include "cobo/vec.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace cobo {

namespace {
void require_same_dim(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("vector dimension mismatch: " + std::to_string(u.size()) +
                                    " vs " + std::to_string(v.size()));
    }
}
}  // namespace

double dot(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u, v);
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
    return s;
}

double norm_sq(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double dist_sq(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u, v);
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double d = u[k] - v[k];
        s += d * d;
    }
    return s;
}

Vector add(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u, v);
    Vector out(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = u[k] + v[k];
    return out;
}

Vector sub(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u, v);
    Vector out(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = u[k] - v[k];
    return out;
}

Vector scaled(std::span<const double> v, double s) {
    Vector out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] * s;
    return out;
}

Vector midpoint(std::span<const double> u, std::span<const double> v) {
    require_same_dim(u, v);
    Vector out(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = 0.5 * (u[k] + v[k]);
    return out;
}

void axpy(double a, std::span<const double> x, Vector& y) {
    require_same_dim(x, y);
    for (std::size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector project_box(Vector v) {
    for (double& x : v) x = std::clamp(x, 0.0, 1.0);
    return v;
}

Vector project_simplex(const Vector& v) {
    if (v.empty()) throw std::invalid_argument("project_simplex: empty input");
    // Sort descending (stable, so equal keys keep their order and results are
    // deterministic), then find the largest prefix whose uniform shift keeps
    // every kept coordinate positive.
    Vector sorted = v;
    std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
    double prefix_sum = 0.0;
    double shift = 0.0;
    bool found = false;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        prefix_sum += sorted[k];
        const double candidate = (1.0 - prefix_sum) / static_cast<double>(k + 1);
        if (sorted[k] + candidate > 0.0) {
            shift = candidate;
            found = true;
        }
    }
    if (!found) {
        // All candidates failed only for degenerate non-finite input; fall back
        // to the full-support shift.
        shift = (1.0 - prefix_sum) / static_cast<double>(sorted.size());
    }
    Vector out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(v[k] + shift, 0.0);
    return out;
}

}  // namespace cobo
