#pragma once

#include <span>
#include <vector>

namespace cobo {

// Dense model coordinates. Binary operations require equal dimensions and
// throw std::invalid_argument otherwise.
using Vector = std::vector<double>;

double dot(std::span<const double> u, std::span<const double> v);
double norm_sq(std::span<const double> v);
double dist_sq(std::span<const double> u, std::span<const double> v);

Vector add(std::span<const double> u, std::span<const double> v);
Vector sub(std::span<const double> u, std::span<const double> v);
Vector scaled(std::span<const double> v, double s);
Vector midpoint(std::span<const double> u, std::span<const double> v);

// y += a * x
void axpy(double a, std::span<const double> x, Vector& y);

bool all_finite(std::span<const double> v);

// Entrywise clamp into [0, 1]. Idempotent and nonexpansive.
Vector project_box(Vector v);

// Euclidean projection onto the probability simplex {w >= 0, sum w = 1},
// sort-and-threshold construction. Throws on empty input.
Vector project_simplex(const Vector& v);

}  // namespace cobo
