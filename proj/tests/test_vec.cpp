#include <doctest.h>

#include <cmath>
#include <random>

#include "cobo/rng.hpp"
#include "cobo/vec.hpp"

using namespace cobo;

namespace {

// Independent oracle: minimize ||w - v||^2 over a grid on the simplex, then
// refine around the coarse argmin. Dimensions 2-4.
Vector grid_project_simplex(const Vector& v) {
    const int d = static_cast<int>(v.size());
    REQUIRE(d >= 2);
    REQUIRE(d <= 4);
    auto sweep = [&](const Vector& lo, const Vector& hi, int steps) {
        Vector best;
        double best_obj = std::numeric_limits<double>::infinity();
        std::vector<int> idx(d - 1, 0);
        std::vector<double> w(d);
        while (true) {
            double sum = 0.0;
            for (int k = 0; k < d - 1; ++k) {
                w[k] = lo[k] + (hi[k] - lo[k]) * idx[k] / steps;
                sum += w[k];
            }
            w[d - 1] = 1.0 - sum;
            if (w[d - 1] >= 0.0) {
                bool feasible = true;
                for (int k = 0; k < d - 1; ++k) feasible = feasible && w[k] >= 0.0;
                if (feasible) {
                    const double obj = dist_sq(w, v);
                    if (obj < best_obj) {
                        best_obj = obj;
                        best = w;
                    }
                }
            }
            int k = 0;
            for (; k < d - 1; ++k) {
                if (++idx[k] <= steps) break;
                idx[k] = 0;
            }
            if (k == d - 1) break;
        }
        return best;
    };
    Vector lo(d - 1, 0.0), hi(d - 1, 1.0);
    Vector coarse = sweep(lo, hi, d == 4 ? 100 : 400);
    for (int k = 0; k < d - 1; ++k) {
        lo[k] = std::max(0.0, coarse[k] - 0.03);
        hi[k] = std::min(1.0, coarse[k] + 0.03);
    }
    return sweep(lo, hi, 300);  // refined step well under 1e-3
}

// Exact oracle: enumerate KKT support sets (uniform shift on the support).
Vector enumerate_project_simplex(const Vector& v) {
    const int d = static_cast<int>(v.size());
    Vector best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int mask = 1; mask < (1 << d); ++mask) {
        double sum = 0.0;
        int count = 0;
        for (int k = 0; k < d; ++k) {
            if (mask & (1 << k)) {
                sum += v[k];
                ++count;
            }
        }
        const double shift = (1.0 - sum) / count;
        Vector w(d, 0.0);
        bool feasible = true;
        for (int k = 0; k < d; ++k) {
            if (mask & (1 << k)) {
                w[k] = v[k] + shift;
                feasible = feasible && w[k] >= 0.0;
            }
        }
        if (!feasible) continue;
        const double obj = dist_sq(w, v);
        if (obj < best_obj) {
            best_obj = obj;
            best = w;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("dot products") {
    CHECK(dot(Vector{1, 0}, Vector{0, 1}) == 0.0);
    CHECK(dot(Vector{2, 3}, Vector{2, 3}) == 13.0);
    CHECK(dot(Vector{10, 0}, Vector{8, 0}) == 80.0);
    CHECK(dot(Vector{1, 2}, Vector{3, 4}) == dot(Vector{3, 4}, Vector{1, 2}));
    CHECK_THROWS_AS((void)dot(Vector{1, 2}, Vector{1, 2, 3}), std::invalid_argument);
}

TEST_CASE("box projection clamps and is idempotent") {
    CHECK(project_box({1.5}) == Vector{1.0});
    CHECK(project_box({-0.3}) == Vector{0.0});
    CHECK(project_box({0.4}) == Vector{0.4});

    auto rng = substream(11, "box");
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int rep = 0; rep < 50; ++rep) {
        Vector v(6);
        for (double& x : v) x = normal(rng);
        const Vector once = project_box(v);
        CHECK(project_box(once) == once);
        for (double x : once) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }
}

TEST_CASE("simplex projection: worked examples") {
    const Vector fixed = project_simplex({0.5, 0.5});
    CHECK(fixed[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(fixed[1] == doctest::Approx(0.5).epsilon(1e-14));

    const Vector uniform = project_simplex({1.0, 1.0, 1.0});
    for (double x : uniform) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

    // Uniform shift lambda = 0.1 keeps all coordinates nonnegative, so the
    // projection of [0.3, 0.3, 0.1] is [0.4, 0.4, 0.2]; the grid oracle agrees.
    const Vector v{0.3, 0.3, 0.1};
    const Vector p = project_simplex(v);
    CHECK(p[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(0.2).epsilon(1e-12));
    const Vector g = grid_project_simplex(v);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(p[k] - g[k]) <= 1e-3);
    CHECK(dist_sq(p, v) <= dist_sq(g, v) + 1e-8);

    CHECK_THROWS_AS((void)project_simplex({}), std::invalid_argument);
}

TEST_CASE("simplex projection matches brute-force minimizers on dims 2-4") {
    auto rng = substream(7, "simplex_oracle");
    std::normal_distribution<double> normal(0.0, 1.5);
    for (int d = 2; d <= 4; ++d) {
        for (int rep = 0; rep < 10; ++rep) {
            Vector v(d);
            for (double& x : v) x = normal(rng);
            const Vector p = project_simplex(v);
            const Vector g = grid_project_simplex(v);
            const Vector e = enumerate_project_simplex(v);
            for (int k = 0; k < d; ++k) {
                CHECK(std::abs(p[k] - g[k]) <= 1e-3);
                CHECK(std::abs(p[k] - e[k]) <= 1e-10);
            }
            CHECK(dist_sq(p, v) <= dist_sq(g, v) + 1e-8);
        }
    }
}

TEST_CASE("simplex projection invariants") {
    auto rng = substream(13, "simplex_props");
    std::normal_distribution<double> normal(0.0, 3.0);
    for (int rep = 0; rep < 100; ++rep) {
        Vector u(5), v(5);
        for (double& x : u) x = normal(rng);
        for (double& x : v) x = normal(rng);
        const Vector pu = project_simplex(u);
        const Vector pv = project_simplex(v);
        double sum = 0.0;
        for (double x : pu) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        // Idempotence and nonexpansiveness.
        const Vector twice = project_simplex(pu);
        for (int k = 0; k < 5; ++k) CHECK(std::abs(twice[k] - pu[k]) <= 1e-12);
        CHECK(std::sqrt(dist_sq(pu, pv)) <= std::sqrt(dist_sq(u, v)) + 1e-12);
    }
}
