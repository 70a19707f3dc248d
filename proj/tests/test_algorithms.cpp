#include <doctest.h>

#include <cmath>

#include "cobo/algorithms.hpp"
#include "cobo/experiment.hpp"
#include "cobo/rng.hpp"

using namespace cobo;

namespace {

QuadraticFamily single_task(double a, Vector mu, double sigma = 0.0, int copies = 1) {
    std::vector<QuadraticTask> tasks(copies, QuadraticTask{a, std::move(mu), sigma});
    std::vector<int> assignment(copies, 0);
    return QuadraticFamily(std::move(tasks), ClusterLayout::from_assignment(std::move(assignment)));
}

bool same_records(const std::vector<MetricsRecord>& a, const std::vector<MetricsRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (a[r].per_client_loss != b[r].per_client_loss) return false;
        if (a[r].per_client_grad_norm_sq != b[r].per_client_grad_norm_sq) return false;
        if (a[r].per_cluster_consensus != b[r].per_cluster_consensus) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("cobo round: worked update") {
    std::vector<QuadraticTask> tasks(2, QuadraticTask{1.0, Vector{0.0, 0.0}, 0.0});
    const QuadraticFamily fam(std::move(tasks), ClusterLayout::from_assignment({0, 0}));
    TrainConfig cfg;
    cfg.eta = 0.1;
    cfg.rho = 1.0;
    cfg.gamma = 0.01;
    cfg.rounds = 1;
    cfg.strategy = SamplingStrategy::every_pair();
    TrainerState state = make_initial_state(fam, cfg);
    state.X = {{1.0, 0.0}, {-1.0, 0.0}};
    cobo_round(state, fam, cfg);
    // Midpoint sits at the shared center, so the selection pass leaves w at 1
    // and the model step is x1 - eta*(grad + rho*(x1 - x2)).
    CHECK(state.W.at(0, 1) == 1.0);
    CHECK(state.X[0] == Vector{0.7, 0.0});
    CHECK(state.X[1] == Vector{-0.7, 0.0});
}

TEST_CASE("weight phase runs before the model phase") {
    std::vector<QuadraticTask> tasks;
    tasks.push_back({1.0, Vector{0.0, 0.0}, 0.0});
    tasks.push_back({1.0, Vector{2.0, 0.0}, 0.0});
    const QuadraticFamily fam(std::move(tasks), ClusterLayout::from_assignment({0, 1}));
    TrainConfig cfg;
    cfg.eta = 0.1;
    cfg.rho = 1.0;
    cfg.gamma = 2.0;  // one negative alignment zeroes the weight
    cfg.rounds = 1;
    cfg.strategy = SamplingStrategy::every_pair();
    TrainerState state = make_initial_state(fam, cfg);
    state.X = {{1.0, 0.5}, {1.0, -0.5}};
    // Alignment at the midpoint (1,0) is -1, so w drops to 0 before the model
    // step; with stale weights the penalty would pull the second coordinates.
    cobo_round(state, fam, cfg);
    CHECK(state.W.at(0, 1) == 0.0);
    CHECK(state.X[0] == Vector{0.9, 0.45});
    CHECK(state.X[1] == Vector{0.9, -0.45});
}

TEST_CASE("local round basics") {
    SUBCASE("distance to the center halves at eta = 1/(2a) * ... ") {
        const auto fam = single_task(1.0, Vector{3.0, -1.0});
        TrainConfig cfg;
        cfg.eta = 0.5;
        TrainerState state = make_initial_state(fam, cfg);
        state.X = {{7.0, -1.0}};
        double dist = std::sqrt(dist_sq(state.X[0], fam.task(0).center));
        for (int t = 0; t < 6; ++t) {
            local_round(state, fam, cfg);
            const double next = std::sqrt(dist_sq(state.X[0], fam.task(0).center));
            CHECK(next == doctest::Approx(0.5 * dist).epsilon(1e-12));
            dist = next;
        }
    }
    SUBCASE("zero step size leaves the state unchanged") {
        const auto fam = single_task(1.0, Vector{3.0, -1.0}, 0.4);
        TrainConfig cfg;
        cfg.eta = 0.0;
        TrainerState state = make_initial_state(fam, cfg);
        state.X = {{7.0, 2.0}};
        local_round(state, fam, cfg);
        CHECK(state.X[0] == Vector{7.0, 2.0});
    }
    SUBCASE("cobo with rho = 0 matches local bit-exactly") {
        const auto fam = make_clustered_quadratics(2, 2, 5, {0.8, 1.2}, 3.0, 0.3, 17);
        TrainConfig cfg;
        cfg.eta = 0.1;
        cfg.rho = 0.0;
        cfg.rounds = 40;
        cfg.seed = 123;
        cfg.strategy = SamplingStrategy::every_pair();
        const RunResult a = run_experiment(Algorithm::Cobo, fam, cfg);
        const RunResult b = run_experiment(Algorithm::Local, fam, cfg);
        CHECK(same_records(a.records, b.records));
    }
    SUBCASE("n = 1 cobo is plain SGD") {
        const auto fam = single_task(1.0, Vector{2.0}, 0.0);
        TrainConfig cfg;
        cfg.eta = 0.25;
        cfg.rho = 3.0;
        TrainerState state = make_initial_state(fam, cfg);
        state.X = {{10.0}};
        cobo_round(state, fam, cfg);
        CHECK(state.X[0][0] == doctest::Approx(10.0 - 0.25 * (10.0 - 2.0)).epsilon(1e-14));
    }
}

TEST_CASE("fedavg") {
    SUBCASE("symmetric pair converges to the midpoint") {
        std::vector<QuadraticTask> tasks;
        tasks.push_back({1.0, Vector{1.0}, 0.0});
        tasks.push_back({1.0, Vector{-1.0}, 0.0});
        const QuadraticFamily fam(std::move(tasks), ClusterLayout::from_assignment({0, 1}));
        TrainConfig cfg;
        cfg.eta = 0.3;
        TrainerState state = make_initial_state(fam, cfg);
        state.X = {{5.0}, {5.0}};
        for (int t = 0; t < 80; ++t) fedavg_round(state, fam, cfg);
        CHECK(std::abs(state.X[0][0]) <= 1e-9);
        CHECK(state.X[0] == state.X[1]);
    }
    SUBCASE("n = 1 equals local bit-exactly") {
        const auto fam = single_task(1.3, Vector{0.5, 0.5}, 0.7);
        TrainConfig cfg;
        cfg.eta = 0.15;
        cfg.rounds = 30;
        cfg.seed = 5;
        const RunResult a = run_experiment(Algorithm::FedAvg, fam, cfg);
        const RunResult b = run_experiment(Algorithm::Local, fam, cfg);
        CHECK(same_records(a.records, b.records));
    }
    SUBCASE("averaging n unbiased gradients scales the noise by 1/n") {
        const int n = 4;
        const auto fam = single_task(1.0, Vector{0.0, 0.0}, 1.0, n);
        TrainConfig cfg;
        cfg.eta = 0.05;
        cfg.seed = 99;
        TrainerState state = make_initial_state(fam, cfg);
        const int reps = 4000;
        double second_moment = 0.0;
        for (int t = 0; t < reps; ++t) {
            const Vector before = state.X[0];
            const Vector exact = fam.exact_gradient(0, before);
            fedavg_round(state, fam, cfg);
            // Realized step divided by eta is the averaged stochastic gradient.
            Vector used = sub(before, state.X[0]);
            for (double& u : used) u /= cfg.eta;
            second_moment += dist_sq(used, exact);
        }
        second_moment /= reps;
        CHECK(second_moment == doctest::Approx(1.0 / n).epsilon(0.2));  // sigma^2 / n
    }
}

TEST_CASE("fine-tuned fedavg endpoints") {
    const auto fam = make_clustered_quadratics(2, 2, 4, {0.9, 1.1}, 3.0, 0.2, 7);
    TrainConfig cfg;
    cfg.eta = 0.1;
    cfg.rounds = 40;
    cfg.seed = 11;
    SUBCASE("split -> 1 equals fedavg") {
        cfg.finetune_split = 0.999999;
        const RunResult a = run_experiment(Algorithm::FinetuneFedAvg, fam, cfg);
        const RunResult b = run_experiment(Algorithm::FedAvg, fam, cfg);
        CHECK(same_records(a.records, b.records));
    }
    SUBCASE("split -> 0 equals local from the common init") {
        cfg.finetune_split = 1e-9;
        const RunResult a = run_experiment(Algorithm::FinetuneFedAvg, fam, cfg);
        const RunResult b = run_experiment(Algorithm::Local, fam, cfg);
        CHECK(same_records(a.records, b.records));
    }
}

TEST_CASE("fine-tuning recovers the local permutation on label-permuted data") {
    const auto fam = make_label_permuted_classification(2, 2, 5, 4, 120, 13);
    TrainConfig cfg;
    cfg.eta = 0.3;
    cfg.batch = 8;
    cfg.rounds = 400;
    cfg.seed = 2;
    const RunResult ft = run_experiment(Algorithm::FinetuneFedAvg, fam, cfg);
    const RunResult avg = run_experiment(Algorithm::FedAvg, fam, cfg);
    auto mean_acc = [](const RunResult& r) {
        const auto& acc = r.records.back().accuracy;
        double m = 0.0;
        for (double a : acc) m += a;
        return m / static_cast<double>(acc.size());
    };
    CHECK(mean_acc(ft) >= mean_acc(avg));
}

TEST_CASE("ditto") {
    SUBCASE("lambda = 0 personal models follow local exactly") {
        const auto fam = make_clustered_quadratics(2, 1, 3, {0.9, 1.1}, 2.0, 0.4, 19);
        TrainConfig cfg;
        cfg.eta = 0.1;
        cfg.rounds = 25;
        cfg.seed = 3;
        cfg.ditto_lambda = 0.0;
        const RunResult a = run_experiment(Algorithm::Ditto, fam, cfg);
        const RunResult b = run_experiment(Algorithm::Local, fam, cfg);
        CHECK(same_records(a.records, b.records));
    }
    SUBCASE("huge lambda keeps personal models glued to the global") {
        const auto fam = make_clustered_quadratics(2, 1, 3, {1.0, 1.0}, 2.0, 0.0, 4);
        TrainConfig cfg;
        cfg.eta = 1e-7;
        cfg.ditto_lambda = 1e6;
        TrainerState state = make_initial_state(fam, cfg);
        Vector global = state.X[0];
        const Vector global_before = global;
        ditto_round(state, global, fam, cfg);
        // One step from x_i = global: the personal model moves by at most the
        // size of its own gradient step, staying next to the global model.
        for (int i = 0; i < 2; ++i) {
            const double step = std::sqrt(dist_sq(state.X[i], global_before));
            const double own = cfg.eta * std::sqrt(norm_sq(fam.exact_gradient(i, global_before)));
            CHECK(step <= own + 1e-12);
        }
    }
    SUBCASE("identical tasks converge to the common minimizer") {
        const auto fam = single_task(1.0, Vector{2.0, -1.0}, 0.0, 3);
        TrainConfig cfg;
        cfg.eta = 0.2;
        cfg.ditto_lambda = 1.0;
        TrainerState state = make_initial_state(fam, cfg);
        Vector global = state.X[0];
        for (int t = 0; t < 200; ++t) ditto_round(state, global, fam, cfg);
        CHECK(dist_sq(global, fam.task(0).center) <= 1e-10);
        for (const Vector& x : state.X) CHECK(dist_sq(x, fam.task(0).center) <= 1e-10);
    }
}

TEST_CASE("ifca") {
    SUBCASE("k = 1 reduces to fedavg bit-exactly") {
        const auto fam = make_clustered_quadratics(2, 2, 4, {0.9, 1.1}, 3.0, 0.3, 23);
        TrainConfig cfg;
        cfg.eta = 0.1;
        cfg.rounds = 30;
        cfg.seed = 6;
        cfg.ifca_k = 1;
        cfg.ifca_center_scale = 0.0;
        const RunResult a = run_experiment(Algorithm::Ifca, fam, cfg);
        const RunResult b = run_experiment(Algorithm::FedAvg, fam, cfg);
        CHECK(same_records(a.records, b.records));
    }
    SUBCASE("true centers are adopted cluster-by-cluster") {
        const auto fam = make_clustered_quadratics(3, 2, 5, {0.9, 1.1}, 4.0, 0.0, 8);
        TrainConfig cfg;
        cfg.eta = 0.2;
        TrainerState state = make_initial_state(fam, cfg);
        std::vector<Vector> centers;
        for (int k = 0; k < 3; ++k) centers.push_back(fam.task(2 * k).center);
        for (int t = 0; t < 20; ++t) {
            ifca_round(state, centers, fam, cfg);
            for (int i = 0; i < fam.num_clients(); ++i) {
                // Loss at the own-cluster center stays strictly smallest, so the
                // client's model mirrors that center.
                CHECK(state.X[i] == centers[fam.layout().assignment[i]]);
            }
        }
    }
    SUBCASE("symmetric init degenerates to one cluster") {
        const auto fam = make_clustered_quadratics(2, 2, 4, {0.9, 1.1}, 3.0, 0.2, 9);
        TrainConfig cfg;
        cfg.eta = 0.1;
        cfg.ifca_center_scale = 0.0;  // all centers identical
        cfg.seed = 14;
        TrainerState state = make_initial_state(fam, cfg);
        std::vector<Vector> centers = make_ifca_centers(fam, state, cfg);
        const Vector frozen = centers[1];
        for (int t = 0; t < 25; ++t) {
            ifca_round(state, centers, fam, cfg);
            for (int i = 1; i < fam.num_clients(); ++i) CHECK(state.X[i] == state.X[0]);
            CHECK(centers[1] == frozen);  // never adopted, never updated
        }
    }
}

TEST_CASE("oracle") {
    SUBCASE("single cluster equals fedavg bit-exactly") {
        const auto fam = make_clustered_quadratics(1, 3, 4, {0.9, 1.1}, 2.0, 0.3, 25);
        TrainConfig cfg;
        cfg.eta = 0.1;
        cfg.rounds = 30;
        cfg.seed = 7;
        const RunResult a = run_experiment(Algorithm::Oracle, fam, cfg);
        const RunResult b = run_experiment(Algorithm::FedAvg, fam, cfg);
        CHECK(same_records(a.records, b.records));
    }
    SUBCASE("singleton clusters equal local bit-exactly") {
        const auto fam = make_clustered_quadratics(3, 1, 4, {0.9, 1.1}, 2.0, 0.3, 26);
        TrainConfig cfg;
        cfg.eta = 0.1;
        cfg.rounds = 30;
        cfg.seed = 8;
        const RunResult a = run_experiment(Algorithm::Oracle, fam, cfg);
        const RunResult b = run_experiment(Algorithm::Local, fam, cfg);
        CHECK(same_records(a.records, b.records));
    }
    SUBCASE("within-cluster models stay identical") {
        const auto fam = make_clustered_quadratics(2, 3, 4, {0.9, 1.1}, 2.0, 0.2, 27);
        TrainConfig cfg;
        cfg.eta = 0.1;
        cfg.seed = 9;
        TrainerState state = make_initial_state(fam, cfg);
        for (int t = 0; t < 15; ++t) {
            oracle_round(state, fam, cfg);
            for (const auto& members : fam.layout().cluster_members) {
                for (int i : members) CHECK(state.X[i] == state.X[members.front()]);
            }
        }
    }
}

TEST_CASE("run_experiment driver") {
    const auto fam = make_clustered_quadratics(2, 2, 4, {0.9, 1.1}, 3.0, 0.2, 31);
    SUBCASE("T = 0 keeps only the initial record") {
        TrainConfig cfg;
        cfg.rounds = 0;
        const RunResult r = run_experiment(Algorithm::Cobo, fam, cfg);
        CHECK(r.records.size() == 1);
        CHECK(r.records[0].round == 0);
    }
    SUBCASE("same seed reproduces the trajectory exactly") {
        TrainConfig cfg;
        cfg.eta = 0.08;
        cfg.rho = 1.0;
        cfg.rounds = 60;
        cfg.seed = 1234;
        cfg.strategy = SamplingStrategy::constant();
        const RunResult a = run_experiment(Algorithm::Cobo, fam, cfg);
        const RunResult b = run_experiment(Algorithm::Cobo, fam, cfg);
        CHECK(same_records(a.records, b.records));
        CHECK(metrics_csv("cobo", a.records, fam.layout()) ==
              metrics_csv("cobo", b.records, fam.layout()));
    }
    SUBCASE("auto-scaled gamma matches the calibration formula") {
        TrainConfig cfg;
        cfg.exact_gradients = true;
        cfg.gamma_auto_scale = true;
        cfg.rounds = 1;
        TrainerState probe = make_initial_state(fam, cfg);
        double mean_abs = 0.0;
        int count = 0;
        for (int i = 0; i < 4; ++i) {
            for (int j = i + 1; j < 4; ++j) {
                mean_abs += std::abs(midpoint_alignment_exact(fam, i, j, probe.X));
                ++count;
            }
        }
        mean_abs /= count;
        CHECK(auto_scale_gamma(fam, probe, cfg) == doctest::Approx(1.0 / (2.0 * mean_abs)).epsilon(1e-12));
    }
}

TEST_CASE("descent step never increases the penalized objective") {
    auto rng = substream(41, "energy");
    std::normal_distribution<double> normal(0.0, 2.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 5, d = 4;
        std::vector<QuadraticTask> tasks;
        std::vector<int> assignment;
        for (int i = 0; i < n; ++i) {
            Vector mu(d);
            for (double& v : mu) v = normal(rng);
            tasks.push_back({0.5 + unit(rng), std::move(mu), 0.0});
            assignment.push_back(i);
        }
        const QuadraticFamily fam(std::move(tasks), ClusterLayout::from_assignment(assignment));
        TrainConfig cfg;
        cfg.rho = 0.5 + unit(rng);
        const double L = fam.max_curvature();
        cfg.eta = 1.0 / (2.0 * (L + 2.0 * cfg.rho * n));
        cfg.exact_gradients = true;
        TrainerState state = make_initial_state(fam, cfg);
        for (Vector& x : state.X)
            for (double& v : x) v = normal(rng);
        // Random symmetric box weights, frozen during the step.
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const double w = unit(rng);
                state.W.set(i, j, w);
                state.W.set(j, i, w);
            }
        }
        auto outer_objective = [&](const TrainerState& s) {
            double obj = 0.0;
            for (int i = 0; i < n; ++i) obj += fam.objective(i, s.X[i]);
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    obj += 0.5 * cfg.rho * s.W.at(i, j) * dist_sq(s.X[i], s.X[j]);
            return obj;
        };
        const double before = outer_objective(state);
        model_update_pass(state, fam, cfg);
        CHECK(outer_objective(state) <= before + 1e-12);
    }
}

TEST_CASE("verify mode rejects oversized steps and non-finite states") {
    const auto fam = make_clustered_quadratics(1, 2, 3, {1.0, 1.0}, 1.0, 0.0, 1);
    TrainConfig cfg;
    cfg.verify_mode = true;
    cfg.eta = 1.0;  // above 1/(2*sqrt(3)*L)
    TrainerState state = make_initial_state(fam, cfg);
    CHECK_THROWS_AS(local_round(state, fam, cfg), std::runtime_error);
}
