#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cobo/algorithms.hpp"
#include "cobo/collab.hpp"
#include "cobo/experiment.hpp"
#include "cobo/metrics.hpp"
#include "cobo/tasks.hpp"
#include "cobo/theory.hpp"
#include "cobo/vec.hpp"

namespace py = pybind11;
using namespace cobo;

namespace {

TrainConfig config_with(TrainConfig cfg, const py::kwargs& kwargs) {
    for (auto item : kwargs) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "eta") cfg.eta = py::cast<double>(item.second);
        else if (key == "gamma") cfg.gamma = py::cast<double>(item.second);
        else if (key == "gamma_auto_scale") cfg.gamma_auto_scale = py::cast<bool>(item.second);
        else if (key == "rho") cfg.rho = py::cast<double>(item.second);
        else if (key == "T") cfg.rounds = py::cast<int>(item.second);
        else if (key == "b") cfg.batch = py::cast<int>(item.second);
        else if (key == "mode") cfg.mode = weight_mode_from_string(py::cast<std::string>(item.second));
        else if (key == "ditto_lambda") cfg.ditto_lambda = py::cast<double>(item.second);
        else if (key == "ifca_k") cfg.ifca_k = py::cast<int>(item.second);
        else if (key == "ifca_center_scale") cfg.ifca_center_scale = py::cast<double>(item.second);
        else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(item.second);
        else if (key == "snapshot_every") cfg.snapshot_every = py::cast<int>(item.second);
        else if (key == "finetune_split") cfg.finetune_split = py::cast<double>(item.second);
        else if (key == "strategy") cfg.strategy = py::cast<SamplingStrategy>(item.second);
        else throw std::invalid_argument("unknown TrainConfig field: " + key);
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "collaborative-learning simulator core (alternating weight/model updates, "
              "baselines, metrics and convergence-bound evaluation)";

    m.def("dot", [](const Vector& u, const Vector& v) { return dot(u, v); });
    m.def("project_box", &project_box);
    m.def("project_simplex", &project_simplex);

    py::class_<ClusterLayout>(m, "ClusterLayout")
        .def_static("from_assignment", &ClusterLayout::from_assignment)
        .def_readonly("assignment", &ClusterLayout::assignment)
        .def_readonly("cluster_members", &ClusterLayout::cluster_members)
        .def_property_readonly("num_clients", &ClusterLayout::num_clients)
        .def_property_readonly("num_clusters", &ClusterLayout::num_clusters);

    py::class_<QuadraticTask>(m, "QuadraticTask")
        .def(py::init([](double curvature, Vector center, double noise_sigma) {
                 return QuadraticTask{curvature, std::move(center), noise_sigma};
             }),
             py::arg("curvature"), py::arg("center"), py::arg("noise_sigma") = 0.0)
        .def_readonly("curvature", &QuadraticTask::curvature)
        .def_readonly("center", &QuadraticTask::center)
        .def_readonly("noise_sigma", &QuadraticTask::noise_sigma);
    m.def("quad_value_grad", &quad_value_grad);

    py::class_<TaskFamily>(m, "TaskFamily")
        .def_property_readonly("num_clients", &TaskFamily::num_clients)
        .def_property_readonly("model_dim", &TaskFamily::model_dim)
        .def_property_readonly("layout", &TaskFamily::layout,
                               py::return_value_policy::reference_internal)
        .def("objective", &TaskFamily::objective)
        .def("exact_gradient", &TaskFamily::exact_gradient)
        .def("eval_loss", &TaskFamily::eval_loss)
        .def("accuracy", &TaskFamily::accuracy);

    py::class_<QuadraticFamily, TaskFamily>(m, "QuadraticFamily")
        .def(py::init<std::vector<QuadraticTask>, ClusterLayout>())
        .def_property_readonly("max_curvature", &QuadraticFamily::max_curvature)
        .def_property_readonly("noise_sigma", &QuadraticFamily::noise_sigma)
        .def("task", &QuadraticFamily::task, py::return_value_policy::reference_internal);
    py::class_<ClassificationFamily, TaskFamily>(m, "ClassificationFamily");

    m.def("make_clustered_quadratics", &make_clustered_quadratics, py::arg("clusters"),
          py::arg("per_cluster"), py::arg("dim"), py::arg("curvature_range"),
          py::arg("separation"), py::arg("sigma"), py::arg("seed"));
    m.def("make_label_permuted_classification", &make_label_permuted_classification,
          py::arg("clusters"), py::arg("per_cluster"), py::arg("dim"), py::arg("n_classes"),
          py::arg("n_per_client"), py::arg("seed"));

    py::class_<CollaborationMatrix>(m, "CollaborationMatrix")
        .def_static("initial",
                    [](int n, const std::string& mode) {
                        return CollaborationMatrix::initial(n, weight_mode_from_string(mode));
                    })
        .def_property_readonly("n", &CollaborationMatrix::size)
        .def_property_readonly("mode", [](const CollaborationMatrix& w) { return to_string(w.mode()); })
        .def("at", &CollaborationMatrix::at)
        .def_property_readonly("entries", &CollaborationMatrix::entries);

    py::class_<SamplingStrategy>(m, "SamplingStrategy")
        .def_static("every_pair", &SamplingStrategy::every_pair)
        .def_static("constant", &SamplingStrategy::constant, py::arg("p") = -1.0)
        .def_static("time_dependent", &SamplingStrategy::time_dependent, py::arg("c0") = -1.0)
        .def_static("mixed", &SamplingStrategy::mixed, py::arg("switch_fraction") = 0.002,
                    py::arg("c0") = -1.0)
        .def("pair_probability", &SamplingStrategy::pair_probability)
        .def_property_readonly("name", &SamplingStrategy::name);

    m.def("midpoint_alignment_exact", &midpoint_alignment_exact);
    m.def("update_weight_box", &update_weight_box);
    m.def("update_row_simplex", &update_row_simplex);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init([](const py::kwargs& kwargs) { return config_with(TrainConfig{}, kwargs); }))
        .def("replace", [](const TrainConfig& cfg, const py::kwargs& kwargs) {
            return config_with(cfg, kwargs);
        })
        .def_readonly("eta", &TrainConfig::eta)
        .def_readonly("gamma", &TrainConfig::gamma)
        .def_readonly("rho", &TrainConfig::rho)
        .def_readonly("T", &TrainConfig::rounds)
        .def_readonly("b", &TrainConfig::batch)
        .def_readonly("seed", &TrainConfig::seed);

    py::class_<MetricsRecord>(m, "MetricsRecord")
        .def_readonly("round", &MetricsRecord::round)
        .def_readonly("per_client_loss", &MetricsRecord::per_client_loss)
        .def_readonly("per_client_grad_norm_sq", &MetricsRecord::per_client_grad_norm_sq)
        .def_readonly("per_cluster_consensus", &MetricsRecord::per_cluster_consensus)
        .def_readonly("pair_grad_norm_avg", &MetricsRecord::pair_grad_norm_avg)
        .def_readonly("recovery_error", &MetricsRecord::recovery_error)
        .def_readonly("accuracy", &MetricsRecord::accuracy);

    py::class_<RunResult>(m, "RunResult")
        .def_readonly("records", &RunResult::records)
        .def_readonly("snapshots", &RunResult::snapshots)
        .def_readonly("final_w", &RunResult::final_w)
        .def_readonly("gamma_used", &RunResult::gamma_used);

    m.def(
        "run_experiment",
        [](const std::string& algorithm, const TaskFamily& tasks, const TrainConfig& cfg) {
            return run_experiment(algorithm_from_string(algorithm), tasks, cfg);
        },
        py::arg("algorithm"), py::arg("tasks"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>());

    m.def("consensus_distance", &consensus_distance);
    m.def("recovery_error", &recovery_error, py::arg("w"), py::arg("layout"),
          py::arg("threshold") = 0.5);
    m.def("improved_fraction", [](const std::vector<double>& a, const std::vector<double>& b) {
        return improved_fraction(a, b);
    });

    py::class_<TheoryReport>(m, "TheoryReport")
        .def_property_readonly("conditions_ok", &TheoryReport::conditions_ok)
        .def("bounds_hold", &TheoryReport::bounds_hold, py::arg("tol") = 1e-6)
        .def_readonly("eta", &TheoryReport::eta)
        .def_readonly("rho", &TheoryReport::rho)
        .def_readonly("rounds", &TheoryReport::rounds)
        .def_readonly("consensus_bound_rhs", &TheoryReport::consensus_bound_rhs)
        .def_readonly("gradnorm_bound_rhs", &TheoryReport::gradnorm_bound_rhs)
        .def_readonly("corollary_rhs", &TheoryReport::corollary_rhs)
        .def_readonly("consensus_lhs", &TheoryReport::consensus_lhs)
        .def_readonly("gradnorm_lhs", &TheoryReport::gradnorm_lhs)
        .def_readonly("corollary_lhs", &TheoryReport::corollary_lhs)
        .def("to_json", [](const TheoryReport& r) { return theory_report_json(r).dump(2); });

    m.def(
        "verify_theory",
        [](const QuadraticFamily& family, const TrainConfig& base) {
            const TrainConfig derived = derive_theory_train_config(family, base);
            TheoryReport report =
                theorem_bounds(family, initial_point(family, derived), derived.eta, derived.rho,
                               derived.batch, derived.rounds);
            TheoryAccumulator acc(family.layout(), derived.rounds);
            run_experiment(Algorithm::Cobo, family, derived,
                           [&acc](const MetricsRecord& rec, const TrainerState&) { acc.observe(rec); },
                           false);
            acc.finalize(report);
            return report;
        },
        py::arg("family"), py::arg("base_config"), py::call_guard<py::gil_scoped_release>());

#ifdef COBO_VERSION
    m.attr("__version__") = COBO_VERSION;
#else
    m.attr("__version__") = "dev";
#endif
}
