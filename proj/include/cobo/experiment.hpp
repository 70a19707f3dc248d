#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cobo/algorithms.hpp"
#include "cobo/config.hpp"
#include "cobo/tasks.hpp"
#include "cobo/theory.hpp"

namespace cobo {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TaskConfig {
    enum class Kind { ClusteredQuadratics, LabelPermuted };
    Kind kind = Kind::ClusteredQuadratics;
    int clusters = 4;      // K
    int per_cluster = 2;   // c
    int dim = 20;          // d
    double a_lo = 0.9;
    double a_hi = 1.1;
    double separation = 10.0;
    double sigma = 0.1;
    int n_classes = 10;
    int n_per_client = 500;
};

std::unique_ptr<TaskFamily> build_family(const TaskConfig& task, std::uint64_t seed);

struct ExperimentConfig {
    TaskConfig task;
    std::vector<Algorithm> algorithms = {Algorithm::Cobo};
    TrainConfig train;
    std::string output_dir = "results";
    bool emit_snapshots = true;
};

// JSON config loading with defaults; unknown keys are rejected and validation
// errors name the offending key (e.g. "train.eta").
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Subcommand drivers shared by the CLI. Return process exit codes:
// 0 ok, 1 validation failure, 2 bound violation in verify-theory.
int cmd_run(const ExperimentConfig& cfg, bool quiet);
int cmd_compare(const ExperimentConfig& cfg, bool quiet);
int cmd_verify_theory(const ExperimentConfig& cfg, bool quiet);

// Emission helpers (atomic write-then-rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string metrics_csv(const std::string& algorithm, const std::vector<MetricsRecord>& records,
                        const ClusterLayout& layout);
nlohmann::json matrix_snapshot_json(int round, const CollaborationMatrix& w);
nlohmann::json theory_report_json(const TheoryReport& report);

// Runs every configured algorithm plus the local baseline with the shared task
// seed; returns per-algorithm results keyed in the given order.
struct CompareRow {
    Algorithm algorithm;
    double final_loss_mean = 0.0;
    double final_accuracy_mean = 0.0;  // NaN when N/A
    double improved_fraction = 0.0;    // NaN for the local baseline itself
    double recovery_error = 0.0;       // NaN when no box-mode W is trained
    std::vector<double> final_losses;
    std::vector<double> final_accuracy;
};
std::vector<CompareRow> compare_algorithms(const ExperimentConfig& cfg,
                                           const TaskFamily& tasks);

}  // namespace cobo
