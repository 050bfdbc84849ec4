#pragma once

#include "dgecn/config.hpp"
#include "dgecn/dgpnp.hpp"
#include "dgecn/metrics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dgecn {

namespace fs = std::filesystem;

inline constexpr const char* kTrainFile = "train.dgpb";
inline constexpr const char* kTestFile = "test.dgpb";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kWeightsFile = "weights.dgpw";
inline constexpr const char* kHistoryFile = "loss_history.csv";
inline constexpr const char* kResultsFile = "results.csv";
inline constexpr const char* kReportFile = "report.md";

struct SynthGenOutput {
  fs::path train_path;
  fs::path test_path;
  fs::path manifest_path;
  std::size_t train_records = 0;
  std::size_t test_records = 0;
};

// Writes train.dgpb, test.dgpb and manifest.json (config, config hash, seed)
// into out_dir, creating it when needed. Throws IoError.
SynthGenOutput cmd_synth_gen(const ExperimentConfig& config, const fs::path& out_dir);

struct TrainOutput {
  fs::path weights_path;
  fs::path history_path;
  TrainResult result;
};

// Trains on dataset_dir/train.dgpb and writes weights.dgpw plus a per-epoch
// loss CSV. Throws IoError naming the dataset path when it is missing.
TrainOutput cmd_train(const ExperimentConfig& config, const fs::path& dataset_dir, const fs::path& out_dir);

struct ResultRow {
  std::string solver;
  double sigma = 0.0;
  double outlier_rate = 0.0;
  std::size_t samples = 0;
  std::size_t failures = 0;  // solver threw; counted as incorrect, left out of the means
  double mean_add = 0.0;
  double mean_add_s = 0.0;
  double mean_rep = 0.0;
  double add_accuracy = 0.0;
  double rep_accuracy = 0.0;
  double auc = 0.0;
  double ms_per_solve = 0.0;
};

// Test grid for one (sigma, rate) cell: `count` samples at exactly that noise
// level and outlier rate. Poses depend only on the seed and the sample index,
// so every cell sees the same poses.
std::vector<SyntheticSample> bench_cell_samples(const ExperimentConfig& config, const SceneModel& scene, double sigma,
                                                double rate, std::size_t count);

// One row per (solver, sigma, rate), sorted by (solver, rate, sigma). `model`
// is required when the solver list contains dgpnp.
std::vector<ResultRow> run_bench(const ExperimentConfig& config, const DgPnpModel* model);
// run_bench plus results.csv in out_dir; loads the weights file for dgpnp.
std::vector<ResultRow> cmd_bench_noise(const ExperimentConfig& config, const std::optional<fs::path>& weights,
                                       const fs::path& out_dir);

std::string results_to_csv(const std::vector<ResultRow>& rows);
// Throws ParseError with the line number.
std::vector<ResultRow> results_from_csv(const std::string& text);

struct EvalOutput {
  std::vector<MetricReport> per_sample;
  std::vector<std::string> ids;
  double mean_add = 0.0;
  double mean_add_s = 0.0;
  double mean_rep = 0.0;
  double add_accuracy = 0.0;
  double rep_accuracy = 0.0;
  double auc = 0.0;
};

// Metrics of predicted vs ground-truth poses (pose CSV files, matched by row
// and id). Writes eval.json and eval.csv when out_dir is non-empty. Throws
// ParseError, CountMismatch (including empty predictions).
EvalOutput cmd_eval(const fs::path& predictions, const fs::path& ground_truth, const MeshModel& mesh,
                    const CameraIntrinsics& intr, const fs::path& out_dir);

// Markdown summary of a results CSV: one mean-ADD table per outlier rate.
std::string cmd_report(const fs::path& results_csv, const fs::path& out_dir);

}  // namespace dgecn
