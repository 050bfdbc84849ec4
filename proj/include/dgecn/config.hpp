#pragma once

// Experiment configuration, read from JSON. Every key is optional; missing
// keys keep their defaults, unknown keys are rejected so typos surface.
//
// {
//   "seed": 42, "output_dir": "out",
//   "dataset": { "train": {"size", "sigma_min", "sigma_max", "rate_min", "rate_max"},
//                "test": {...}, "sphere_radius", "sphere_points", "mesh_seed",
//                "keypoints", "hypotheses_per_keypoint", "z_min", "z_max",
//                "kfa_k", "kfa_window_radius",
//                "camera": {"focal_x", "focal_y", "principal_x", "principal_y", "width", "height"} },
//   "sweep": { "sigmas": [...], "outlier_rates": [...], "samples_per_cell": 500 },
//   "solvers": ["epnp", "epnp_ransac", "dgpnp"],
//   "ransac": { "max_iterations", "inlier_threshold", "confidence" },
//   "model": { "layer_dims", "head_hidden", "k", "dynamic", "bandwidth": "adaptive"|"uniform",
//              "kfa_hidden", "kfa_dim", "initial_depth", "fallback_depth", "init_seed" },
//   "train": { "learning_rate", "batch_size", "epochs", "rng_seed",
//              "loss_weights": [l1, l2, l3, l4], "cosine_decay": true }
// }

#include "dgecn/dgpnp.hpp"
#include "dgecn/pnp.hpp"
#include "dgecn/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dgecn {

inline constexpr std::string_view kSolverEpnp = "epnp";
inline constexpr std::string_view kSolverEpnpRansac = "epnp_ransac";
inline constexpr std::string_view kSolverDgPnp = "dgpnp";

bool is_known_solver(std::string_view name);

struct SweepConfig {
  std::vector<double> sigmas{0.0, 5.0, 10.0, 15.0};
  std::vector<double> outlier_rates{0.10, 0.30};
  std::size_t samples_per_cell = 500;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string output_dir = "out";
  DatasetConfig dataset;
  SweepConfig sweep;
  std::vector<std::string> solvers{std::string(kSolverEpnp), std::string(kSolverDgPnp)};
  RansacConfig ransac;
  DgPnpConfig model;
  TrainConfig train;

  // Throws InvalidSigma / InvalidRate / InvalidConfig naming the offending field.
  void validate() const;
};

// Throws InvalidConfig on malformed JSON, wrong types or unknown keys.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);  // IoError when unreadable

// Canonical JSON (sorted keys, full-precision reals) of every field.
std::string config_to_json(const ExperimentConfig& config);
// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace dgecn
