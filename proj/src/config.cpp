#include "dgecn/config.hpp"

#include "dgecn/error.hpp"
#include "dgecn/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <set>

namespace dgecn {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::InvalidConfig, where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.contains(key)) fail(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
}

template <class T>
void get(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::InvalidConfig, where + "." + key + " has the wrong type");
  }
}

void read_split(const json& j, SplitConfig& s, const std::string& where) {
  reject_unknown(j, {"size", "sigma_min", "sigma_max", "rate_min", "rate_max"}, where);
  get(j, "size", s.size, where);
  get(j, "sigma_min", s.sigma_min, where);
  get(j, "sigma_max", s.sigma_max, where);
  get(j, "rate_min", s.rate_min, where);
  get(j, "rate_max", s.rate_max, where);
}

json split_json(const SplitConfig& s) {
  return {{"size", s.size}, {"sigma_min", s.sigma_min}, {"sigma_max", s.sigma_max}, {"rate_min", s.rate_min},
          {"rate_max", s.rate_max}};
}

}  // namespace

bool is_known_solver(std::string_view name) {
  return name == kSolverEpnp || name == kSolverEpnpRansac || name == kSolverDgPnp;
}

void ExperimentConfig::validate() const {
  dataset.validate();
  for (double s : sweep.sigmas)
    if (!(s >= 0.0 && s <= 15.0))
      fail(ErrorKind::InvalidSigma, "sweep sigma " + std::to_string(s) + " outside [0,15]");
  for (double r : sweep.outlier_rates)
    if (!(r >= 0.0 && r < 1.0))
      fail(ErrorKind::InvalidRate, "sweep outlier rate " + std::to_string(r) + " outside [0,1)");
  if (sweep.sigmas.empty() || sweep.outlier_rates.empty())
    fail(ErrorKind::InvalidConfig, "sweep needs at least one sigma and one outlier rate");
  if (sweep.samples_per_cell == 0) fail(ErrorKind::InvalidConfig, "sweep.samples_per_cell must be positive");
  if (solvers.empty()) fail(ErrorKind::InvalidConfig, "solver list is empty");
  for (const auto& s : solvers)
    if (!is_known_solver(s)) fail(ErrorKind::InvalidConfig, "unknown solver '" + s + "'");
  ransac.validate();
  model.validate();
  if (model.keypoints != dataset.keypoints)
    fail(ErrorKind::InvalidConfig, "model keypoint count differs from dataset.keypoints");
  if (model.kfa_k != dataset.kfa_k) fail(ErrorKind::InvalidConfig, "model KFA k differs from dataset.kfa_k");
  if (model.k >= dataset.hypotheses_per_keypoint)
    fail(ErrorKind::InvalidConfig, "model.k must be below dataset.hypotheses_per_keypoint");
  train.validate();
}

ExperimentConfig config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::InvalidConfig, std::string("malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  reject_unknown(root, {"seed", "output_dir", "dataset", "sweep", "solvers", "ransac", "model", "train"}, "config");
  get(root, "seed", c.seed, "config");
  get(root, "output_dir", c.output_dir, "config");
  get(root, "solvers", c.solvers, "config");

  if (root.contains("dataset")) {
    const json& d = root["dataset"];
    const std::string w = "dataset";
    reject_unknown(d,
                   {"train", "test", "sphere_radius", "sphere_points", "mesh_seed", "keypoints",
                    "hypotheses_per_keypoint", "z_min", "z_max", "kfa_k", "kfa_window_radius", "camera"},
                   w);
    if (d.contains("train")) read_split(d["train"], c.dataset.train, "dataset.train");
    if (d.contains("test")) read_split(d["test"], c.dataset.test, "dataset.test");
    get(d, "sphere_radius", c.dataset.sphere_radius, w);
    get(d, "sphere_points", c.dataset.sphere_points, w);
    get(d, "mesh_seed", c.dataset.mesh_seed, w);
    get(d, "keypoints", c.dataset.keypoints, w);
    get(d, "hypotheses_per_keypoint", c.dataset.hypotheses_per_keypoint, w);
    get(d, "z_min", c.dataset.z_min, w);
    get(d, "z_max", c.dataset.z_max, w);
    get(d, "kfa_k", c.dataset.kfa_k, w);
    get(d, "kfa_window_radius", c.dataset.kfa_window_radius, w);
    if (d.contains("camera")) {
      const json& cam = d["camera"];
      const std::string cw = "dataset.camera";
      reject_unknown(cam, {"focal_x", "focal_y", "principal_x", "principal_y", "width", "height"}, cw);
      get(cam, "focal_x", c.dataset.camera.focal_x, cw);
      get(cam, "focal_y", c.dataset.camera.focal_y, cw);
      get(cam, "principal_x", c.dataset.camera.principal_x, cw);
      get(cam, "principal_y", c.dataset.camera.principal_y, cw);
      get(cam, "width", c.dataset.camera.width, cw);
      get(cam, "height", c.dataset.camera.height, cw);
    }
  }
  if (root.contains("sweep")) {
    const json& s = root["sweep"];
    reject_unknown(s, {"sigmas", "outlier_rates", "samples_per_cell"}, "sweep");
    get(s, "sigmas", c.sweep.sigmas, "sweep");
    get(s, "outlier_rates", c.sweep.outlier_rates, "sweep");
    get(s, "samples_per_cell", c.sweep.samples_per_cell, "sweep");
  }
  if (root.contains("ransac")) {
    const json& r = root["ransac"];
    reject_unknown(r, {"max_iterations", "inlier_threshold", "confidence"}, "ransac");
    get(r, "max_iterations", c.ransac.max_iterations, "ransac");
    get(r, "inlier_threshold", c.ransac.inlier_threshold, "ransac");
    get(r, "confidence", c.ransac.confidence, "ransac");
  }
  bool explicit_dims = false;
  if (root.contains("model")) {
    const json& m = root["model"];
    const std::string w = "model";
    reject_unknown(m,
                   {"layer_dims", "head_hidden", "k", "dynamic", "bandwidth", "kfa_hidden", "kfa_dim", "initial_depth",
                    "fallback_depth", "init_seed"},
                   w);
    explicit_dims = m.contains("layer_dims");
    get(m, "layer_dims", c.model.layer_dims, w);
    get(m, "head_hidden", c.model.head_hidden, w);
    get(m, "k", c.model.k, w);
    get(m, "dynamic", c.model.dynamic, w);
    std::string bw = "adaptive";
    get(m, "bandwidth", bw, w);
    if (bw == "adaptive")
      c.model.bandwidth = BandwidthMode::Adaptive;
    else if (bw == "uniform")
      c.model.bandwidth = BandwidthMode::Uniform;
    else
      fail(ErrorKind::InvalidConfig, "model.bandwidth must be 'adaptive' or 'uniform'");
    get(m, "kfa_hidden", c.model.kfa_hidden, w);
    get(m, "kfa_dim", c.model.kfa_dim, w);
    get(m, "initial_depth", c.model.initial_depth, w);
    get(m, "fallback_depth", c.model.fallback_depth, w);
    get(m, "init_seed", c.model.init_seed, w);
  }
  if (root.contains("train")) {
    const json& t = root["train"];
    const std::string w = "train";
    reject_unknown(t, {"learning_rate", "batch_size", "epochs", "rng_seed", "loss_weights", "cosine_decay"}, w);
    get(t, "learning_rate", c.train.learning_rate, w);
    get(t, "batch_size", c.train.batch_size, w);
    get(t, "epochs", c.train.epochs, w);
    get(t, "rng_seed", c.train.rng_seed, w);
    get(t, "cosine_decay", c.train.cosine_decay, w);
    if (t.contains("loss_weights")) {
      std::vector<double> lw;
      get(t, "loss_weights", lw, w);
      if (lw.size() != 4) fail(ErrorKind::InvalidConfig, "train.loss_weights needs four entries");
      c.train.weights = {lw[0], lw[1], lw[2], lw[3]};
    }
  }

  // Derived fields follow the dataset so a config states them once.
  c.model.keypoints = c.dataset.keypoints;
  c.model.kfa_k = c.dataset.kfa_k;
  if (!explicit_dims) c.model.layer_dims.front() = kVertexFeatureDim + (c.model.kfa_k > 0 ? c.model.kfa_dim : 0);
  c.ransac.rng_seed = c.seed;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(io::read_text(path)); }

std::string config_to_json(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["dataset"] = {{"train", split_json(d.train)},
                  {"test", split_json(d.test)},
                  {"sphere_radius", d.sphere_radius},
                  {"sphere_points", d.sphere_points},
                  {"mesh_seed", d.mesh_seed},
                  {"keypoints", d.keypoints},
                  {"hypotheses_per_keypoint", d.hypotheses_per_keypoint},
                  {"z_min", d.z_min},
                  {"z_max", d.z_max},
                  {"kfa_k", d.kfa_k},
                  {"kfa_window_radius", d.kfa_window_radius},
                  {"camera",
                   {{"focal_x", d.camera.focal_x},
                    {"focal_y", d.camera.focal_y},
                    {"principal_x", d.camera.principal_x},
                    {"principal_y", d.camera.principal_y},
                    {"width", d.camera.width},
                    {"height", d.camera.height}}}};
  j["sweep"] = {{"sigmas", c.sweep.sigmas},
                {"outlier_rates", c.sweep.outlier_rates},
                {"samples_per_cell", c.sweep.samples_per_cell}};
  j["solvers"] = c.solvers;
  j["ransac"] = {{"max_iterations", c.ransac.max_iterations},
                 {"inlier_threshold", c.ransac.inlier_threshold},
                 {"confidence", c.ransac.confidence}};
  j["model"] = {{"layer_dims", c.model.layer_dims},
                {"head_hidden", c.model.head_hidden},
                {"k", c.model.k},
                {"dynamic", c.model.dynamic},
                {"bandwidth", c.model.bandwidth == BandwidthMode::Uniform ? "uniform" : "adaptive"},
                {"kfa_hidden", c.model.kfa_hidden},
                {"kfa_dim", c.model.kfa_dim},
                {"initial_depth", c.model.initial_depth},
                {"fallback_depth", c.model.fallback_depth},
                {"init_seed", c.model.init_seed}};
  const auto& w = c.train.weights;
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"rng_seed", c.train.rng_seed},
                {"cosine_decay", c.train.cosine_decay},
                {"loss_weights", {w.depth, w.segmentation, w.keypoint, w.pose}}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_to_json(config);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dgecn
