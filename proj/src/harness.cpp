#include "dgecn/harness.hpp"

#include "dgecn/error.hpp"
#include "dgecn/io.hpp"
#include "dgecn/parallel.hpp"
#include "dgecn/pnp.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace dgecn {

using nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::IoError, "cannot create directory " + dir.string());
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

double parse_field(const std::string& s, std::size_t line) {
  double v = 0.0;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

struct SolveOutcome {
  bool ok = false;
  double add = 0.0;
  double add_s = 0.0;
  double rep = 0.0;
  bool add_correct = false;
  bool rep_correct = false;
  double ms = 0.0;
};

Pose solve(const std::string& solver, const SyntheticSample& s, const ExperimentConfig& config, const DgPnpModel* model,
           std::size_t index) {
  if (solver == kSolverDgPnp) return forward(*model, s.correspondences);
  std::vector<Point3> p3;
  std::vector<Point2> p2;
  flatten_correspondences(s.correspondences, p3, p2);
  if (solver == kSolverEpnp) return epnp_solve(p3, p2, s.correspondences.intrinsics);
  RansacConfig rc = config.ransac;
  rc.rng_seed = config.seed ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return ransac_pnp(p3, p2, s.correspondences.intrinsics, rc).pose;
}

}  // namespace

SynthGenOutput cmd_synth_gen(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  const Dataset ds = generate_dataset(config.dataset, config.seed);
  SynthGenOutput out{out_dir / kTrainFile, out_dir / kTestFile, out_dir / kManifestFile, ds.train.size(),
                     ds.test.size()};
  io::write_dataset(out.train_path, ds.train);
  io::write_dataset(out.test_path, ds.test);
  json manifest = {
      {"format", "DGPB"},
      {"version", io::kDatasetVersion},
      {"seed", config.seed},
      {"config_hash", config_hash(config)},
      {"config", json::parse(config_to_json(config))},
      {"files",
       {{"train", {{"path", kTrainFile}, {"records", ds.train.size()}}},
        {"test", {{"path", kTestFile}, {"records", ds.test.size()}}}}},
  };
  io::write_text(out.manifest_path, manifest.dump(2) + "\n");
  return out;
}

TrainOutput cmd_train(const ExperimentConfig& config, const fs::path& dataset_dir, const fs::path& out_dir) {
  config.validate();
  const fs::path train_path = dataset_dir / kTrainFile;
  if (!fs::exists(train_path)) fail(ErrorKind::IoError, "dataset not found: " + train_path.string());
  const SceneModel scene = make_scene_model(config.dataset);
  const std::vector<SyntheticSample> samples = io::read_dataset(train_path, scene.mesh);
  ensure_dir(out_dir);

  TrainOutput out;
  out.weights_path = out_dir / kWeightsFile;
  out.history_path = out_dir / kHistoryFile;
  out.result = train(DgPnpModel::init(config.model), samples, config.train);
  io::write_weights(out.weights_path, out.result.model);

  std::ostringstream csv;
  csv << "epoch,total,pose,keypoint\n";
  for (const auto& e : out.result.history)
    csv << e.epoch << ',' << fmt(e.total) << ',' << fmt(e.pose) << ',' << fmt(e.keypoint) << '\n';
  io::write_text(out.history_path, csv.str());
  return out;
}

std::vector<SyntheticSample> bench_cell_samples(const ExperimentConfig& config, const SceneModel& scene, double sigma,
                                                double rate, std::size_t count) {
  const SplitConfig cell{count, sigma, sigma, rate, rate};
  std::vector<SyntheticSample> out(count);
  parallel_for(count, [&](std::size_t i) {
    out[i] = generate_sample(config.dataset, scene, cell, sample_seed(config.seed, Split::Test, i));
  });
  return out;
}

std::vector<ResultRow> run_bench(const ExperimentConfig& config, const DgPnpModel* model) {
  config.validate();
  const bool needs_model = std::find(config.solvers.begin(), config.solvers.end(), kSolverDgPnp) != config.solvers.end();
  if (needs_model && model == nullptr) fail(ErrorKind::InvalidConfig, "solver dgpnp needs trained weights");
  const SceneModel scene = make_scene_model(config.dataset);
  const double diameter = model_diameter(*scene.mesh);

  std::vector<ResultRow> rows;
  for (double rate : config.sweep.outlier_rates)
    for (double sigma : config.sweep.sigmas) {
      const auto samples = bench_cell_samples(config, scene, sigma, rate, config.sweep.samples_per_cell);
      for (const std::string& solver : config.solvers) {
        std::vector<SolveOutcome> res(samples.size());
        parallel_for(samples.size(), [&](std::size_t i) {
          const SyntheticSample& s = samples[i];
          SolveOutcome& o = res[i];
          const auto t0 = std::chrono::steady_clock::now();
          Pose est;
          try {
            est = solve(solver, s, config, model, i);
          } catch (const Error&) {
            o.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            return;
          }
          o.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
          o.ok = true;
          o.add = add(est, s.gt_pose, *scene.mesh);
          o.add_s = add_s(est, s.gt_pose, *scene.mesh);
          o.add_correct = is_add_correct(o.add, diameter);
          try {
            o.rep = rep(est, s.gt_pose, *scene.mesh, s.correspondences.intrinsics);
          } catch (const Error&) {
            o.rep = std::numeric_limits<double>::infinity();  // estimate puts the object behind the camera
          }
          o.rep_correct = is_rep_correct(o.rep);
        });

        ResultRow row{solver, sigma, rate, samples.size()};
        std::vector<double> adds_dist;
        double ms = 0.0;
        std::size_t add_ok = 0;
        std::size_t rep_ok = 0;
        for (const auto& o : res) {
          ms += o.ms;
          if (!o.ok) {
            ++row.failures;
            continue;
          }
          row.mean_add += o.add;
          row.mean_add_s += o.add_s;
          row.mean_rep += o.rep;
          add_ok += o.add_correct;
          rep_ok += o.rep_correct;
          adds_dist.push_back(o.add_s);
        }
        const std::size_t solved = samples.size() - row.failures;
        if (solved > 0) {
          row.mean_add /= static_cast<double>(solved);
          row.mean_add_s /= static_cast<double>(solved);
          row.mean_rep /= static_cast<double>(solved);
        } else {
          row.mean_add = row.mean_add_s = row.mean_rep = std::numeric_limits<double>::quiet_NaN();
        }
        // Failed solves score zero area.
        adds_dist.resize(samples.size(), std::numeric_limits<double>::infinity());
        row.auc = samples.empty() ? 0.0 : auc_add_s(adds_dist);
        row.add_accuracy = samples.empty() ? 0.0 : static_cast<double>(add_ok) / static_cast<double>(samples.size());
        row.rep_accuracy = samples.empty() ? 0.0 : static_cast<double>(rep_ok) / static_cast<double>(samples.size());
        row.ms_per_solve = samples.empty() ? 0.0 : ms / static_cast<double>(samples.size());
        rows.push_back(row);
      }
    }
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.solver, a.outlier_rate, a.sigma) < std::tie(b.solver, b.outlier_rate, b.sigma);
  });
  return rows;
}

std::vector<ResultRow> cmd_bench_noise(const ExperimentConfig& config, const std::optional<fs::path>& weights,
                                       const fs::path& out_dir) {
  std::optional<DgPnpModel> model;
  if (weights) {
    if (!fs::exists(*weights)) fail(ErrorKind::IoError, "weights not found: " + weights->string());
    model = io::read_weights(*weights);
  }
  const auto rows = run_bench(config, model ? &*model : nullptr);
  ensure_dir(out_dir);
  io::write_text(out_dir / kResultsFile, results_to_csv(rows));
  return rows;
}

namespace {
constexpr const char* kResultsHeader =
    "solver,sigma,outlier_rate,samples,failures,mean_add,mean_add_s,mean_rep,add_accuracy,rep_accuracy,auc,"
    "ms_per_solve";
}

std::string results_to_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const auto& r : rows)
    out << r.solver << ',' << fmt(r.sigma) << ',' << fmt(r.outlier_rate) << ',' << r.samples << ',' << r.failures << ','
        << fmt(r.mean_add) << ',' << fmt(r.mean_add_s) << ',' << fmt(r.mean_rep) << ',' << fmt(r.add_accuracy) << ','
        << fmt(r.rep_accuracy) << ',' << fmt(r.auc) << ',' << fmt(r.ms_per_solve) << '\n';
  return out.str();
}

std::vector<ResultRow> results_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != kResultsHeader) fail(ErrorKind::ParseError, "line 1: unexpected results header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != 12) fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected 12 fields");
    ResultRow r;
    r.solver = f[0];
    r.sigma = parse_field(f[1], lineno);
    r.outlier_rate = parse_field(f[2], lineno);
    r.samples = static_cast<std::size_t>(parse_field(f[3], lineno));
    r.failures = static_cast<std::size_t>(parse_field(f[4], lineno));
    r.mean_add = parse_field(f[5], lineno);
    r.mean_add_s = parse_field(f[6], lineno);
    r.mean_rep = parse_field(f[7], lineno);
    r.add_accuracy = parse_field(f[8], lineno);
    r.rep_accuracy = parse_field(f[9], lineno);
    r.auc = parse_field(f[10], lineno);
    r.ms_per_solve = parse_field(f[11], lineno);
    rows.push_back(r);
  }
  return rows;
}

EvalOutput cmd_eval(const fs::path& predictions, const fs::path& ground_truth, const MeshModel& mesh,
                    const CameraIntrinsics& intr, const fs::path& out_dir) {
  const auto pred = io::read_poses(predictions);
  const auto gt = io::read_poses(ground_truth);
  if (pred.empty()) fail(ErrorKind::CountMismatch, "no predictions in " + predictions.string());
  if (pred.size() != gt.size())
    fail(ErrorKind::CountMismatch, std::to_string(pred.size()) + " predictions vs " + std::to_string(gt.size()) +
                                       " ground-truth poses");
  const double diameter = model_diameter(mesh);
  EvalOutput out;
  std::vector<double> dists;
  std::size_t add_ok = 0;
  std::size_t rep_ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].id != gt[i].id)
      fail(ErrorKind::CountMismatch, "record " + std::to_string(i + 1) + ": id '" + pred[i].id + "' vs '" + gt[i].id + "'");
    MetricReport r;
    r.add = add(pred[i].pose, gt[i].pose, mesh);
    r.add_s = add_s(pred[i].pose, gt[i].pose, mesh);
    r.add_correct = is_add_correct(r.add, diameter);
    try {
      r.rep = rep(pred[i].pose, gt[i].pose, mesh, intr);
    } catch (const Error&) {
      r.rep = std::numeric_limits<double>::infinity();
    }
    r.rep_correct = is_rep_correct(r.rep);
    out.mean_add += r.add;
    out.mean_add_s += r.add_s;
    out.mean_rep += r.rep;
    add_ok += r.add_correct;
    rep_ok += r.rep_correct;
    dists.push_back(r.add_s);
    out.per_sample.push_back(r);
    out.ids.push_back(pred[i].id);
  }
  const double n = static_cast<double>(pred.size());
  out.mean_add /= n;
  out.mean_add_s /= n;
  out.mean_rep /= n;
  out.add_accuracy = static_cast<double>(add_ok) / n;
  out.rep_accuracy = static_cast<double>(rep_ok) / n;
  out.auc = auc_add_s(dists);

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    std::ostringstream csv;
    csv << "id,add,add_s,rep,add_correct,rep_correct\n";
    json per = json::array();
    for (std::size_t i = 0; i < out.per_sample.size(); ++i) {
      const auto& r = out.per_sample[i];
      csv << out.ids[i] << ',' << fmt(r.add) << ',' << fmt(r.add_s) << ',' << fmt(r.rep) << ',' << r.add_correct << ','
          << r.rep_correct << '\n';
      per.push_back({{"id", out.ids[i]},
                     {"add", r.add},
                     {"add_s", r.add_s},
                     {"rep", std::isfinite(r.rep) ? json(r.rep) : json(nullptr)},
                     {"add_correct", r.add_correct},
                     {"rep_correct", r.rep_correct}});
    }
    const json summary = {{"samples", pred.size()},
                          {"mean_add", out.mean_add},
                          {"mean_add_s", out.mean_add_s},
                          {"mean_rep", std::isfinite(out.mean_rep) ? json(out.mean_rep) : json(nullptr)},
                          {"add_accuracy", out.add_accuracy},
                          {"rep_accuracy", out.rep_accuracy},
                          {"auc_add_s", out.auc},
                          {"per_sample", per}};
    io::write_text(out_dir / "eval.csv", csv.str());
    io::write_text(out_dir / "eval.json", summary.dump(2) + "\n");
  }
  return out;
}

std::string cmd_report(const fs::path& results_csv, const fs::path& out_dir) {
  const auto rows = results_from_csv(io::read_text(results_csv));
  std::vector<std::string> solvers;
  std::map<double, std::map<double, std::map<std::string, const ResultRow*>>> grid;  // rate -> sigma -> solver
  for (const auto& r : rows) {
    if (std::find(solvers.begin(), solvers.end(), r.solver) == solvers.end()) solvers.push_back(r.solver);
    grid[r.outlier_rate][r.sigma][r.solver] = &r;
  }
  std::ostringstream md;
  md << "# Noise sweep\n\nMean ADD in millimeters (ADD accuracy in parentheses).\n";
  for (const auto& [rate, by_sigma] : grid) {
    md << "\n## Outlier rate " << fmt(rate) << "\n\n| sigma |";
    for (const auto& s : solvers) md << ' ' << s << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < solvers.size(); ++i) md << "---|";
    md << '\n';
    for (const auto& [sigma, cells] : by_sigma) {
      md << "| " << fmt(sigma) << " |";
      for (const auto& s : solvers) {
        const auto it = cells.find(s);
        if (it == cells.end()) {
          md << " - |";
          continue;
        }
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(2) << it->second->mean_add * 1000.0 << " ("
             << std::setprecision(3) << it->second->add_accuracy << ")";
        md << ' ' << cell.str() << " |";
      }
      md << '\n';
    }
  }
  const std::string text = md.str();
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    io::write_text(out_dir / kReportFile, text);
  }
  return text;
}

}  // namespace dgecn
