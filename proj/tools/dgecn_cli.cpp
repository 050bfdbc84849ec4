// dgecn: synthetic data, training, noise sweep, evaluation and reporting.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include "dgecn/config.hpp"
#include "dgecn/error.hpp"
#include "dgecn/harness.hpp"
#include "dgecn/io.hpp"
#include "dgecn/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace dgecn;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> solvers;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON experiment configuration");
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--out", c.out, "Output directory (default: config output_dir)");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.ransac.rng_seed = *c.seed;
  }
  if (!c.solvers.empty()) cfg.solvers = c.solvers;
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

int exit_code(ErrorKind k) { return k == ErrorKind::IoError ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dgecn: dynamic-graph PnP and classical PnP on synthetic correspondences"};
  app.require_subcommand(1);

  Common gen, tr, bench, ev, rep;
  std::string dataset_dir, weights_path, predictions, gt_path, mesh_path, results_path;

  auto* c_gen = app.add_subcommand("synth-gen", "Generate the train/test datasets and manifest");
  add_common(c_gen, gen);

  auto* c_train = app.add_subcommand("train", "Train DG-PnP on a generated dataset");
  add_common(c_train, tr);
  c_train->add_option("--dataset", dataset_dir, "Directory holding train.dgpb (default: the output directory)");

  auto* c_bench = app.add_subcommand("bench-noise", "Sweep noise and outlier rates over the selected solvers");
  add_common(c_bench, bench);
  c_bench->add_option("--solver", bench.solvers, "Solver (epnp, epnp_ransac, dgpnp); repeatable")->delimiter(',');
  c_bench->add_option("--weights", weights_path, "DG-PnP weights (default: <out>/weights.dgpw)");

  auto* c_eval = app.add_subcommand("eval", "Score predicted poses against ground truth");
  add_common(c_eval, ev);
  c_eval->add_option("--predictions", predictions, "Pose CSV of estimates")->required();
  c_eval->add_option("--gt", gt_path, "Pose CSV of ground truth")->required();
  c_eval->add_option("--mesh", mesh_path, "OBJ/PLY mesh (default: the configured sphere)");

  auto* c_report = app.add_subcommand("report", "Summarize a results CSV as markdown");
  add_common(c_report, rep);
  c_report->add_option("--results", results_path, "results.csv (default: <out>/results.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_gen) {
      const auto cfg = resolve(gen);
      const auto out = cmd_synth_gen(cfg, cfg.output_dir);
      std::cout << "wrote " << out.train_records << " train and " << out.test_records << " test records to "
                << cfg.output_dir << " (config " << config_hash(cfg) << ")\n";
    } else if (*c_train) {
      const auto cfg = resolve(tr);
      const auto out = cmd_train(cfg, dataset_dir.empty() ? fs::path(cfg.output_dir) : fs::path(dataset_dir),
                                 cfg.output_dir);
      for (const auto& e : out.result.history)
        std::cout << "epoch " << e.epoch << " loss " << e.total << " pose " << e.pose << '\n';
      std::cout << "weights: " << out.weights_path.string() << '\n';
    } else if (*c_bench) {
      const auto cfg = resolve(bench);
      std::optional<fs::path> w;
      if (std::find(cfg.solvers.begin(), cfg.solvers.end(), kSolverDgPnp) != cfg.solvers.end())
        w = weights_path.empty() ? fs::path(cfg.output_dir) / kWeightsFile : fs::path(weights_path);
      const auto rows = cmd_bench_noise(cfg, w, cfg.output_dir);
      std::cout << results_to_csv(rows);
    } else if (*c_eval) {
      const auto cfg = resolve(ev);
      const MeshModel mesh = mesh_path.empty() ? *make_scene_model(cfg.dataset).mesh : io::read_mesh(mesh_path);
      const auto out = cmd_eval(predictions, gt_path, mesh, cfg.dataset.camera, cfg.output_dir);
      std::cout << "samples " << out.per_sample.size() << " mean_add " << out.mean_add << " mean_add_s "
                << out.mean_add_s << " mean_rep " << out.mean_rep << " add_acc " << out.add_accuracy << " rep_acc "
                << out.rep_accuracy << " auc " << out.auc << '\n';
    } else if (*c_report) {
      const auto cfg = resolve(rep);
      const fs::path in = results_path.empty() ? fs::path(cfg.output_dir) / kResultsFile : fs::path(results_path);
      std::cout << cmd_report(in, cfg.output_dir);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
