// paintbot: prep-data | train | paint | eval | gradcheck
//
// Exit codes: 0 success, 1 runtime/format error, 2 usage error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "paintbot/paintbot.hpp"

namespace fs = std::filesystem;
using namespace paintbot;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_scales(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--scales: cannot parse '" + item + "'");
    }
  }
  return out;
}

std::vector<std::pair<int, int>> parse_sizes(const std::string& text) {
  std::vector<std::pair<int, int>> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    int h = 0, w = 0;
    char x = 0, extra = 0;
    if (std::sscanf(item.c_str(), "%d%c%d%c", &h, &x, &w, &extra) != 3 || x != 'x' || h < 1 || w < 1) {
      throw UsageError("--sizes: expected HxW[,HxW...], got '" + item + "'");
    }
    out.emplace_back(h, w);
  }
  return out;
}

TrainConfig config_or_default(const std::string& path) {
  return path.empty() ? TrainConfig{} : load_config(path);
}

void require_compatible(const NetworkParams& net, const TrainConfig& cfg) {
  const NetworkArch want = cfg.arch();
  const NetworkArch& have = net.arch();
  if (have.obs_h != want.obs_h || have.obs_w != want.obs_w) {
    throw FormatError("checkpoint expects " + std::to_string(have.obs_h) + "x" + std::to_string(have.obs_w) +
                      " observations but the configuration gives " + std::to_string(want.obs_h) + "x" +
                      std::to_string(want.obs_w));
  }
}

int cmd_prep_data(const std::string& input, const std::string& out, int n, int patch, std::uint64_t seed,
                  int cluster_k, std::uint64_t feature_seed) {
  if (!fs::is_directory(input)) throw UsageError("--input is not a directory: " + input);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (e.is_regular_file() && ext == ".png") files.push_back(e.path());
  }
  if (files.empty()) throw InvalidArgument("no PNG images in " + input);
  std::sort(files.begin(), files.end());
  std::vector<Canvas> sources;
  for (const auto& f : files) sources.push_back(load_png(f.string()));

  std::mt19937_64 rng(seed);
  PatchOptions opt;
  opt.out_h = opt.out_w = patch;
  Dataset ds = prepare_dataset(sources, n, opt, rng);
  if (cluster_k > 0) {
    ds = cluster_representatives(ds.patches, FeatureStack::seeded(feature_seed), static_cast<std::size_t>(cluster_k),
                                 rng);
  }
  save_dataset(ds, out);
  std::printf("wrote %zu patches of %dx%d to %s\n", ds.size(), ds.height(), ds.width(), out.c_str());
  return 0;
}

int cmd_train(const std::string& config, const std::string& dataset, const std::string& out,
              std::optional<std::uint64_t> seed, const std::string& resume, std::optional<int> workers) {
  TrainConfig cfg = config_or_default(config);
  if (seed) cfg.seed = *seed;
  if (workers) cfg.workers = *workers;
  cfg.validate();
  Dataset ds = load_dataset(dataset);
  TrainOptions opt;
  opt.out_dir = out;
  if (!resume.empty()) {
    NetworkParams init = load_params(resume);
    require_compatible(init, cfg);
    opt.init = std::move(init);
    opt.start_episode = read_episodes_done(resume);
  }
  const TrainResult r = train(cfg, ds, opt);
  const double last = r.metrics.empty() ? 0.0 : r.metrics.back().mean_reward;
  std::printf("episodes %zu env_steps %ld last_mean_reward %.6f\n", r.metrics.size(), r.env_steps, last);
  return 0;
}

int cmd_paint(const std::string& checkpoint, const std::string& ref, const std::string& out,
              const std::string& scales, std::uint64_t seed, const std::string& stroke_log, const std::string& config,
              int max_strokes, int max_segments, double thresh_sim) {
  const TrainConfig cfg = config_or_default(config);
  const NetworkParams net = load_params(checkpoint);
  require_compatible(net, cfg);
  const Canvas reference = load_png(ref);
  RolloutConfig rc;
  rc.scales = parse_scales(scales);
  rc.seed = seed;
  rc.max_strokes_total = max_strokes;
  rc.max_segments_per_stroke = max_segments;
  rc.thresh_sim = thresh_sim;
  const PaintResult r = paint_multiscale(reference, net, rc, cfg.env, cfg.loss_kind());
  save_png(r.canvas, out);
  if (!stroke_log.empty()) save_stroke_log(r.strokes, stroke_log);
  std::printf("strokes %d segments %zu initial_loss %.9g final_loss %.9g\n", r.strokes_started, r.strokes.size(),
              r.initial_loss, r.final_loss);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const std::string& loss,
             const std::string& config, int steps) {
  TrainConfig cfg = config_or_default(config);
  if (!loss.empty()) cfg.loss = loss;
  cfg.validate();
  const NetworkParams net = load_params(checkpoint);
  require_compatible(net, cfg);
  const Dataset ds = load_dataset(dataset);
  const EvalResult r = evaluate_network(net, ds.patches, cfg, steps);
  std::printf("loss %s references %zu mean_reward %.9g mean_final_ratio %.9g\n", cfg.loss.c_str(), ds.size(),
              r.mean_return, r.mean_final_ratio);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& sizes, double corrupt) {
  GradCheckOptions opt;
  opt.seed = seed;
  if (!sizes.empty()) opt.sizes = parse_sizes(sizes);
  opt.corrupt_scale = corrupt;
  const GradCheckReport report = run_gradcheck(opt);
  for (const auto& e : report.entries) {
    std::printf("%-24s checked %5zu  max_rel_error %.3e\n", e.name.c_str(), e.checked, e.max_rel_error);
  }
  std::printf("max_rel_error %.3e tolerance %.0e %s\n", report.max_rel_error(), report.tolerance,
              report.passed() ? "PASS" : "FAIL");
  return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PaintBot: reinforcement-learning stroke painting"};
  app.require_subcommand(1);

  std::string input, out, dataset, config, resume, checkpoint, ref, scales = "1.0", stroke_log, loss, sizes;
  int n = 64, patch = 32, cluster_k = 0, max_strokes = 1000, max_segments = 16, steps = 0;
  std::uint64_t seed = 0, feature_seed = 7;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> workers;
  double thresh_sim = 0.0, corrupt = 1.0;

  auto* prep = app.add_subcommand("prep-data", "cut reference patches from a directory of PNGs");
  prep->add_option("--input", input, "directory of PNG images")->required();
  prep->add_option("--out", out, "dataset archive to write")->required();
  prep->add_option("--n", n, "patches to sample")->check(CLI::PositiveNumber);
  prep->add_option("--patch-size", patch, "square patch side in pixels")->check(CLI::PositiveNumber);
  prep->add_option("--seed", seed);
  prep->add_option("--cluster-k", cluster_k, "keep one patch per perceptual cluster (0 = off)");
  prep->add_option("--feature-seed", feature_seed, "seed of the perceptual feature stack");

  auto* tr = app.add_subcommand("train", "train a policy");
  tr->add_option("--config", config, "key = value config file");
  tr->add_option("--dataset", dataset, "dataset archive")->required();
  tr->add_option("--out", out, "output directory")->required();
  tr->add_option("--seed", train_seed, "overrides the config seed");
  tr->add_option("--resume", resume, "checkpoint to continue from");
  tr->add_option("--workers", workers, "rollout threads")->check(CLI::PositiveNumber);

  auto* pt = app.add_subcommand("paint", "paint a reference image");
  pt->add_option("--checkpoint", checkpoint)->required();
  pt->add_option("--ref", ref, "reference PNG")->required();
  pt->add_option("--out", out, "output PNG")->required();
  pt->add_option("--scales", scales, "comma-separated increasing scales ending in 1.0");
  pt->add_option("--seed", seed);
  pt->add_option("--stroke-log", stroke_log, "CSV of rendered segments");
  pt->add_option("--config", config, "environment/loss settings (defaults otherwise)");
  pt->add_option("--max-strokes", max_strokes, "stroke cap per scale")->check(CLI::PositiveNumber);
  pt->add_option("--max-segments", max_segments, "segment cap per stroke")->check(CLI::PositiveNumber);
  pt->add_option("--thresh-sim", thresh_sim, "stop once the loss falls to this value");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--dataset", dataset)->required();
  ev->add_option("--loss", loss, "l2, lhalf or perceptual");
  ev->add_option("--config", config);
  ev->add_option("--steps", steps, "episode length (default t_max)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc->add_option("--seed", seed);
  gc->add_option("--sizes", sizes, "observation sizes HxW[,HxW...] (width includes both halves)");
  gc->add_option("--corrupt", corrupt, "scale analytic gradients (negative control)")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*prep) return cmd_prep_data(input, out, n, patch, seed, cluster_k, feature_seed);
    if (*tr) return cmd_train(config, dataset, out, train_seed, resume, workers);
    if (*pt) {
      return cmd_paint(checkpoint, ref, out, scales, seed, stroke_log, config, max_strokes, max_segments, thresh_sim);
    }
    if (*ev) return cmd_eval(checkpoint, dataset, loss, config, steps);
    if (*gc) return cmd_gradcheck(seed, sizes, corrupt);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigKeyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
