// Command-line front end: dataset generation, training, scoring, evaluation
// and the gradient self-check, each deterministic under a fixed seed and
// producing byte-stable outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "isoface/checkpoint.hpp"
#include "isoface/config.hpp"
#include "isoface/data.hpp"
#include "isoface/metrics.hpp"
#include "isoface/pipeline.hpp"

namespace {

using namespace isoface;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheck = 4;

RunConfig resolve_config(const std::string& config_path,
                         std::optional<std::uint64_t> seed) {
  RunConfig cfg =
      config_path.empty() ? RunConfig{} : load_run_config(config_path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path);
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_override) {
  const std::string out =
      out_override.empty() ? cfg.data_dir : out_override;
  DatasetManifest m = generate(cfg.data, cfg.seed, out);

  std::size_t nat = 0, man = 0;
  for (const auto& v : m.videos) (v.label == 0 ? nat : man)++;
  std::cout << "videos: " << m.videos.size() << " (" << nat << " natural, "
            << man << " manipulated)\n";
  for (const char* split : {"train", "valid", "test"})
    std::cout << split << ": " << m.split_indices(split).size() << "\n";

  // learnability signal: high-band power inside the manipulated region drops
  const GaussianKernel kernel = gaussian_kernel2d(5, 1.0);
  double nat_power = 0.0, man_power = 0.0;
  std::size_t nat_n = 0, man_n = 0;
  for (const auto& v : m.videos) {
    auto& power = v.label == 0 ? nat_power : man_power;
    auto& count = v.label == 0 ? nat_n : man_n;
    if (count >= 16) continue;
    const EllipseRegion region = central_region(m.height, m.width, v.seed);
    power += band_power_in_region(load_video_frames(out, v)[0], region, kernel);
    ++count;
  }
  if (nat_n > 0 && man_n > 0) {
    nat_power /= double(nat_n);
    man_power /= double(man_n);
    std::printf("band power in region: natural %.6g manipulated %.6g gap %.6g\n",
                nat_power, man_power, nat_power - man_power);
  }
  return kExitOk;
}

int cmd_train(RunConfig cfg, const std::string& out_override) {
  if (!out_override.empty()) cfg.out_dir = out_override;
  TrainOutputs out = cfg.precision == "f64"
                         ? train_run<double>(cfg, &std::cout)
                         : train_run<float>(cfg, &std::cout);
  std::cout << "best epoch " << out.best_epoch << " valid loss "
            << out.best_valid_loss << "\n"
            << "checkpoint: " << out.checkpoint_path << "\n"
            << "log: " << out.log_path << "\n";
  return kExitOk;
}

template <typename T>
std::vector<ScoreRecord> score_with(const std::string& ckpt_path,
                                    const std::string& data_override,
                                    const std::string& split,
                                    std::size_t stride) {
  Checkpoint<T> ckpt = load_checkpoint<T>(ckpt_path);
  const std::string data_dir =
      data_override.empty() ? ckpt.config.data_dir : data_override;
  return score_split(ckpt, data_dir, split, stride, &std::cerr);
}

int cmd_score(const std::string& ckpt_path, const std::string& data_override,
              const std::string& split, std::size_t stride,
              const std::string& out_path) {
  const std::string precision = checkpoint_precision(ckpt_path);
  std::vector<ScoreRecord> records =
      precision == "f64"
          ? score_with<double>(ckpt_path, data_override, split, stride)
          : score_with<float>(ckpt_path, data_override, split, stride);
  std::ostringstream csv;
  save_scores_csv(csv, records);
  write_file(out_path, csv.str());
  std::cout << "scored " << records.size() << " sequences -> " << out_path
            << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& scores_path, const std::string& out_dir,
             std::vector<double> cutoffs, std::vector<double> recalls,
             std::size_t bins) {
  if (cutoffs.empty()) cutoffs = {0.1};
  if (recalls.empty()) recalls = {0.1, 0.5, 0.9};
  const std::string csv_text = read_file(scores_path);
  std::istringstream is(csv_text);
  std::vector<ScoreRecord> records = load_scores_csv(is);

  std::filesystem::create_directories(out_dir);
  write_file(out_dir + "/report.json",
             evaluation_report(records, cutoffs, recalls, bins, csv_text) +
                 "\n");

  const RocCurve curve = roc(records);
  const ScoreHistogram hist = histogram(records, bins);
  std::ostringstream svg1, svg2, hcsv;
  roc_svg(curve, svg1);
  histogram_svg(hist, svg2);
  histogram_csv(hist, hcsv);
  write_file(out_dir + "/roc.svg", svg1.str());
  write_file(out_dir + "/histogram.svg", svg2.str());
  write_file(out_dir + "/histogram.csv", hcsv.str());
  std::cout << "report: " << out_dir << "/report.json\n";
  return kExitOk;
}

int cmd_grad_check(std::uint64_t seed, int rounds, bool mutate) {
  const std::vector<CheckResult> results =
      run_grad_checks(seed, rounds, 1e-4, mutate);
  bool all_pass = true;
  for (const CheckResult& r : results) {
    std::printf("%-18s %12.3e %s\n", r.name.c_str(), r.max_rel_err,
                r.pass ? "pass" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-branch deepfake isolation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_path, split = "test", ckpt_path, scores_path,
              data_dir;
  std::optional<std::uint64_t> seed;
  std::size_t stride = 0, bins = 32;
  std::vector<double> cutoffs, recalls;
  int rounds = 20;
  bool mutate = false;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--config", config_path, "run configuration JSON");
  gen->add_option("--seed", seed, "override the configured seed");
  gen->add_option("--out", out_path, "dataset directory");

  CLI::App* train = app.add_subcommand("train", "train and checkpoint");
  train->add_option("--config", config_path, "run configuration JSON");
  train->add_option("--seed", seed, "override the configured seed");
  train->add_option("--out", out_path, "output directory");

  CLI::App* score = app.add_subcommand("score", "score a dataset split");
  score->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  score->add_option("--data", data_dir, "dataset directory override");
  score->add_option("--split", split, "train | valid | test");
  score->add_option("--stride", stride, "frame stride (0 = configured)");
  score->add_option("--out", out_path, "output CSV path")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a score CSV");
  eval->add_option("--scores", scores_path, "score CSV path")->required();
  eval->add_option("--out", out_path, "report directory")->required();
  eval->add_option("--cutoff", cutoffs, "FAR cutoff (repeatable)");
  eval->add_option("--recall", recalls, "recall target (repeatable)");
  eval->add_option("--bins", bins, "histogram bins");

  CLI::App* check = app.add_subcommand("grad-check", "finite-difference check");
  check->add_option("--config", config_path, "run configuration JSON");
  check->add_option("--seed", seed, "base seed");
  check->add_option("--rounds", rounds, "seeds per check");
  check->add_flag("--mutate", mutate,
                  "corrupt one analytic gradient to prove detection");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(resolve_config(config_path, seed),
                                           out_path);
    if (train->parsed())
      return cmd_train(resolve_config(config_path, seed), out_path);
    if (score->parsed())
      return cmd_score(ckpt_path, data_dir, split, stride, out_path);
    if (eval->parsed())
      return cmd_eval(scores_path, out_path, cutoffs, recalls, bins);
    if (check->parsed()) {
      if (!config_path.empty()) resolve_config(config_path, seed);
      return cmd_grad_check(seed.value_or(7), rounds, mutate);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}
