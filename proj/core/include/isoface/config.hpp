#pragma once

// Run configuration: one JSON document covering model, data, loss, optimizer,
// scheduler, training and evaluation settings. Every field has a default that
// reproduces the reference training run; unknown keys are rejected so typos
// fail loudly instead of silently falling back to defaults.

#include <cstdint>
#include <string>
#include <vector>

#include "isoface/data.hpp"
#include "isoface/model.hpp"

namespace isoface {

struct OptimConfig {
  double lr = 3e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-6;
};

struct SchedConfig {
  int patience = 50;
  double factor = 10.0;
  int max_drops = 3;
};

struct TrainConfig {
  int epochs = 25;
  std::size_t window = 10;  // F
  std::size_t batch_size = 8;
};

struct EvalConfig {
  std::size_t stride = 7;
  std::vector<double> cutoffs = {0.1};
  std::vector<double> recalls = {0.1, 0.5, 0.9};
  std::size_t bins = 32;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string precision = "f32";  // f32 | f64 (checks always run in f64)
  std::string data_dir = "data";
  std::string out_dir = "run";
  ModelConfig model;
  GenConfig data;
  double r_minus = 0.0, r_plus = 0.0;  // 0 = radii scaled from embedding dim
  OptimConfig optim;
  SchedConfig sched;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace isoface
