#pragma once

// Training and scoring pipeline shared by the command-line tool and the
// acceptance suite: center precomputation, stratified rebalanced epochs with
// Adam and the plateau schedule, best-validation checkpointing, strided
// scoring of a split, and the evaluation report.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "isoface/checkpoint.hpp"
#include "isoface/config.hpp"
#include "isoface/data.hpp"
#include "isoface/metrics.hpp"

namespace isoface {

template <typename T>
std::vector<TensorT<T>> convert_frames(const std::vector<Tensor>& frames) {
  std::vector<TensorT<T>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    TensorT<T> t(f.shape());
    for (std::size_t i = 0; i < f.size(); ++i) t[i] = T(f[i]);
    out.push_back(std::move(t));
  }
  return out;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_auc = 0.0;
  double lr = 0.0;
};

struct TrainOutputs {
  int best_epoch = 0;
  double best_valid_loss = 0.0;
  std::string checkpoint_path;
  std::string log_path;
  std::vector<EpochStats> history;
};

// Reads <data_dir>/manifest.json, trains per the config and writes
// train_log.jsonl plus the best-validation checkpoint.isoc under out_dir.
template <typename T>
TrainOutputs train_run(const RunConfig& cfg, std::ostream* console = nullptr);

// One record per evaluation window of the split, scored against the stored
// center. stride = 0 uses the checkpoint's evaluation stride.
template <typename T>
std::vector<ScoreRecord> score_split(const Checkpoint<T>& ckpt,
                                     const std::string& data_dir,
                                     const std::string& split,
                                     std::size_t stride,
                                     std::ostream* log = nullptr);

std::uint64_t fnv1a64(const std::string& bytes);

// Report JSON: sequence-level and video-level metric blocks (AUC plus pAUC,
// tAUC and TAR per cutoff, log-weighted precision per recall target, class
// histogram overlap) and the content hash of the scored CSV.
std::string evaluation_report(const std::vector<ScoreRecord>& records,
                              const std::vector<double>& cutoffs,
                              const std::vector<double>& recalls,
                              std::size_t bins, const std::string& csv_text);

// --- gradient self-check ---------------------------------------------------

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Finite-difference checks for every layer and the end-to-end model + loss
// composite, in 64-bit; `rounds` independent seeds per check. When `mutate`
// is set one analytic gradient is deliberately corrupted so callers can
// verify the check actually detects a broken backward pass.
std::vector<CheckResult> run_grad_checks(std::uint64_t seed, int rounds,
                                         double tol = 1e-4,
                                         bool mutate = false);

}  // namespace isoface
