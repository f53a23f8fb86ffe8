#pragma once

// Synthetic video corpus with controllable manipulation artifacts.
// Natural videos are temporally coherent random fields (drifting blobs over
// a gradient background plus a static noise texture). Manipulated videos
// replace a central elliptical region with a decimated, re-interpolated and
// blurred version of itself, alpha-blended at the boundary: the same
// low-frequency substitution plus resampling trace real face swaps leave.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "isoface/image_ops.hpp"
#include "isoface/model.hpp"
#include "isoface/tensor.hpp"

namespace isoface {

struct GenConfig {
  std::size_t natural = 100;
  std::size_t manipulated = 100;
  std::size_t frames = 64;  // T
  std::size_t height = 32, width = 32, channels = 3;
  double strength_min = 1.0, strength_max = 1.0;  // artifact strength range
  double train_frac = 0.6, valid_frac = 0.2;      // remainder is test

  void validate() const;
};

struct VideoEntry {
  std::string video_id;
  int label = 0;  // 0 natural, 1 manipulated
  std::size_t frames = 0;
  std::string file;          // ISOF blob relative to the dataset directory
  std::string split;         // train | valid | test
  double strength = 0.0;     // artifact strength, 0 for naturals
  std::uint64_t seed = 0;    // per-video generator seed
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::size_t frames = 0, height = 0, width = 0, channels = 0;
  std::vector<VideoEntry> videos;

  std::vector<std::size_t> split_indices(const std::string& split) const;
  void validate() const;  // unique ids, known split tags
};

struct EllipseRegion {
  double ci = 0, cj = 0;  // center (row, col)
  double ri = 1, rj = 1;  // semi-axes
  double edge = 0.15;     // blend falloff width in normalized radius units

  // 1 well inside, smooth ramp to 0 at the boundary
  double alpha(double i, double j) const;
};

// Per-video seed derived by hashing the global seed with the video id.
std::uint64_t video_seed(std::uint64_t global_seed, const std::string& video_id);

std::vector<Tensor> make_natural_frames(const GenConfig& cfg,
                                        std::uint64_t seed);
EllipseRegion central_region(std::size_t height, std::size_t width,
                             std::uint64_t seed);

// out = frame + strength * alpha * (blur(up(down(frame))) - frame),
// so strength 0 reproduces the input bit for bit.
Tensor apply_artifact(const Tensor& frame, const EllipseRegion& region,
                      double strength, const GaussianKernel& kernel);

// Writes one ISOF blob per video plus manifest.json under out_dir.
DatasetManifest generate(const GenConfig& cfg, std::uint64_t seed,
                         const std::string& out_dir);

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

std::vector<Tensor> load_video_frames(const std::string& dir,
                                      const VideoEntry& entry);

// One random length-F window per video of the split, shuffled; deterministic
// in the seed (callers fold the epoch number into it).
struct WindowRef {
  std::size_t video_index = 0;
  std::size_t start = 0;
};
std::vector<WindowRef> stratified_windows(const DatasetManifest& m,
                                          const std::string& split,
                                          std::size_t F, std::uint64_t seed);
std::vector<FaceSequence> stratified_epoch(const DatasetManifest& m,
                                           const std::string& dir,
                                           const std::string& split,
                                           std::size_t F, std::uint64_t seed);

struct RebalancePlan {
  double natural_weight = 2.0;
  double manipulated_weight = 0.5;
  double effective_natural = 0.0;
  double effective_manipulated = 0.0;
};
RebalancePlan rebalance(std::size_t naturals, std::size_t manipulated);

// n class draws (0 natural, 1 manipulated) with probability proportional to
// effective class mass; used by the training loop's epoch expansion.
std::vector<int> sample_rebalanced(const RebalancePlan& plan, std::size_t n,
                                   std::uint64_t seed);

// Sliding strided windows; a too-short video falls back to stride 1 (logged)
// before erroring.
std::vector<FaceSequence> eval_sequences(const std::string& video_id,
                                         int label,
                                         const std::vector<Tensor>& frames,
                                         std::size_t F, std::size_t stride,
                                         std::ostream* log = nullptr);

// Mean squared value of the finest bandpass band inside the region; the
// manipulated-vs-natural gap of this quantity is the corpus's learnability
// precondition.
double band_power_in_region(const Tensor& frame, const EllipseRegion& region,
                            const GaussianKernel& kernel);

}  // namespace isoface
