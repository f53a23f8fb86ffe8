#include "isoface/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "isoface/loglayer.hpp"

namespace isoface {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// triangle wave reflecting a drifting coordinate into [0, n-1]
double reflect(double x, double n) {
  if (n <= 1.0) return 0.0;
  const double period = 2.0 * (n - 1.0);
  double m = std::fmod(x, period);
  if (m < 0) m += period;
  return m <= n - 1.0 ? m : period - m;
}

struct Blob {
  double ci, cj, vi, vj, radius;
  double amp[3];
};

std::string split_for(std::size_t idx, std::size_t count, double train_frac,
                      double valid_frac) {
  const auto n_train = std::size_t(std::lround(double(count) * train_frac));
  const auto n_valid = std::size_t(std::lround(double(count) * valid_frac));
  if (idx < n_train) return "train";
  if (idx < n_train + n_valid) return "valid";
  return "test";
}

}  // namespace

void GenConfig::validate() const {
  if (natural == 0 || manipulated == 0)
    throw std::invalid_argument("both classes need at least one video");
  if (frames == 0 || height < 8 || width < 8 || channels == 0 || channels > 4)
    throw std::invalid_argument("nonsensical video extents");
  if (!(strength_min >= 0.0 && strength_min <= strength_max &&
        strength_max <= 1.0))
    throw std::invalid_argument("artifact strength range must lie in [0,1]");
  if (!(train_frac > 0.0 && valid_frac >= 0.0 &&
        train_frac + valid_frac < 1.0 + 1e-12))
    throw std::invalid_argument("bad split fractions");
}

std::vector<std::size_t> DatasetManifest::split_indices(
    const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < videos.size(); ++i)
    if (videos[i].split == split) out.push_back(i);
  return out;
}

void DatasetManifest::validate() const {
  std::vector<std::string> ids;
  for (const auto& v : videos) {
    ids.push_back(v.video_id);
    if (v.split != "train" && v.split != "valid" && v.split != "test")
      throw std::invalid_argument("unknown split tag: " + v.split);
    if (v.label == 1 && !(v.strength > 0.0))
      throw std::invalid_argument("manipulated video with zero strength: " +
                                  v.video_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("duplicate video_id in manifest");
}

double EllipseRegion::alpha(double i, double j) const {
  const double di = (i - ci) / ri, dj = (j - cj) / rj;
  const double rho = std::sqrt(di * di + dj * dj);
  const double a = (1.0 - rho) / edge;
  return std::clamp(a, 0.0, 1.0);
}

std::uint64_t video_seed(std::uint64_t global_seed,
                         const std::string& video_id) {
  return splitmix64(global_seed ^ fnv1a64(video_id));
}

std::vector<Tensor> make_natural_frames(const GenConfig& cfg,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const std::size_t C = cfg.channels, H = cfg.height, W = cfg.width;

  // per-channel linear gradient background
  double base[4], gi[4], gj[4];
  for (std::size_t c = 0; c < C; ++c) {
    base[c] = 0.3 + 0.3 * uni(rng);
    gi[c] = -0.2 + 0.4 * uni(rng);
    gj[c] = -0.2 + 0.4 * uni(rng);
  }

  // static high-frequency texture, fixed over time
  Tensor noise({C, H, W});
  for (auto& v : noise.data()) v = 0.08 * (uni(rng) - 0.5);

  // drifting soft blobs give the only temporal structure
  std::uniform_int_distribution<int> nblobs(3, 5);
  std::vector<Blob> blobs(std::size_t(nblobs(rng)));
  for (auto& b : blobs) {
    b.ci = uni(rng) * double(H - 1);
    b.cj = uni(rng) * double(W - 1);
    b.vi = -1.5 + 3.0 * uni(rng);
    b.vj = -1.5 + 3.0 * uni(rng);
    b.radius = double(H) * (0.12 + 0.13 * uni(rng));
    for (std::size_t c = 0; c < C; ++c) b.amp[c] = 0.1 + 0.4 * uni(rng);
  }

  std::vector<Tensor> frames;
  frames.reserve(cfg.frames);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    Tensor f({C, H, W});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          double v = base[c] + gi[c] * double(i) / double(H) +
                     gj[c] * double(j) / double(W) + noise(c, i, j);
          for (const auto& b : blobs) {
            const double bi = reflect(b.ci + b.vi * double(t), double(H));
            const double bj = reflect(b.cj + b.vj * double(t), double(W));
            const double di = double(i) - bi, dj = double(j) - bj;
            v += b.amp[c] *
                 std::exp(-(di * di + dj * dj) / (2.0 * b.radius * b.radius));
          }
          f(c, i, j) = std::clamp(v, 0.0, 1.0);
        }
    frames.push_back(std::move(f));
  }
  return frames;
}

EllipseRegion central_region(std::size_t height, std::size_t width,
                             std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x7265676e696f6eull));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  EllipseRegion r;
  r.ci = double(height) * (0.45 + 0.1 * uni(rng));
  r.cj = double(width) * (0.45 + 0.1 * uni(rng));
  r.ri = double(height) * (0.28 + 0.07 * uni(rng));
  r.rj = double(width) * (0.30 + 0.08 * uni(rng));
  r.edge = 0.15;
  return r;
}

Tensor apply_artifact(const Tensor& frame, const EllipseRegion& region,
                      double strength, const GaussianKernel& kernel) {
  if (!(strength >= 0.0 && strength <= 1.0))
    throw std::invalid_argument("artifact strength must lie in [0,1]");
  const std::size_t C = frame.extent(0), H = frame.extent(1),
                    W = frame.extent(2);
  Tensor art =
      depthwise_gaussian_blur(upsample_to(downsample2(frame), H, W), kernel);
  Tensor out = frame;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double a = strength * region.alpha(double(i), double(j));
        out(c, i, j) += a * (art(c, i, j) - frame(c, i, j));
      }
  return out;
}

DatasetManifest generate(const GenConfig& cfg, std::uint64_t seed,
                         const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  DatasetManifest m;
  m.seed = seed;
  m.frames = cfg.frames;
  m.height = cfg.height;
  m.width = cfg.width;
  m.channels = cfg.channels;

  std::mt19937_64 strength_rng(splitmix64(seed ^ 0x73747267ull));
  std::uniform_real_distribution<double> sdist(cfg.strength_min,
                                               cfg.strength_max);

  auto emit = [&](const std::string& id, int label, std::size_t class_idx,
                  std::size_t class_count, double strength) {
    VideoEntry e;
    e.video_id = id;
    e.label = label;
    e.frames = cfg.frames;
    e.file = id + ".isof";
    e.split = split_for(class_idx, class_count, cfg.train_frac, cfg.valid_frac);
    e.strength = strength;
    e.seed = video_seed(seed, id);

    std::vector<Tensor> frames = make_natural_frames(cfg, e.seed);
    if (label == 1) {
      const EllipseRegion region =
          central_region(cfg.height, cfg.width, e.seed);
      const GaussianKernel kernel = gaussian_kernel2d(5, 1.0);
      for (auto& f : frames) f = apply_artifact(f, region, strength, kernel);
    }

    TensorF blob({cfg.frames, cfg.channels, cfg.height, cfg.width});
    std::size_t off = 0;
    for (const auto& f : frames)
      for (double v : f.data()) blob[off++] = float(v);
    save_tensor_file(out_dir + "/" + e.file, blob);
    m.videos.push_back(std::move(e));
  };

  for (std::size_t i = 0; i < cfg.natural; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "nat%04zu", i);
    emit(id, 0, i, cfg.natural, 0.0);
  }
  for (std::size_t i = 0; i < cfg.manipulated; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "man%04zu", i);
    double s = sdist(strength_rng);
    if (!(s > 0.0)) s = cfg.strength_max > 0.0 ? cfg.strength_max : 1e-6;
    emit(id, 1, i, cfg.manipulated, s);
  }

  m.validate();
  save_manifest(m, out_dir + "/manifest.json");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = 1;
  j["seed"] = m.seed;
  j["frames"] = m.frames;
  j["height"] = m.height;
  j["width"] = m.width;
  j["channels"] = m.channels;
  j["videos"] = nlohmann::json::array();
  for (const auto& v : m.videos)
    j["videos"].push_back({{"video_id", v.video_id},
                           {"label", v.label},
                           {"frames", v.frames},
                           {"file", v.file},
                           {"split", v.split},
                           {"strength", v.strength},
                           {"seed", v.seed}});
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest: " + path);
  os << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read manifest: " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  DatasetManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.frames = j.at("frames").get<std::size_t>();
  m.height = j.at("height").get<std::size_t>();
  m.width = j.at("width").get<std::size_t>();
  m.channels = j.at("channels").get<std::size_t>();
  for (const auto& jv : j.at("videos")) {
    VideoEntry v;
    v.video_id = jv.at("video_id").get<std::string>();
    v.label = jv.at("label").get<int>();
    v.frames = jv.at("frames").get<std::size_t>();
    v.file = jv.at("file").get<std::string>();
    v.split = jv.at("split").get<std::string>();
    v.strength = jv.at("strength").get<double>();
    v.seed = jv.at("seed").get<std::uint64_t>();
    m.videos.push_back(std::move(v));
  }
  m.validate();
  return m;
}

std::vector<Tensor> load_video_frames(const std::string& dir,
                                      const VideoEntry& entry) {
  Tensor blob = load_tensor_file<double>(dir + "/" + entry.file);
  if (blob.rank() != 4 || blob.extent(0) != entry.frames)
    throw std::runtime_error("video blob shape mismatch: " + entry.file);
  const std::size_t C = blob.extent(1), H = blob.extent(2), W = blob.extent(3);
  std::vector<Tensor> frames;
  frames.reserve(entry.frames);
  std::size_t off = 0;
  for (std::size_t t = 0; t < entry.frames; ++t) {
    Tensor f({C, H, W});
    std::copy(blob.data().begin() + long(off),
              blob.data().begin() + long(off + f.size()), f.data().begin());
    off += f.size();
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<WindowRef> stratified_windows(const DatasetManifest& m,
                                          const std::string& split,
                                          std::size_t F, std::uint64_t seed) {
  if (F == 0) throw std::invalid_argument("window length must be positive");
  std::vector<WindowRef> out;
  std::mt19937_64 rng(splitmix64(seed));
  for (std::size_t i : m.split_indices(split)) {
    const VideoEntry& v = m.videos[i];
    if (v.frames < F)
      throw std::invalid_argument("video shorter than window: " + v.video_id);
    std::uniform_int_distribution<std::size_t> start(0, v.frames - F);
    out.push_back({i, start(rng)});
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<FaceSequence> stratified_epoch(const DatasetManifest& m,
                                           const std::string& dir,
                                           const std::string& split,
                                           std::size_t F, std::uint64_t seed) {
  std::vector<FaceSequence> out;
  for (const WindowRef& w : stratified_windows(m, split, F, seed)) {
    const VideoEntry& v = m.videos[w.video_index];
    std::vector<Tensor> frames = load_video_frames(dir, v);
    FaceSequence s;
    s.video_id = v.video_id;
    s.label = v.label;
    s.start_index = w.start;
    s.frames.assign(frames.begin() + long(w.start),
                    frames.begin() + long(w.start + F));
    out.push_back(std::move(s));
  }
  return out;
}

RebalancePlan rebalance(std::size_t naturals, std::size_t manipulated) {
  if (naturals == 0 || manipulated == 0)
    throw std::invalid_argument("rebalance needs both classes present");
  RebalancePlan p;
  p.effective_natural = p.natural_weight * double(naturals);
  p.effective_manipulated = p.manipulated_weight * double(manipulated);
  return p;
}

std::vector<int> sample_rebalanced(const RebalancePlan& plan, std::size_t n,
                                   std::uint64_t seed) {
  const double total = plan.effective_natural + plan.effective_manipulated;
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<int> out(n);
  for (auto& v : out) v = uni(rng) * total < plan.effective_natural ? 0 : 1;
  return out;
}

std::vector<FaceSequence> eval_sequences(const std::string& video_id,
                                         int label,
                                         const std::vector<Tensor>& frames,
                                         std::size_t F, std::size_t stride,
                                         std::ostream* log) {
  if (F == 0 || stride == 0)
    throw std::invalid_argument("window length and stride must be positive");
  const std::size_t T = frames.size();
  std::size_t span = (F - 1) * stride + 1;
  if (T < span) {
    if (log)
      (*log) << "video " << video_id << " too short for stride " << stride
             << ", falling back to stride 1\n";
    stride = 1;
    span = F;
    if (T < span)
      throw std::invalid_argument("video shorter than one window: " + video_id);
  }
  std::vector<FaceSequence> out;
  for (std::size_t k = 0; k + span <= T; ++k) {
    FaceSequence s;
    s.video_id = video_id;
    s.label = label;
    s.start_index = k;
    for (std::size_t t = 0; t < F; ++t) s.frames.push_back(frames[k + t * stride]);
    out.push_back(std::move(s));
  }
  return out;
}

double band_power_in_region(const Tensor& frame, const EllipseRegion& region,
                            const GaussianKernel& kernel) {
  LoGSpec spec;
  spec.scales = 1;
  spec.kernel_size = kernel.size;
  spec.sigma = kernel.sigma;
  spec.in_planes = frame.extent(0);
  spec.out_planes = frame.extent(0);
  Tensor band = bandpass(frame, spec, kernel);
  const std::size_t C = band.extent(0), H = band.extent(1), W = band.extent(2);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      if (region.alpha(double(i), double(j)) < 0.999) continue;
      for (std::size_t c = 0; c < C; ++c) acc += band(c, i, j) * band(c, i, j);
      count += C;
    }
  if (count == 0) throw std::invalid_argument("region covers no pixels");
  return acc / double(count);
}

}  // namespace isoface
