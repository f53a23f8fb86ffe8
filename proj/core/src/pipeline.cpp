#include "isoface/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "isoface/loss.hpp"

namespace isoface {

namespace {

using nlohmann::json;

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ull * std::uint64_t(epoch));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void check_dims(const DatasetManifest& m, const ModelConfig& mc) {
  if (m.height != mc.height || m.width != mc.width ||
      m.channels != mc.channels)
    throw std::runtime_error("dataset extents do not match model config");
}

std::pair<double, double> resolve_radii(const RunConfig& cfg,
                                        std::size_t embedding_dim) {
  if (cfg.r_minus != 0.0 || cfg.r_plus != 0.0)
    return {cfg.r_minus, cfg.r_plus};
  return scaled_radii(embedding_dim);
}

template <typename T>
std::vector<Tensor> first_window(const std::vector<Tensor>& frames,
                                 std::size_t F) {
  if (frames.size() < F)
    throw std::runtime_error("video shorter than the training window");
  return std::vector<Tensor>(frames.begin(), frames.begin() + long(F));
}

// %.17g keeps the log byte-stable and round-trippable
std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename T>
TrainOutputs train_run(const RunConfig& cfg, std::ostream* console) {
  cfg.validate();
  DatasetManifest m = load_manifest(cfg.data_dir + "/manifest.json");
  check_dims(m, cfg.model);
  std::filesystem::create_directories(cfg.out_dir);

  Model<T> model(cfg.model, cfg.seed);
  const std::size_t F = cfg.train.window;
  if (console)
    (*console) << "model parameters: " << model.param_count() << "\n";

  // center of the initialized network over the first window of every natural
  // training video
  std::vector<TensorT<T>> nat_embs;
  for (std::size_t i : m.split_indices("train")) {
    const VideoEntry& v = m.videos[i];
    if (v.label != 0) continue;
    std::vector<Tensor> frames = load_video_frames(cfg.data_dir, v);
    nat_embs.push_back(
        model.embed(convert_frames<T>(first_window<T>(frames, F))));
  }
  if (nat_embs.empty())
    throw std::runtime_error("training split has no natural videos");
  TensorT<T> center_t = compute_center(nat_embs);
  Tensor center(center_t.shape());
  for (std::size_t i = 0; i < center.size(); ++i)
    center[i] = double(center_t[i]);

  const auto [r_minus, r_plus] =
      resolve_radii(cfg, model.config().embedding_dim());
  HypersphereSpec spec{center, r_minus, r_plus};

  // fixed validation windows keep the per-epoch loss comparable
  struct ValidSeq {
    std::string video_id;
    int label;
    std::vector<TensorT<T>> frames;
  };
  std::vector<ValidSeq> valid;
  for (std::size_t i : m.split_indices("valid")) {
    const VideoEntry& v = m.videos[i];
    std::vector<Tensor> frames = load_video_frames(cfg.data_dir, v);
    valid.push_back({v.video_id, v.label,
                     convert_frames<T>(first_window<T>(frames, F))});
  }
  if (valid.empty()) throw std::runtime_error("validation split is empty");

  auto evaluate_valid = [&]() -> std::pair<double, double> {
    std::vector<double> nat_h, man_h;
    std::vector<ScoreRecord> recs;
    for (const ValidSeq& s : valid) {
      const double dist = anomaly_score(model.embed(s.frames), spec);
      if (s.label == 0)
        nat_h.push_back(std::max(0.0, dist - r_minus));
      else
        man_h.push_back(std::max(0.0, r_plus - dist));
      recs.push_back({s.video_id, 0, dist, s.label});
    }
    double loss = 0.0;
    if (!nat_h.empty()) loss += exact_mean(nat_h);
    if (!man_h.empty()) loss += exact_mean(man_h);
    const double a =
        (nat_h.empty() || man_h.empty()) ? 0.5 : auc(recs);
    return {loss, a};
  };

  TrainOutputs out;
  out.checkpoint_path = cfg.out_dir + "/checkpoint.isoc";
  out.log_path = cfg.out_dir + "/train_log.jsonl";
  std::ofstream log(out.log_path, std::ios::binary);
  if (!log) throw std::runtime_error("cannot write " + out.log_path);

  if (cfg.train.epochs == 0) {
    const auto [vloss, vauc] = evaluate_valid();
    (void)vauc;
    save_checkpoint(out.checkpoint_path,
                    snapshot(cfg, model, center, r_minus, r_plus, 0, vloss,
                             static_cast<Adam<T>*>(nullptr)));
    out.best_epoch = 0;
    out.best_valid_loss = vloss;
    return out;
  }

  Adam<T> adam(cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps,
               cfg.optim.weight_decay);
  ParamRefs<T> params = model.params();

  std::vector<double> valid_history;
  double best_valid = std::numeric_limits<double>::infinity();
  Checkpoint<T> best;

  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    const double lr = plateau_scheduler(valid_history, cfg.optim.lr,
                                        cfg.sched.patience, cfg.sched.factor,
                                        cfg.sched.max_drops);
    std::vector<FaceSequence> seqs = stratified_epoch(
        m, cfg.data_dir, "train", F, epoch_seed(cfg.seed, epoch));

    std::size_t n_nat = 0, n_man = 0;
    for (const auto& s : seqs) (s.label == 0 ? n_nat : n_man)++;
    const RebalancePlan plan = rebalance(n_nat, n_man);

    // epoch expansion: the integer part of a class weight duplicates, the
    // fractional part keeps with that probability
    std::mt19937_64 rng(epoch_seed(cfg.seed ^ 0x7265626c616e63ull, epoch));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const double w = seqs[i].label == 0 ? plan.natural_weight
                                          : plan.manipulated_weight;
      std::size_t copies = std::size_t(w);
      if (uni(rng) < w - double(copies)) ++copies;
      for (std::size_t c = 0; c < copies; ++c) order.push_back(i);
    }
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batch_count = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.train.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.train.batch_size);
      std::size_t bn = 0, bm = 0;
      for (std::size_t k = b; k < end; ++k)
        (seqs[order[k]].label == 0 ? bn : bm)++;

      zero_grad(params);
      std::vector<double> nat_h, man_h;
      for (std::size_t k = b; k < end; ++k) {
        const FaceSequence& s = seqs[order[k]];
        TensorT<T> emb =
            model.forward_sequence(convert_frames<T>(s.frames), true);
        const double dist = anomaly_score(emb, spec);
        double scale = 0.0;
        if (s.label == 0) {
          nat_h.push_back(std::max(0.0, dist - r_minus));
          if (dist > r_minus && dist >= 1e-12)
            scale = 1.0 / (double(bn) * dist);
        } else {
          man_h.push_back(std::max(0.0, r_plus - dist));
          if (dist < r_plus && dist >= 1e-12)
            scale = -1.0 / (double(bm) * dist);
        }
        if (scale == 0.0) continue;
        TensorT<T> d(emb.shape());
        for (std::size_t i = 0; i < d.size(); ++i)
          d[i] = T(scale * (double(emb[i]) - center[i]));
        model.backward_sequence(d);
      }
      double batch_loss = 0.0;
      if (!nat_h.empty()) batch_loss += exact_mean(nat_h);
      if (!man_h.empty()) batch_loss += exact_mean(man_h);
      loss_sum += batch_loss;
      ++batch_count;
      adam.step(params, lr);
    }
    const double train_loss =
        batch_count > 0 ? loss_sum / double(batch_count) : 0.0;

    const auto [valid_loss, valid_auc] = evaluate_valid();
    valid_history.push_back(valid_loss);

    log << "{\"epoch\":" << epoch << ",\"lr\":" << fmt_double(lr)
        << ",\"train_loss\":" << fmt_double(train_loss)
        << ",\"valid_auc\":" << fmt_double(valid_auc)
        << ",\"valid_loss\":" << fmt_double(valid_loss) << "}\n";
    log.flush();
    if (console)
      (*console) << "epoch " << epoch << " train " << train_loss << " valid "
                 << valid_loss << " auc " << valid_auc << " lr " << lr
                 << std::endl;
    out.history.push_back({epoch, train_loss, valid_loss, valid_auc, lr});

    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      best = snapshot(cfg, model, center, r_minus, r_plus, epoch, valid_loss,
                      &adam);
      out.best_epoch = epoch;
    }
  }
  out.best_valid_loss = best_valid;
  save_checkpoint(out.checkpoint_path, best);
  return out;
}

template <typename T>
std::vector<ScoreRecord> score_split(const Checkpoint<T>& ckpt,
                                     const std::string& data_dir,
                                     const std::string& split,
                                     std::size_t stride, std::ostream* log) {
  DatasetManifest m = load_manifest(data_dir + "/manifest.json");
  check_dims(m, ckpt.config.model);
  if (stride == 0) stride = ckpt.config.eval.stride;

  Model<T> model(ckpt.config.model, ckpt.config.seed);
  restore_model(ckpt, model);
  HypersphereSpec spec{ckpt.center, ckpt.r_minus, ckpt.r_plus};

  std::vector<ScoreRecord> records;
  for (std::size_t i : m.split_indices(split)) {
    const VideoEntry& v = m.videos[i];
    std::vector<Tensor> frames = load_video_frames(data_dir, v);
    for (const FaceSequence& s : eval_sequences(
             v.video_id, v.label, frames, ckpt.config.train.window, stride,
             log)) {
      const double score =
          anomaly_score(model.embed(convert_frames<T>(s.frames)), spec);
      records.push_back({s.video_id, s.start_index, score, s.label});
    }
  }
  return records;
}

namespace {

std::string cutoff_key(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

json metric_block(const std::vector<ScoreRecord>& records,
                  const std::vector<double>& cutoffs,
                  const std::vector<double>& recalls, std::size_t bins) {
  const RocCurve curve = roc(records);
  json block;
  block["auc"] = auc(records);
  json pauc_j, tauc_j, tar_j;
  for (double c : cutoffs) {
    const std::string key = cutoff_key(c);
    pauc_j[key] = pauc_standardized(curve, c);
    tauc_j[key] = tauc(curve, c);
    tar_j[key] = tar_at_far(curve, c);
  }
  block["pauc"] = std::move(pauc_j);
  block["tauc"] = std::move(tauc_j);
  block["tar"] = std::move(tar_j);
  json wp_j;
  for (double r : recalls) {
    const WeightedPrecision wp = log_weighted_precision(records, r);
    wp_j[cutoff_key(r)] = {{"log_wp", wp.log_wp},
                           {"achieved_recall", wp.achieved_recall},
                           {"threshold", wp.threshold},
                           {"target_met", wp.target_met}};
  }
  block["log_wp"] = std::move(wp_j);
  block["overlap_coefficient"] =
      overlap_coefficient(histogram(records, bins));
  return block;
}

}  // namespace

std::string evaluation_report(const std::vector<ScoreRecord>& records,
                              const std::vector<double>& cutoffs,
                              const std::vector<double>& recalls,
                              std::size_t bins, const std::string& csv_text) {
  if (records.empty()) throw std::invalid_argument("no score records");
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(csv_text)));
  json report;
  report["csv_fnv1a64"] = hash;
  report["record_count"] = records.size();
  report["sequence"] = metric_block(records, cutoffs, recalls, bins);
  report["video"] = metric_block(video_level(records), cutoffs, recalls, bins);
  return report.dump(2);
}

template TrainOutputs train_run<float>(const RunConfig&, std::ostream*);
template TrainOutputs train_run<double>(const RunConfig&, std::ostream*);
template std::vector<ScoreRecord> score_split<float>(const Checkpoint<float>&,
                                                     const std::string&,
                                                     const std::string&,
                                                     std::size_t,
                                                     std::ostream*);
template std::vector<ScoreRecord> score_split<double>(
    const Checkpoint<double>&, const std::string&, const std::string&,
    std::size_t, std::ostream*);

}  // namespace isoface
