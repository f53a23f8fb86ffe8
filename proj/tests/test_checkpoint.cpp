#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "isoface/checkpoint.hpp"

using namespace isoface;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.model.height = 16;
  cfg.model.width = 16;
  cfg.model.channels = 3;
  cfg.model.branch_channels = 4;
  cfg.model.fusion_channels = 8;
  cfg.model.backbone_channels = {8, 16};
  cfg.model.hidden_dim = 8;
  cfg.model.log_scales = 2;
  cfg.data.height = 16;
  cfg.data.width = 16;
  cfg.data.frames = 24;
  cfg.train.window = 6;
  return cfg;
}

std::string tmp_file(const char* name) {
  return (fs::temp_directory_path() / name).string();
}

Tensor random_center(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor c({dim});
  for (auto& v : c.data()) v = dist(rng);
  return c;
}

}  // namespace

TEST_CASE("checkpoint: weights-only round trip is exact") {
  RunConfig cfg = tiny_run_config();
  Model<float> model(cfg.model, 17);
  Tensor center = random_center(cfg.model.embedding_dim(), 3);

  const std::string path = tmp_file("isoface_ckpt_a.isoc");
  save_checkpoint(path, snapshot(cfg, model, center, 0.021, 0.819, 4, 0.125,
                                 static_cast<Adam<float>*>(nullptr)));
  Checkpoint<float> back = load_checkpoint<float>(path);

  CHECK(back.epoch == 4);
  CHECK(back.valid_loss == 0.125);
  CHECK(back.r_minus == 0.021);
  CHECK(back.r_plus == 0.819);
  CHECK(back.adam_steps == 0);
  CHECK(back.config.model.backbone_channels == cfg.model.backbone_channels);
  for (std::size_t i = 0; i < center.size(); ++i)
    CHECK(back.center[i] == center[i]);

  ParamRefs<float> params = model.params();
  REQUIRE(back.param_values.size() == params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    CHECK(back.param_names[p] == params[p]->name);
    CHECK(back.lr_scales[p] == params[p]->lr_scale);
    REQUIRE(back.param_values[p].shape() == params[p]->value.shape());
    for (std::size_t i = 0; i < params[p]->value.size(); ++i)
      CHECK(back.param_values[p][i] == params[p]->value[i]);
  }
}

TEST_CASE("checkpoint: restore into a differently seeded model") {
  RunConfig cfg = tiny_run_config();
  Model<float> original(cfg.model, 17);
  Tensor center = random_center(cfg.model.embedding_dim(), 3);
  const std::string path = tmp_file("isoface_ckpt_b.isoc");
  save_checkpoint(path, snapshot(cfg, original, center, 0.02, 0.8, 1, 0.5,
                                 static_cast<Adam<float>*>(nullptr)));

  Checkpoint<float> ckpt = load_checkpoint<float>(path);
  Model<float> fresh(ckpt.config.model, 99);
  restore_model(ckpt, fresh);
  ParamRefs<float> a = original.params(), b = fresh.params();
  for (std::size_t p = 0; p < a.size(); ++p)
    for (std::size_t i = 0; i < a[p]->value.size(); ++i)
      CHECK(a[p]->value[i] == b[p]->value[i]);
}

TEST_CASE("checkpoint: optimizer moments and step count survive") {
  RunConfig cfg = tiny_run_config();
  Model<double> model(cfg.model, 5);
  Adam<double> adam(0.9, 0.999, 1e-8, 1e-6);
  ParamRefs<double> params = model.params();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 1e-3);
  for (int step = 0; step < 3; ++step) {
    for (Param<double>* p : params)
      for (auto& g : p->grad.data()) g = dist(rng);
    adam.step(params, 1e-3);
  }

  Tensor center = random_center(cfg.model.embedding_dim(), 3);
  const std::string path = tmp_file("isoface_ckpt_c.isoc");
  save_checkpoint(path,
                  snapshot(cfg, model, center, 0.02, 0.8, 3, 0.25, &adam));

  Checkpoint<double> ckpt = load_checkpoint<double>(path);
  CHECK(ckpt.adam_steps == 3);
  Model<double> fresh(ckpt.config.model, 6);
  restore_model(ckpt, fresh);
  Adam<double> adam2(0.9, 0.999, 1e-8, 1e-6);
  restore_adam(ckpt, fresh, adam2);
  CHECK(adam2.steps() == 3);
  REQUIRE(adam2.moments_m().size() == adam.moments_m().size());
  for (std::size_t p = 0; p < adam.moments_m().size(); ++p)
    for (std::size_t i = 0; i < adam.moments_m()[p].size(); ++i) {
      CHECK(adam2.moments_m()[p][i] == adam.moments_m()[p][i]);
      CHECK(adam2.moments_v()[p][i] == adam.moments_v()[p][i]);
    }
}

TEST_CASE("checkpoint: precision tag is enforced") {
  RunConfig cfg = tiny_run_config();
  Model<float> model(cfg.model, 1);
  Tensor center = random_center(cfg.model.embedding_dim(), 3);
  const std::string path = tmp_file("isoface_ckpt_d.isoc");
  save_checkpoint(path, snapshot(cfg, model, center, 0.02, 0.8, 0, 0.0,
                                 static_cast<Adam<float>*>(nullptr)));
  CHECK(checkpoint_precision(path) == "f32");
  CHECK_THROWS_AS(load_checkpoint<double>(path), std::runtime_error);
}

TEST_CASE("checkpoint: corrupted header is rejected") {
  const std::string path = tmp_file("isoface_ckpt_e.isoc");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE0000000000000000";
  }
  CHECK_THROWS_AS(load_checkpoint<float>(path), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint<float>(tmp_file("isoface_absent.isoc")),
                  std::runtime_error);
}

TEST_CASE("checkpoint: shape mismatch on restore is rejected") {
  RunConfig cfg = tiny_run_config();
  Model<float> model(cfg.model, 1);
  Tensor center = random_center(cfg.model.embedding_dim(), 3);
  const std::string path = tmp_file("isoface_ckpt_f.isoc");
  save_checkpoint(path, snapshot(cfg, model, center, 0.02, 0.8, 0, 0.0,
                                 static_cast<Adam<float>*>(nullptr)));
  Checkpoint<float> ckpt = load_checkpoint<float>(path);

  ModelConfig other = cfg.model;
  other.hidden_dim = 4;  // different recurrent shapes
  Model<float> wrong(other, 1);
  CHECK_THROWS_AS(restore_model(ckpt, wrong), std::runtime_error);
}
