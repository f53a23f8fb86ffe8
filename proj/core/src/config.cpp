#include "isoface/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace isoface {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("config: " + msg);
}

void require_keys(const json& obj, const char* scope,
                  std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(std::string(scope) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (key == k) known = true;
    if (!known) fail("unknown key '" + key + "' in " + scope);
  }
}

template <typename T>
void get(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      fail(std::string("bad value for '") + key + "'");
    }
  }
}

void parse_model(const json& j, ModelConfig& m) {
  require_keys(j, "model",
               {"height", "width", "channels", "branch_channels",
                "fusion_channels", "fusion_groups", "backbone_channels",
                "hidden_dim", "rnn_fusion", "single_branch", "log_scales",
                "log_kernel", "log_sigma", "dropout"});
  get(j, "height", m.height);
  get(j, "width", m.width);
  get(j, "channels", m.channels);
  get(j, "branch_channels", m.branch_channels);
  get(j, "fusion_channels", m.fusion_channels);
  get(j, "fusion_groups", m.fusion_groups);
  get(j, "backbone_channels", m.backbone_channels);
  get(j, "hidden_dim", m.hidden_dim);
  if (j.contains("rnn_fusion")) {
    const std::string f = j.at("rnn_fusion").get<std::string>();
    if (f == "cat")
      m.rnn_fusion = RnnFusion::kCat;
    else if (f == "sum")
      m.rnn_fusion = RnnFusion::kSum;
    else
      fail("rnn_fusion must be 'cat' or 'sum'");
  }
  get(j, "single_branch", m.single_branch);
  get(j, "log_scales", m.log_scales);
  get(j, "log_kernel", m.log_kernel);
  get(j, "log_sigma", m.log_sigma);
  get(j, "dropout", m.dropout);
}

void parse_data(const json& j, GenConfig& d) {
  require_keys(j, "data",
               {"natural", "manipulated", "frames", "height", "width",
                "channels", "strength_min", "strength_max", "train_frac",
                "valid_frac"});
  get(j, "natural", d.natural);
  get(j, "manipulated", d.manipulated);
  get(j, "frames", d.frames);
  get(j, "height", d.height);
  get(j, "width", d.width);
  get(j, "channels", d.channels);
  get(j, "strength_min", d.strength_min);
  get(j, "strength_max", d.strength_max);
  get(j, "train_frac", d.train_frac);
  get(j, "valid_frac", d.valid_frac);
}

}  // namespace

void RunConfig::validate() const {
  if (precision != "f32" && precision != "f64")
    fail("precision must be 'f32' or 'f64'");
  model.validate();
  data.validate();
  if (data.height != model.height || data.width != model.width ||
      data.channels != model.channels)
    fail("data extents must match model extents");
  if (r_minus != 0.0 || r_plus != 0.0) {
    if (!(r_minus > 0.0 && r_minus < r_plus))
      fail("radii must satisfy 0 < r_minus < r_plus");
  }
  if (!(optim.lr > 0.0)) fail("learning rate must be positive");
  if (!(optim.weight_decay >= 0.0)) fail("weight decay must be non-negative");
  if (sched.patience < 1 || sched.max_drops < 0 || !(sched.factor > 1.0))
    fail("bad scheduler settings");
  if (train.epochs < 0) fail("epochs must be non-negative");
  if (train.window == 0 || train.window > data.frames)
    fail("window must lie in [1, data.frames]");
  if (train.batch_size == 0) fail("batch size must be positive");
  if (eval.stride == 0) fail("eval stride must be positive");
  for (double c : eval.cutoffs)
    if (!(c > 0.0 && c <= 1.0)) fail("cutoffs must lie in (0,1]");
  for (double r : eval.recalls)
    if (!(r > 0.0 && r <= 1.0)) fail("recall targets must lie in (0,1]");
  if (eval.bins == 0) fail("histogram bins must be positive");
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  require_keys(j, "top level",
               {"seed", "precision", "data_dir", "out_dir", "model", "data",
                "loss", "optimizer", "scheduler", "train", "eval"});
  RunConfig cfg;
  get(j, "seed", cfg.seed);
  get(j, "precision", cfg.precision);
  get(j, "data_dir", cfg.data_dir);
  get(j, "out_dir", cfg.out_dir);
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  if (j.contains("data")) parse_data(j.at("data"), cfg.data);
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    require_keys(l, "loss", {"r_minus", "r_plus"});
    get(l, "r_minus", cfg.r_minus);
    get(l, "r_plus", cfg.r_plus);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    require_keys(o, "optimizer", {"lr", "beta1", "beta2", "eps", "weight_decay"});
    get(o, "lr", cfg.optim.lr);
    get(o, "beta1", cfg.optim.beta1);
    get(o, "beta2", cfg.optim.beta2);
    get(o, "eps", cfg.optim.eps);
    get(o, "weight_decay", cfg.optim.weight_decay);
  }
  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    require_keys(s, "scheduler", {"patience", "factor", "max_drops"});
    get(s, "patience", cfg.sched.patience);
    get(s, "factor", cfg.sched.factor);
    get(s, "max_drops", cfg.sched.max_drops);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    require_keys(t, "train", {"epochs", "window", "batch_size"});
    get(t, "epochs", cfg.train.epochs);
    get(t, "window", cfg.train.window);
    get(t, "batch_size", cfg.train.batch_size);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    require_keys(e, "eval", {"stride", "cutoffs", "recalls", "bins"});
    get(e, "stride", cfg.eval.stride);
    get(e, "cutoffs", cfg.eval.cutoffs);
    get(e, "recalls", cfg.eval.recalls);
    get(e, "bins", cfg.eval.bins);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["precision"] = cfg.precision;
  j["data_dir"] = cfg.data_dir;
  j["out_dir"] = cfg.out_dir;
  j["model"] = {{"height", cfg.model.height},
                {"width", cfg.model.width},
                {"channels", cfg.model.channels},
                {"branch_channels", cfg.model.branch_channels},
                {"fusion_channels", cfg.model.fusion_channels},
                {"fusion_groups", cfg.model.fusion_groups},
                {"backbone_channels", cfg.model.backbone_channels},
                {"hidden_dim", cfg.model.hidden_dim},
                {"rnn_fusion",
                 cfg.model.rnn_fusion == RnnFusion::kCat ? "cat" : "sum"},
                {"single_branch", cfg.model.single_branch},
                {"log_scales", cfg.model.log_scales},
                {"log_kernel", cfg.model.log_kernel},
                {"log_sigma", cfg.model.log_sigma},
                {"dropout", cfg.model.dropout}};
  j["data"] = {{"natural", cfg.data.natural},
               {"manipulated", cfg.data.manipulated},
               {"frames", cfg.data.frames},
               {"height", cfg.data.height},
               {"width", cfg.data.width},
               {"channels", cfg.data.channels},
               {"strength_min", cfg.data.strength_min},
               {"strength_max", cfg.data.strength_max},
               {"train_frac", cfg.data.train_frac},
               {"valid_frac", cfg.data.valid_frac}};
  j["loss"] = {{"r_minus", cfg.r_minus}, {"r_plus", cfg.r_plus}};
  j["optimizer"] = {{"lr", cfg.optim.lr},
                    {"beta1", cfg.optim.beta1},
                    {"beta2", cfg.optim.beta2},
                    {"eps", cfg.optim.eps},
                    {"weight_decay", cfg.optim.weight_decay}};
  j["scheduler"] = {{"patience", cfg.sched.patience},
                    {"factor", cfg.sched.factor},
                    {"max_drops", cfg.sched.max_drops}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"window", cfg.train.window},
                {"batch_size", cfg.train.batch_size}};
  j["eval"] = {{"stride", cfg.eval.stride},
               {"cutoffs", cfg.eval.cutoffs},
               {"recalls", cfg.eval.recalls},
               {"bins", cfg.eval.bins}};
  return j.dump(2);
}

}  // namespace isoface
