#include "isoface/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace isoface {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'I', 'S', 'O', 'C'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error("checkpoint: " + msg);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail("truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) fail("truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

json read_manifest(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) fail("bad magic");
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) fail("unsupported version");
  const std::uint64_t len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), std::streamsize(len));
  if (!is) fail("truncated manifest");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("bad manifest: ") + e.what());
  }
}

template <typename T>
const char* precision_tag();
template <>
const char* precision_tag<float>() {
  return "f32";
}
template <>
const char* precision_tag<double>() {
  return "f64";
}

}  // namespace

template <typename T>
Checkpoint<T> snapshot(const RunConfig& cfg, Model<T>& model,
                       const TensorT<double>& center, double r_minus,
                       double r_plus, int epoch, double valid_loss,
                       Adam<T>* adam) {
  Checkpoint<T> ckpt;
  ckpt.config = cfg;
  ckpt.epoch = epoch;
  ckpt.valid_loss = valid_loss;
  ckpt.r_minus = r_minus;
  ckpt.r_plus = r_plus;
  ckpt.center = center;
  for (const Param<T>* p : model.params()) {
    ckpt.param_names.push_back(p->name);
    ckpt.lr_scales.push_back(p->lr_scale);
    ckpt.param_values.push_back(p->value);
  }
  if (adam != nullptr && adam->steps() > 0) {
    ckpt.adam_steps = adam->steps();
    ckpt.adam_m = adam->moments_m();
    ckpt.adam_v = adam->moments_v();
    if (ckpt.adam_m.size() != ckpt.param_values.size())
      fail("optimizer state does not match parameter set");
  }
  return ckpt;
}

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt) {
  json manifest;
  manifest["config"] = json::parse(run_config_to_json(ckpt.config));
  manifest["precision"] = precision_tag<T>();
  manifest["epoch"] = ckpt.epoch;
  manifest["valid_loss"] = ckpt.valid_loss;
  manifest["r_minus"] = ckpt.r_minus;
  manifest["r_plus"] = ckpt.r_plus;
  manifest["embedding_dim"] = ckpt.center.size();
  json params = json::array();
  for (std::size_t i = 0; i < ckpt.param_names.size(); ++i)
    params.push_back(
        {{"name", ckpt.param_names[i]}, {"lr_scale", ckpt.lr_scales[i]}});
  manifest["params"] = std::move(params);
  manifest["adam_steps"] = ckpt.adam_steps;
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot write " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u64(os, text.size());
  os.write(text.data(), std::streamsize(text.size()));
  save_tensor(os, ckpt.center);
  for (const auto& t : ckpt.param_values) save_tensor(os, t);
  if (ckpt.adam_steps > 0) {
    for (const auto& t : ckpt.adam_m) save_tensor(os, t);
    for (const auto& t : ckpt.adam_v) save_tensor(os, t);
  }
  if (!os) fail("write failed for " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot read " + path);
  const json manifest = read_manifest(is);
  Checkpoint<T> ckpt;
  try {
    if (manifest.at("precision").get<std::string>() != precision_tag<T>())
      fail("precision mismatch");
    ckpt.config = parse_run_config(manifest.at("config").dump());
    ckpt.epoch = manifest.at("epoch").get<int>();
    ckpt.valid_loss = manifest.at("valid_loss").get<double>();
    ckpt.r_minus = manifest.at("r_minus").get<double>();
    ckpt.r_plus = manifest.at("r_plus").get<double>();
    for (const auto& p : manifest.at("params")) {
      ckpt.param_names.push_back(p.at("name").get<std::string>());
      ckpt.lr_scales.push_back(p.at("lr_scale").get<double>());
    }
    ckpt.adam_steps = manifest.at("adam_steps").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(std::string("bad manifest: ") + e.what());
  }
  ckpt.center = load_tensor<double>(is);
  if (ckpt.center.size() != manifest.at("embedding_dim").get<std::size_t>())
    fail("center size disagrees with manifest");
  for (std::size_t i = 0; i < ckpt.param_names.size(); ++i)
    ckpt.param_values.push_back(load_tensor<T>(is));
  if (ckpt.adam_steps > 0) {
    for (std::size_t i = 0; i < ckpt.param_names.size(); ++i)
      ckpt.adam_m.push_back(load_tensor<double>(is));
    for (std::size_t i = 0; i < ckpt.param_names.size(); ++i)
      ckpt.adam_v.push_back(load_tensor<double>(is));
  }
  return ckpt;
}

template <typename T>
void restore_model(const Checkpoint<T>& ckpt, Model<T>& model) {
  ParamRefs<T> params = model.params();
  if (params.size() != ckpt.param_values.size())
    fail("parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != ckpt.param_names[i])
      fail("parameter name mismatch at " + ckpt.param_names[i]);
    if (params[i]->value.shape() != ckpt.param_values[i].shape())
      fail("parameter shape mismatch at " + ckpt.param_names[i]);
    params[i]->value = ckpt.param_values[i];
    params[i]->lr_scale = ckpt.lr_scales[i];
  }
}

template <typename T>
void restore_adam(const Checkpoint<T>& ckpt, Model<T>& model, Adam<T>& adam) {
  if (ckpt.adam_steps == 0) return;
  ParamRefs<T> params = model.params();
  if (ckpt.adam_m.size() != params.size()) fail("optimizer state mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (ckpt.adam_m[i].shape() != params[i]->value.shape())
      fail("optimizer moment shape mismatch at " + ckpt.param_names[i]);
  adam.moments_m() = ckpt.adam_m;
  adam.moments_v() = ckpt.adam_v;
  adam.set_steps(ckpt.adam_steps);
}

std::string checkpoint_precision(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot read " + path);
  const json manifest = read_manifest(is);
  return manifest.at("precision").get<std::string>();
}

template Checkpoint<float> snapshot(const RunConfig&, Model<float>&,
                                    const TensorT<double>&, double, double,
                                    int, double, Adam<float>*);
template Checkpoint<double> snapshot(const RunConfig&, Model<double>&,
                                     const TensorT<double>&, double, double,
                                     int, double, Adam<double>*);
template void save_checkpoint(const std::string&, const Checkpoint<float>&);
template void save_checkpoint(const std::string&, const Checkpoint<double>&);
template Checkpoint<float> load_checkpoint<float>(const std::string&);
template Checkpoint<double> load_checkpoint<double>(const std::string&);
template void restore_model(const Checkpoint<float>&, Model<float>&);
template void restore_model(const Checkpoint<double>&, Model<double>&);
template void restore_adam(const Checkpoint<float>&, Model<float>&,
                           Adam<float>&);
template void restore_adam(const Checkpoint<double>&, Model<double>&,
                           Adam<double>&);

}  // namespace isoface
