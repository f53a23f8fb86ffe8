#pragma once

// Checkpoint container: a magic header, a JSON manifest (config echo, epoch,
// validation loss, hypersphere center metadata, parameter census, optimizer
// step count) and the raw tensors appended as ISOF blobs. Parameter tensors
// use the training precision; the center and Adam moments stay in 64-bit.

#include <cstdint>
#include <string>
#include <vector>

#include "isoface/config.hpp"
#include "isoface/model.hpp"
#include "isoface/nn.hpp"
#include "isoface/tensor.hpp"

namespace isoface {

template <typename T>
struct Checkpoint {
  RunConfig config;
  int epoch = 0;
  double valid_loss = 0.0;
  double r_minus = 0.0, r_plus = 0.0;
  TensorT<double> center;
  std::vector<std::string> param_names;
  std::vector<double> lr_scales;
  std::vector<TensorT<T>> param_values;
  std::uint64_t adam_steps = 0;
  std::vector<TensorT<double>> adam_m, adam_v;  // empty when never stepped
};

// Captures the current model state; pass the optimizer to carry its moments
// across a resume, or nullptr for a weights-only snapshot.
template <typename T>
Checkpoint<T> snapshot(const RunConfig& cfg, Model<T>& model,
                       const TensorT<double>& center, double r_minus,
                       double r_plus, int epoch, double valid_loss,
                       Adam<T>* adam);

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt);

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path);

// Copies stored tensors into a model built from the stored config; throws if
// the parameter census (names or shapes) disagrees.
template <typename T>
void restore_model(const Checkpoint<T>& ckpt, Model<T>& model);

template <typename T>
void restore_adam(const Checkpoint<T>& ckpt, Model<T>& model, Adam<T>& adam);

// Reads only the manifest's precision field so callers can dispatch before
// choosing a scalar type.
std::string checkpoint_precision(const std::string& path);

}  // namespace isoface
