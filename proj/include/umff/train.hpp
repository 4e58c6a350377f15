#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "umff/checkpoint.hpp"
#include "umff/data.hpp"
#include "umff/loss.hpp"
#include "umff/model.hpp"

namespace umff::train {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  double initial_lr = 1e-3;
  double lr_decay_factor = 0.5;
  int lr_decay_every = 10;
  int crop = 64;
  std::uint64_t seed = 0;
  loss::LossWeights weights;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // 0 disables clipping
  int max_steps = 0;       // 0: run all epochs

  /// 300 epochs, batch 8, crop 256, decay every 50 epochs.
  static TrainConfig full_scale();

  void validate() const;
  /// Returns false for an unknown key; throws on a malformed value.
  bool set(std::string_view key, std::string_view value);
  std::string to_record() const;
};

/// initial_lr * lr_decay_factor ^ floor(epoch / lr_decay_every).
double lr_at(const TrainConfig& config, int epoch);

/// Model and training settings read from one key=value file.
struct RunConfig {
  model::ModelConfig model;
  TrainConfig train;
  std::string to_record() const;
};

/// Parses flat key=value lines; '#' starts a comment. Unknown keys and
/// malformed lines are rejected with their line number.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Global L2 norm of all parameter gradients; scales them down to `max_norm`
/// when it is exceeded. Returns the norm before clipping.
double clip_gradients(ParameterStore<float>& store, double max_norm);

class Adam {
 public:
  Adam(ParameterStore<float>& store, double beta1, double beta2, double eps);

  /// One bias-corrected update with learning rate `lr`. Parameters without a
  /// gradient are left alone.
  void step(double lr);

  const checkpoint::OptimizerState& state() const { return state_; }
  void load_state(const checkpoint::OptimizerState& state);

 private:
  ParameterStore<float>* store_;
  double beta1_, beta2_, eps_;
  checkpoint::OptimizerState state_;
};

struct StepMetrics {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  double l_con = 0.0;
  double l_fre = 0.0;
  double l_ue = 0.0;
  double l_total = 0.0;
  /// "step=.. epoch=.. lr=.. l_con=.. l_fre=.. l_ue=.. l_total=.."
  std::string line() const;
};

/// Raised when a step produces a non-finite loss.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const StepMetrics& metrics, std::uint64_t input_hash, const std::string& cause = {});
  const StepMetrics& metrics() const { return metrics_; }
  std::uint64_t input_hash() const { return input_hash_; }

 private:
  StepMetrics metrics_;
  std::uint64_t input_hash_;
};

/// FNV-1a over the bytes of a tensor's values.
std::uint64_t hash_values(const diff::Tensor<float>& t);

struct TrainOptions {
  std::filesystem::path out_dir;                           // empty: no files written
  const std::vector<data::PairedSample>* validation = nullptr;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  std::vector<StepMetrics> log;
  int steps = 0;
  int epochs_completed = 0;
  double best_validation_psnr = 0.0;
  checkpoint::OptimizerState optimizer;
};

/// Each epoch visits the samples in data::epoch_order, augments them (crop and
/// flip), and takes floor(n / batch) steps, or one step on all samples when
/// n < batch. Per epoch writes out_dir/last.ckpt, and out_dir/best.ckpt when a
/// validation set improves PSNR. Each step appends to out_dir/metrics.log.
TrainResult train(model::Model<float>& model, const std::vector<data::PairedSample>& dataset,
                  const TrainConfig& config, const TrainOptions& options = {});

}  // namespace umff::train
