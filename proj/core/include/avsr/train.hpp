#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "avsr/model.hpp"

namespace avsr {

struct TrainConfig {
  std::int64_t iterations = 300000;
  double lr_init = 2e-4;
  double lr_final = 1e-6;
  std::int64_t batch_size = 8;
  std::int64_t patch = 80;       // P
  std::int64_t frames = 15;      // T
  std::int64_t crops = 1;        // GT crops per sample
  double epsilon = 1e-9;
  double scale_min = 1.0;        // alpha, beta ~ U[scale_min, scale_max]
  double scale_max = 4.0;
  bool augment = true;
  std::int64_t log_every = 100;
  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::uint64_t seed = 0;

  void validate() const;
};

/// Cosine annealing from lr_init at step 0 to lr_final at `iterations`.
double cosine_lr(std::int64_t step, std::int64_t iterations, double lr_init, double lr_final);

/// mean(sqrt((pred - gt)^2 + epsilon)) over every element.
torch::Tensor charbonnier_loss(const torch::Tensor& pred, const torch::Tensor& gt,
                               double epsilon = 1e-9);

struct LossRecord {
  std::int64_t step;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<LossRecord> curve;
  std::int64_t steps = 0;
  double seconds = 0;
};

struct TrainHooks {
  /// Called after every logged step.
  std::function<void(const LossRecord&)> on_log;
  /// Periodic and final checkpoints go here when non-empty.
  std::filesystem::path checkpoint_path;
};

/// Rounds a training scale so that scale * patch is an integer (flip and
/// rotation augmentation stay pixel-exact on the output grid).
double snap_scale(double scale, std::int64_t patch);

/// Adam (0.9, 0.999, no weight decay) on the model's trainable parameters over
/// random clips, crops and scales from `clips` (each T x 3 x H x W).
/// Throws TrainingAborted when the loss or gradient norm is not finite.
TrainResult train(AvsrModelImpl& model, const std::vector<torch::Tensor>& clips,
                  const TrainConfig& config, const TrainHooks& hooks = {});

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

}  // namespace avsr
