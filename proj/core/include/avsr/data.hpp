#pragma once

#include <ATen/core/Generator.h>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace avsr {

// ---- resampling ----------------------------------------------------------

/// Catmull-Rom cubic (a = -0.5).
double cubic_kernel(double x);

/// Row-stochastic resampling matrix (out x in) for one axis. `scale` is the
/// input/output ratio; when it exceeds 1 the kernel is stretched by it
/// (antialiasing). Taps falling outside the input are dropped and the rest
/// renormalised.
torch::Tensor bicubic_matrix(std::int64_t in, std::int64_t out, double scale);

/// Separable antialiased bicubic resize of the last two dims of `input`
/// with explicit per-axis input/output ratios.
torch::Tensor bicubic_resize(const torch::Tensor& input, std::int64_t out_h, std::int64_t out_w,
                             double scale_y, double scale_x);

/// Same with the ratios implied by the sizes.
torch::Tensor bicubic_resize(const torch::Tensor& input, std::int64_t out_h, std::int64_t out_w);

// ---- degradation ---------------------------------------------------------

enum class DegradeMode { kBicubic, kBicubicNoise };

std::string to_string(DegradeMode mode);
DegradeMode parse_degrade_mode(const std::string& name);

struct DegradeOptions {
  DegradeMode mode = DegradeMode::kBicubic;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr std::int64_t kMinLowResSize = 8;

/// Bicubic downsampling of every frame of `hr` (T x 3 x H x W) to
/// (floor(H / alpha), floor(W / beta)); alpha = beta = 1 returns the input
/// unchanged. Throws InvalidInput when the result would be smaller than
/// kMinLowResSize.
torch::Tensor degrade(const torch::Tensor& hr, double alpha, double beta,
                      const DegradeOptions& options = {});

// ---- training samples ----------------------------------------------------

struct TrainingSample {
  torch::Tensor lr;                                        // T x 3 x P x P
  std::vector<torch::Tensor> gt;                           // n_crops x (T x 3 x P x P)
  std::vector<std::pair<std::int64_t, std::int64_t>> offsets;  // crop origin (row, col) on the output grid
  std::vector<torch::Tensor> coords;                       // per crop: 2 x P x P, (delta_alpha, delta_beta)
  double alpha = 1;
  double beta = 1;

  std::int64_t patch() const { return lr.size(-1); }
  std::int64_t out_h() const;
  std::int64_t out_w() const;
};

/// Relative-coordinate grid of a P x P crop at output origin (row, col).
torch::Tensor crop_coordinates(double alpha, double beta, std::int64_t row, std::int64_t col,
                               std::int64_t patch);

/// hr_patch: T x 3 x ceil(alpha P) x ceil(beta P). The LR clip is the
/// bicubic resize to P x P (explicit ratios alpha, beta); crops are n_crops
/// P x P windows at integer origins in [0, floor(alpha P) - P] x
/// [0, floor(beta P) - P], shared across frames.
TrainingSample make_training_sample(const torch::Tensor& hr_patch, std::int64_t patch,
                                    double alpha, double beta, std::int64_t n_crops,
                                    at::Generator& gen);

/// One augmentation draw: `rotations` quarter turns (counter-clockwise) then
/// optional horizontal / vertical flips.
struct AugmentDraw {
  int rotations = 0;
  bool flip_h = false;  // mirror columns
  bool flip_v = false;  // mirror rows

  bool identity() const { return rotations % 4 == 0 && !flip_h && !flip_v; }
};

AugmentDraw draw_augment(at::Generator& gen);

/// Applies `draw` to LR, GT, crop origins and coordinate grids. Quarter turns
/// swap alpha and beta. Exact (coordinates keep following the relative
/// coordinate formula) when alpha P and beta P are integers.
TrainingSample augment(const TrainingSample& sample, const AugmentDraw& draw);
TrainingSample augment(const TrainingSample& sample, std::uint64_t seed);

/// Training scale draw, U[lo, hi].
double sample_scale(at::Generator& gen, double lo = 1.0, double hi = 4.0);

// ---- synthetic clips -----------------------------------------------------

struct SynthOptions {
  std::int64_t frames = 9;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t gratings = 3;
  std::int64_t blobs = 2;
  double max_frequency = 0.24;  // cycles per pixel, below the x2 LR Nyquist limit
  double max_speed = 1.5;       // pixels per frame
  std::uint64_t seed = 0;
};

/// Moving sinusoidal gratings and Gaussian blobs evaluated analytically at
/// pixel centres (sub-pixel motion, no resampling). T x 3 x H x W in
/// [0.1, 0.9].
torch::Tensor synth_clip(const SynthOptions& options);

/// Static clip: every frame equal.
torch::Tensor static_clip(const torch::Tensor& frame, std::int64_t frames);

/// A `width`-pixel vertical bar moving `speed` pixels per frame to the right
/// over a dark background. T x 3 x H x W.
torch::Tensor moving_bar_clip(std::int64_t frames, std::int64_t height, std::int64_t width,
                              std::int64_t bar_width = 1, std::int64_t speed = 1);

// ---- datasets on disk ----------------------------------------------------

struct ClipSource {
  std::string id;
  std::filesystem::path dir;
  std::int64_t frames = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
};

/// `<root>/<id>/frame_%08d.png` plus `<root>/manifest.txt` with one
/// "train <id>" or "val <id>" line per clip.
struct Dataset {
  std::filesystem::path root;
  std::vector<ClipSource> train;
  std::vector<ClipSource> val;
};

Dataset load_dataset(const std::filesystem::path& root);
torch::Tensor load_clip(const ClipSource& clip);

/// Writes a synthetic dataset (n_train + n_val clips) and its manifest.
Dataset write_synthetic_dataset(const std::filesystem::path& root, std::int64_t n_train,
                                std::int64_t n_val, const SynthOptions& options);

}  // namespace avsr
