#pragma once

#include <torch/torch.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "avsr/layers.hpp"

namespace avsr {

/// Scaling pair plus the LR frame size it applies to.
class ScaleSpec {
 public:
  /// Throws InvalidInput unless alpha, beta >= 1 and the size is positive.
  ScaleSpec(double alpha, double beta, std::int64_t in_h, std::int64_t in_w);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  std::int64_t in_h() const { return in_h_; }
  std::int64_t in_w() const { return in_w_; }
  std::int64_t out_h() const { return out_h_; }
  std::int64_t out_w() const { return out_w_; }

  /// delta_alpha for every output row / delta_beta for every output column,
  /// each in [-0.5, 0.5).
  torch::Tensor row_offsets(const torch::TensorOptions& options = {}) const;
  torch::Tensor col_offsets(const torch::TensorOptions& options = {}) const;

 private:
  double alpha_;
  double beta_;
  std::int64_t in_h_;
  std::int64_t in_w_;
  std::int64_t out_h_;
  std::int64_t out_w_;
};

inline constexpr int kDefaultOctaves = 6;
/// alpha and beta are divided by this (the largest training scale) before
/// encoding.
inline constexpr double kScaleNormaliser = 4.0;
/// Number of scalars fed to the encoder: alpha, beta, delta_alpha, delta_beta, k1, k2.
inline constexpr int kHyperInputs = 6;

/// Sinusoidal encoding of every entry of `values`: for octave j the pair
/// (sin(2^j pi v), cos(2^j pi v)). Shape (..., n) -> (..., n * 2 * octaves),
/// grouped per scalar.
torch::Tensor positional_encoding(const torch::Tensor& values, int octaves);

/// Kernel-tap index mapped to a centred value in (-0.5, 0.5).
double normalised_tap(std::int64_t k, std::int64_t kernel);

/// Encoded MLP input for one output pixel (row, col) and tap (k1, k2).
torch::Tensor encode_scale_inputs(const ScaleSpec& spec, std::int64_t row, std::int64_t col,
                                  std::int64_t k1, std::int64_t k2, std::int64_t kernel,
                                  int octaves = kDefaultOctaves);

/// Hyper-network: sine-activated MLP mapping an encoded (scale, coordinate,
/// tap) vector to one kernel weight. First layer frequency 30, hidden layers
/// initialised with the variance-preserving periodic scheme.
class HyperMLPImpl : public torch::nn::Module {
 public:
  static constexpr double kOmega = 30.0;

  HyperMLPImpl(std::vector<std::int64_t> hidden = {16, 16, 16, 64},
               int octaves = kDefaultOctaves);

  /// encoded: M x (6 * 2 * octaves) -> M weights.
  torch::Tensor forward(const torch::Tensor& encoded);

  /// Draws the periodic-network initialisation from `gen`.
  void reset_parameters(at::Generator& gen);

  int octaves() const { return octaves_; }
  std::int64_t input_width() const { return kHyperInputs * 2 * octaves_; }

  /// Total number of (pixel, tap) evaluations performed so far.
  std::uint64_t evaluations() const { return evaluations_.load(); }

 private:
  int octaves_;
  std::vector<std::int64_t> hidden_;
  torch::nn::ModuleList layers_{nullptr};
  std::atomic<std::uint64_t> evaluations_{0};
};
TORCH_MODULE(HyperMLP);

struct BankKey {
  double alpha = 1;
  double beta = 1;
  std::int64_t in_h = 0;
  std::int64_t in_w = 0;
  std::int64_t kernel = 3;
  std::uint64_t parameter_version = 0;

  bool operator==(const BankKey&) const = default;
};

/// Content-independent upsampling weights, out_h x out_w x K^2, one scalar
/// per (output pixel, tap) shared across feature channels.
struct KernelBank {
  BankKey key;
  torch::Tensor weights;

  std::int64_t out_h() const { return weights.size(0); }
  std::int64_t out_w() const { return weights.size(1); }
  std::int64_t taps() const { return weights.size(2); }
};

/// Checksum of the MLP parameters; part of every bank key.
std::uint64_t parameter_version(const HyperMLPImpl& mlp);

/// Evaluates the MLP at every (output pixel, tap). Records autograd history
/// when grad mode is enabled, so training can differentiate through it.
KernelBank predict_kernels(HyperMLPImpl& mlp, const ScaleSpec& spec, std::int64_t kernel);

/// Zero-padded K x K unfold: N x C x H x W -> N x (C K^2) x H x W, channel
/// index c * K^2 + (k1 * K + k2).
torch::Tensor unfold_neighbourhood(const torch::Tensor& features, std::int64_t kernel);

/// Per-pixel Hadamard product of the K^2 tap groups with the bank weights,
/// then sum over taps: N x (C K^2) x H' x W' -> N x C x H' x W'. `row_begin`
/// selects the bank rows matching a band of `columns`.
torch::Tensor hadamard_fold(const torch::Tensor& columns, const torch::Tensor& weights,
                            std::int64_t row_begin = 0);

/// SR-feature preparation and reconstruction head.
class HyperUpsamplerImpl : public torch::nn::Module {
 public:
  HyperUpsamplerImpl(std::int64_t channels, std::int64_t kernel = 3,
                     std::vector<std::int64_t> mlp_hidden = {16, 16, 16, 64},
                     int octaves = kDefaultOctaves);

  /// ResBlock(concat(g_c, h_c)), N x C x H x W.
  torch::Tensor sr_features(const torch::Tensor& refined, const torch::Tensor& hidden);

  /// s_c: unfold then centre-aligned bilinear resize to the output grid.
  torch::Tensor prepare_sr_features(const torch::Tensor& refined, const torch::Tensor& hidden,
                                    const ScaleSpec& spec);

  /// Hadamard + fold, 1x1 conv, leaky, 3x3 conv, plus the bilinearly
  /// upsampled LR frame. `s` is N x (C K^2) x H' x W'.
  torch::Tensor upsample(const torch::Tensor& s, const KernelBank& bank,
                         const torch::Tensor& lr_frame, const ScaleSpec& spec);

  /// Same result as upsample(prepare_sr_features(...)) but materialises s_c
  /// in row bands to bound memory.
  torch::Tensor forward(const torch::Tensor& refined, const torch::Tensor& hidden,
                        const torch::Tensor& lr_frame, const KernelBank& bank,
                        const ScaleSpec& spec);

  std::int64_t kernel() const { return kernel_; }
  std::int64_t channels() const { return channels_; }
  HyperMLP& mlp() { return mlp_; }
  torch::nn::Conv2d& head_mix() { return head_mix_; }
  torch::nn::Conv2d& head_out() { return head_out_; }

 private:
  torch::Tensor head(const torch::Tensor& folded, const torch::Tensor& lr_frame,
                     const ScaleSpec& spec);
  void check_bank(const KernelBank& bank, const ScaleSpec& spec) const;

  std::int64_t channels_;
  std::int64_t kernel_;
  torch::nn::Conv2d feature_projection_{nullptr};
  ResidualBlock feature_block_{nullptr};
  HyperMLP mlp_{nullptr};
  torch::nn::Conv2d head_mix_{nullptr};
  torch::nn::Conv2d head_out_{nullptr};
};
TORCH_MODULE(HyperUpsampler);

/// Flat binary bank blob: magic "AVSRBANK", u32 version, key fields
/// (f64 alpha, f64 beta, u64 in_h, u64 in_w, u32 kernel, u64 parameter
/// version), u32 dtype (0 = f32, 1 = f64), u32 rank, u64 extents, raw
/// little-endian data, u64 FNV-1a checksum of all preceding bytes.
void export_bank(const std::filesystem::path& path, const KernelBank& bank);
KernelBank import_bank(const std::filesystem::path& path);

inline constexpr std::uint32_t kBankFormatVersion = 1;

}  // namespace avsr
