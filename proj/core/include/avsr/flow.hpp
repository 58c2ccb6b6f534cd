#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace avsr {

/// Dense backward flow, N x 2 x H x W with channels (dx, dy) in source-pixel
/// units: target pixel z corresponds to source position z + flow(z).
class FlowField {
 public:
  /// Accepts N x 2 x H x W or 2 x H x W (promoted to N = 1). Rejects
  /// non-finite values.
  explicit FlowField(torch::Tensor data);

  static FlowField zeros(std::int64_t n, std::int64_t h, std::int64_t w,
                         const torch::TensorOptions& options = {});

  const torch::Tensor& tensor() const { return data_; }
  std::int64_t batch() const { return data_.size(0); }
  std::int64_t height() const { return data_.size(2); }
  std::int64_t width() const { return data_.size(3); }

 private:
  torch::Tensor data_;
};

enum class FlowKind { kZero, kTranslationOracle, kLearnedFrozen };

std::string to_string(FlowKind kind);
FlowKind parse_flow_kind(const std::string& name);

/// Frozen optical-flow estimator. Implementations are immutable after
/// construction: no parameter requires grad and estimate() never records
/// autograd history.
class FlowProviderImpl : public torch::nn::Module {
 public:
  ~FlowProviderImpl() override = default;

  /// Flow aligning `source` onto `target` (both N x 3 x H x W or 3 x H x W).
  FlowField estimate(const torch::Tensor& target, const torch::Tensor& source) const;

  virtual FlowKind kind() const = 0;

 protected:
  virtual torch::Tensor compute(const torch::Tensor& target, const torch::Tensor& source) const = 0;
};

using FlowProvider = std::shared_ptr<FlowProviderImpl>;

class ZeroFlowImpl : public FlowProviderImpl {
 public:
  FlowKind kind() const override { return FlowKind::kZero; }

 protected:
  torch::Tensor compute(const torch::Tensor& target, const torch::Tensor& source) const override;
};

/// Exhaustive integer-translation search: picks the global shift within
/// +-radius minimising the mean absolute difference over the overlap. Exact for
/// pure integer translations.
class TranslationOracleImpl : public FlowProviderImpl {
 public:
  explicit TranslationOracleImpl(int radius = 4);
  FlowKind kind() const override { return FlowKind::kTranslationOracle; }
  int radius() const { return radius_; }

 protected:
  torch::Tensor compute(const torch::Tensor& target, const torch::Tensor& source) const override;

 private:
  int radius_;
};

/// Small seeded CNN standing in for a pretrained estimator. Runs at 1/4
/// resolution: inputs are reflect-padded to a multiple of 4, the coarse flow is
/// bilinearly resized back up, multiplied by 4 and cropped. The network is
/// antisymmetrised, flow(t, s) = net(t, s) - net(s, t), so identical frames
/// yield exactly zero flow.
class LearnedFlowImpl : public FlowProviderImpl {
 public:
  static constexpr std::int64_t kStride = 4;

  explicit LearnedFlowImpl(std::uint64_t seed,
                           const std::optional<std::filesystem::path>& weights = std::nullopt);
  FlowKind kind() const override { return FlowKind::kLearnedFrozen; }

  /// True when external weights were loaded instead of the seeded stand-in.
  bool pretrained() const { return pretrained_; }

 protected:
  torch::Tensor compute(const torch::Tensor& target, const torch::Tensor& source) const override;

 private:
  torch::Tensor raw(const torch::Tensor& a, const torch::Tensor& b) const;

  mutable torch::nn::Conv2d conv1_{nullptr};
  mutable torch::nn::Conv2d conv2_{nullptr};
  mutable torch::nn::Conv2d conv3_{nullptr};
  bool pretrained_ = false;
};

FlowProvider make_flow_provider(FlowKind kind, std::uint64_t seed,
                                const std::optional<std::filesystem::path>& weights = std::nullopt);

/// Backward warp: out(z) = bilinear sample of `features` at z + flow(z), zero
/// outside the frame. `features` is N x C x H x W (or C x H x W with N = 1).
torch::Tensor warp(const torch::Tensor& features, const FlowField& flow);

/// Same, taking the raw N x 2 x H x W tensor (used where the flow itself is a
/// differentiable quantity).
torch::Tensor warp(const torch::Tensor& features, const torch::Tensor& flow);

}  // namespace avsr
