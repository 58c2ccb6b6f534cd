#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace avsr {

enum class PriorKind { kNone, kSeededPyramid, kPretrainedVgg };

std::string to_string(PriorKind kind);
PriorKind parse_prior_kind(const std::string& name);

struct PyramidStage {
  std::int64_t channels;
  std::int64_t stride;
};

/// Frozen VGG-style feature hierarchy. Stage s runs at stride 2^s (2x2 max
/// pooling with ceil mode between stages) and its tap is the last ReLU before
/// the next pooling, so stage s has ceil(H / 2^s) x ceil(W / 2^s) pixels.
///
/// kSeededPyramid: one conv per stage, He-uniform weights from `seed`,
/// identity input normalisation.
/// kPretrainedVgg: VGG-16 layout (2, 2, 3, 3, 3 convs), ImageNet mean/std
/// normalisation, weights read from `weights` (tensor archive "AVSRWGTS");
/// a missing file falls back to seeded weights with a warning.
class FeaturePyramidImpl : public torch::nn::Module {
 public:
  FeaturePyramidImpl(PriorKind kind, std::vector<std::int64_t> widths, std::uint64_t seed,
                     const std::optional<std::filesystem::path>& weights = std::nullopt);

  /// frames: N x 3 x H x W in [0, 1]. Runs without autograd.
  std::vector<torch::Tensor> stages(const torch::Tensor& frames) const;

  std::vector<PyramidStage> signature() const;
  std::int64_t total_channels() const;
  std::int64_t deepest_stride() const;
  PriorKind kind() const { return kind_; }
  bool pretrained() const { return pretrained_; }

 private:
  PriorKind kind_;
  std::vector<std::int64_t> widths_;
  mutable std::vector<torch::nn::Sequential> blocks_;
  torch::Tensor mean_;
  torch::Tensor std_;
  bool pretrained_ = false;
};

using FeaturePyramid = std::shared_ptr<FeaturePyramidImpl>;

/// Multi-scale structural/textural prior p_c: stage maps bilinearly resized
/// to H x W, concatenated, projected to C channels by a trainable 1x1 conv and
/// concatenated with the frame itself, giving (C + 3) x H x W.
class PriorExtractorImpl : public torch::nn::Module {
 public:
  PriorExtractorImpl(FeaturePyramid pyramid, std::int64_t channels);

  /// Stage maps resized to the frame size and concatenated (no autograd).
  torch::Tensor fused_stages(const torch::Tensor& frames) const;

  /// frames: N x 3 x H x W -> N x (C + 3) x H x W. Throws InvalidInput when
  /// the frame is smaller than the deepest stride.
  torch::Tensor forward(const torch::Tensor& frames);

  std::int64_t channels() const { return channels_; }
  torch::nn::Conv2d& projection() { return projection_; }
  FeaturePyramidImpl& pyramid() { return *pyramid_; }

 private:
  std::int64_t channels_;
  FeaturePyramid pyramid_;
  torch::nn::Conv2d projection_{nullptr};
};
TORCH_MODULE(PriorExtractor);

}  // namespace avsr
