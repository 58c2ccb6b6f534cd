#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace avsr {

/// Modulated deformable convolution (stride 1, "same" output size).
///
/// For output pixel z = (y, x), group g and tap (i, j) of the k x k kernel the
/// input of group g is bilinearly sampled (zero padding) at
///   (y + i - r + dy[g, tap](z),  x + j - r + dx[g, tap](z)),   r = (k - 1) / 2,
/// multiplied by mask[g, tap](z) and contracted with the weight.
///
/// offsets: N x (2 G k^2) x H x W, laid out as (group, tap, {dx, dy}).
/// mask:    N x (G k^2) x H x W, laid out as (group, tap), already in [0, 1].
class ModulatedDeformConvImpl : public torch::nn::Module {
 public:
  ModulatedDeformConvImpl(std::int64_t in_channels, std::int64_t out_channels,
                          std::int64_t kernel, std::int64_t groups, bool bias = true);

  torch::Tensor forward(const torch::Tensor& input, const torch::Tensor& offsets,
                        const torch::Tensor& mask);

  std::int64_t kernel() const { return kernel_; }
  std::int64_t groups() const { return groups_; }
  std::int64_t taps() const { return kernel_ * kernel_; }

  torch::Tensor weight;  // out x in x k x k
  torch::Tensor bias;    // out, undefined when bias-free

 private:
  std::int64_t in_channels_;
  std::int64_t out_channels_;
  std::int64_t kernel_;
  std::int64_t groups_;
};
TORCH_MODULE(ModulatedDeformConv);

}  // namespace avsr
