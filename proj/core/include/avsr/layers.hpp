#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace avsr {

inline constexpr double kLeakySlope = 0.1;

torch::Tensor leaky(const torch::Tensor& x);

torch::nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, bool bias = true);
torch::nn::Conv2d conv1x1(std::int64_t in, std::int64_t out, bool bias = true);

/// conv3x3 -> leaky -> conv3x3 with identity skip; channel-preserving.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// 1x1 projection (in -> channels) followed by leaky and `blocks` residual
/// blocks. This is the "ResNet with N residual blocks" used for fusion.
class ResidualNetImpl : public torch::nn::Module {
 public:
  ResidualNetImpl(std::int64_t in_channels, std::int64_t channels, std::int64_t blocks);
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t in_channels() const { return in_channels_; }
  std::int64_t out_channels() const { return channels_; }
  const torch::nn::Conv2d& projection() const { return projection_; }

 private:
  std::int64_t in_channels_;
  std::int64_t channels_;
  torch::nn::Conv2d projection_{nullptr};
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualNet);

/// Two 3x3 convolutions with leaky in between: a small "standard convolution"
/// CNN mapping `in` to `out` channels.
class ConvPairImpl : public torch::nn::Module {
 public:
  ConvPairImpl(std::int64_t in, std::int64_t hidden, std::int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d& last() { return conv2_; }

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(ConvPair);

}  // namespace avsr
