#include "avsr/layers.hpp"

#include <string>

namespace avsr {

namespace F = torch::nn::functional;
namespace nn = torch::nn;

torch::Tensor leaky(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeakySlope));
}

nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, bool bias) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(bias));
}

nn::Conv2d conv1x1(std::int64_t in, std::int64_t out, bool bias) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 1).bias(bias));
}

ResidualBlockImpl::ResidualBlockImpl(std::int64_t channels) {
  conv1_ = register_module("conv1", conv3x3(channels, channels));
  conv2_ = register_module("conv2", conv3x3(channels, channels));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + conv2_->forward(leaky(conv1_->forward(x)));
}

ResidualNetImpl::ResidualNetImpl(std::int64_t in_channels, std::int64_t channels,
                                 std::int64_t blocks)
    : in_channels_(in_channels), channels_(channels) {
  projection_ = register_module("projection", conv1x1(in_channels, channels));
  body_ = register_module("body", nn::Sequential());
  for (std::int64_t i = 0; i < blocks; ++i) body_->push_back(ResidualBlock(channels));
}

torch::Tensor ResidualNetImpl::forward(const torch::Tensor& x) {
  auto y = leaky(projection_->forward(x));
  return body_->size() == 0 ? y : body_->forward(y);
}

ConvPairImpl::ConvPairImpl(std::int64_t in, std::int64_t hidden, std::int64_t out) {
  conv1_ = register_module("conv1", conv3x3(in, hidden));
  conv2_ = register_module("conv2", conv3x3(hidden, out));
}

torch::Tensor ConvPairImpl::forward(const torch::Tensor& x) {
  return conv2_->forward(leaky(conv1_->forward(x)));
}

}  // namespace avsr
