#include "avsr/deform.hpp"

#include <cmath>

#include "avsr/error.hpp"
#include "avsr/sampling.hpp"

namespace avsr {

ModulatedDeformConvImpl::ModulatedDeformConvImpl(std::int64_t in_channels,
                                                 std::int64_t out_channels, std::int64_t kernel,
                                                 std::int64_t groups, bool bias)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), groups_(groups) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("deformable kernel must be odd and >= 1");
  if (groups < 1 || in_channels % groups != 0) {
    throw ConfigError("deformable groups must divide the input channel count");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
  weight = register_parameter(
      "weight", torch::empty({out_channels, in_channels, kernel, kernel}).uniform_(-bound, bound));
  if (bias) {
    this->bias = register_parameter("bias", torch::empty({out_channels}).uniform_(-bound, bound));
  }
}

torch::Tensor ModulatedDeformConvImpl::forward(const torch::Tensor& input,
                                               const torch::Tensor& offsets,
                                               const torch::Tensor& mask) {
  require(input.dim() == 4 && input.size(1) == in_channels_,
          "deform conv: input must be N x " + std::to_string(in_channels_) + " x H x W");
  const auto n = input.size(0);
  const auto h = input.size(2);
  const auto w = input.size(3);
  const auto k2 = taps();
  const auto cg = in_channels_ / groups_;
  require(offsets.sizes() == torch::IntArrayRef({n, 2 * groups_ * k2, h, w}),
          "deform conv: offsets must be N x 2Gk^2 x H x W");
  require(mask.sizes() == torch::IntArrayRef({n, groups_ * k2, h, w}),
          "deform conv: mask must be N x Gk^2 x H x W");

  const auto opts = input.options();
  const auto radius = (kernel_ - 1) / 2;
  auto tap_index = torch::arange(k2, opts.dtype(torch::kLong));
  auto tap_dy = (tap_index.div(kernel_, "floor") - radius).to(input.scalar_type());
  auto tap_dx = (tap_index.remainder(kernel_) - radius).to(input.scalar_type());

  auto off = offsets.to(input.scalar_type()).view({n, groups_, k2, 2, h, w});
  auto gx = torch::arange(w, opts).view({1, 1, 1, 1, w});
  auto gy = torch::arange(h, opts).view({1, 1, 1, h, 1});
  auto px = gx + tap_dx.view({1, 1, k2, 1, 1}) + off.select(3, 0);
  auto py = gy + tap_dy.view({1, 1, k2, 1, 1}) + off.select(3, 1);

  auto features = input.reshape({n * groups_, cg, h, w});
  auto sampled = bilinear_sample(features, px.reshape({n * groups_, k2 * h, w}),
                                 py.reshape({n * groups_, k2 * h, w}), Padding::kZeros);
  // N*G x Cg x (k2 H) x W  ->  N x G x Cg x k2 x H x W
  sampled = sampled.view({n, groups_, cg, k2, h, w});
  auto modulated = sampled * mask.to(input.scalar_type()).view({n, groups_, 1, k2, h, w});

  auto columns = modulated.reshape({n, in_channels_ * k2, h * w});
  auto out = torch::matmul(weight.reshape({out_channels_, in_channels_ * k2}), columns);
  if (bias.defined()) out = out + bias.view({1, out_channels_, 1});
  return out.view({n, out_channels_, h, w});
}

}  // namespace avsr
