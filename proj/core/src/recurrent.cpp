#include "avsr/recurrent.hpp"

#include "avsr/error.hpp"

namespace avsr {

RecurrentUnitImpl::RecurrentUnitImpl(std::int64_t input_channels, std::int64_t channels,
                                     std::int64_t blocks)
    : input_channels_(input_channels), channels_(channels) {
  if (input_channels <= 0 || channels <= 0 || blocks < 0) {
    throw ConfigError("recurrent unit: channel and block counts must be positive");
  }
  fusion_ = register_module("fusion", ResidualNet(input_channels + channels, channels, blocks));
}

torch::Tensor RecurrentUnitImpl::step(const torch::Tensor& previous, const FlowField& flow,
                                      const torch::Tensor& input) {
  auto aligned = warp(previous, flow);
  return fusion_->forward(torch::cat({aligned, input}, 1));
}

std::vector<torch::Tensor> RecurrentUnitImpl::propagate(const torch::Tensor& inputs,
                                                        std::span<const FlowField> flows) {
  const auto video = inputs.dim() == 4 ? inputs.unsqueeze(0) : inputs;
  require(video.dim() == 5, "propagate: inputs must be T x C x H x W or N x T x C x H x W");
  if (video.size(2) != input_channels_) {
    throw ConfigError("propagate: unit expects " + std::to_string(input_channels_) +
                      " input channels, got " + std::to_string(video.size(2)));
  }
  const auto n = video.size(0);
  const auto frames = video.size(1);
  require(frames >= 1, "propagate: empty video");
  require(static_cast<std::int64_t>(flows.size()) == frames,
          "propagate: need one flow field per frame");

  auto state = torch::zeros({n, channels_, video.size(3), video.size(4)}, video.options());
  std::vector<torch::Tensor> states;
  states.reserve(frames);
  for (std::int64_t i = 0; i < frames; ++i) {
    state = step(state, flows[i], video.select(1, i));
    states.push_back(state);
  }
  return states;
}

}  // namespace avsr
