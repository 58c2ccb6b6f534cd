#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

#include "avsr/flow.hpp"
#include "avsr/layers.hpp"

namespace avsr {

/// Flow-guided forward recurrence. Each step warps the previous hidden state
/// onto the current frame, concatenates it with the current input and fuses
/// the pair with a residual network:
///   h_i = fusion(concat(warp(h_{i-1}, f_{i->i-1}), input_i)),  h_0 = 0.
class RecurrentUnitImpl : public torch::nn::Module {
 public:
  RecurrentUnitImpl(std::int64_t input_channels, std::int64_t channels, std::int64_t blocks);

  /// `inputs` is T x Cin x H x W or N x T x Cin x H x W. `flows` has one entry
  /// per frame; flows[i] aligns frame i to frame i-1 and flows[0] is only
  /// applied to the zero initial state. Returns T states of N x C x H x W,
  /// element i having consumed inputs 0..i.
  std::vector<torch::Tensor> propagate(const torch::Tensor& inputs,
                                       std::span<const FlowField> flows);

  /// One recurrence step.
  torch::Tensor step(const torch::Tensor& previous, const FlowField& flow,
                     const torch::Tensor& input);

  std::int64_t input_channels() const { return input_channels_; }
  std::int64_t channels() const { return channels_; }
  ResidualNet& fusion() { return fusion_; }

 private:
  std::int64_t input_channels_;
  std::int64_t channels_;
  ResidualNet fusion_{nullptr};
};
TORCH_MODULE(RecurrentUnit);

}  // namespace avsr
