#include "avsr/attention.hpp"

#include "avsr/error.hpp"

namespace avsr {

CrossAttentionUnitImpl::CrossAttentionUnitImpl(const AttentionOptions& options)
    : options_(options) {
  const auto c = options.channels;
  if (c <= 0 || options.input_channels <= 0 || options.refine_blocks < 0 || options.window < 0) {
    throw ConfigError("attention unit: invalid sizes");
  }
  const auto k2 = options.deform_kernel * options.deform_kernel;
  const auto g = options.deform_groups;

  offset_head_ = register_module("offset_head", ConvPair(2 * c, c, c));
  offset_out_ = register_module("offset_out", conv3x3(c, 3 * g * k2));
  deform_ = register_module("deform", ModulatedDeformConv(c, c, options.deform_kernel, g));
  query_ = register_module("query", conv3x3(c, c));
  key_ = register_module("key", conv3x3(c, c));
  value_ = register_module("value", conv3x3(c, c));
  se_add_ = register_module("se_add", ConvPair(2 * c, c, c));
  se_gate_ = register_module("se_gate", ConvPair(2 * c, c, c));
  merge_ = register_module("merge", conv3x3(2 * c, c));
  if (options.aggregation == Aggregation::kConcat) {
    const auto slots = std::max<std::int64_t>(options.window, 1);
    concat_fuse_ = register_module("concat_fuse", conv1x1((1 + slots) * c, c));
  }
  refine_ = register_module("refine", ResidualNet(c + options.input_channels, c, options.refine_blocks));
  zero_offset_output();
}

void CrossAttentionUnitImpl::zero_offset_output() {
  torch::NoGradGuard no_grad;
  offset_out_->weight.zero_();
  offset_out_->bias.zero_();
}

OffsetModulation CrossAttentionUnitImpl::predict_offsets(const torch::Tensor& current,
                                                         const torch::Tensor& future) {
  const auto g = options_.deform_groups;
  const auto k2 = options_.deform_kernel * options_.deform_kernel;
  auto out = offset_out_->forward(leaky(offset_head_->forward(torch::cat({current, future}, 1))));
  auto parts = out.split_with_sizes({2 * g * k2, g * k2}, 1);
  return {parts[0], parts[1]};
}

torch::Tensor CrossAttentionUnitImpl::deform_align(const torch::Tensor& future,
                                                   const torch::Tensor& coarse_flow,
                                                   const OffsetModulation& correction) {
  const auto n = future.size(0);
  const auto h = future.size(2);
  const auto w = future.size(3);
  const auto g = options_.deform_groups;
  const auto k2 = options_.deform_kernel * options_.deform_kernel;
  require(coarse_flow.dim() == 4 && coarse_flow.size(1) == 2 && coarse_flow.size(0) == n &&
              coarse_flow.size(2) == h && coarse_flow.size(3) == w,
          "deform_align: coarse flow shape mismatch");
  // Broadcast (dx, dy) to every (group, tap) pair.
  auto base = coarse_flow.to(future.scalar_type()).view({n, 1, 1, 2, h, w}).expand({n, g, k2, 2, h, w});
  auto offsets = base.reshape({n, 2 * g * k2, h, w}) + correction.offsets;
  return deform_->forward(future, offsets, torch::sigmoid(correction.modulation));
}

torch::Tensor CrossAttentionUnitImpl::rectify_and_align(const torch::Tensor& current,
                                                        const torch::Tensor& future,
                                                        const FlowField& coarse_flow,
                                                        std::int64_t t) {
  if (t < 1 || t > options_.window) {
    throw InvalidInput("rectify_and_align: offset t=" + std::to_string(t) +
                       " outside the window 1.." + std::to_string(options_.window));
  }
  require(current.sizes() == future.sizes(), "rectify_and_align: state shape mismatch");

  OffsetModulation correction;
  if (options_.rectify) {
    correction = predict_offsets(current, future);
  } else {
    const auto g = options_.deform_groups;
    const auto k2 = options_.deform_kernel * options_.deform_kernel;
    const auto n = future.size(0);
    correction.offsets = torch::zeros({n, 2 * g * k2, future.size(2), future.size(3)}, future.options());
    correction.modulation = torch::zeros({n, g * k2, future.size(2), future.size(3)}, future.options());
  }
  auto flow = options_.coarse_flow ? coarse_flow.tensor() : torch::zeros_like(coarse_flow.tensor());
  return deform_align(future, flow, correction);
}

LocalAttention CrossAttentionUnitImpl::local_cross_attention(
    const torch::Tensor& current, std::span<const torch::Tensor> aligned) {
  require(!aligned.empty(), "local_cross_attention: needs at least one aligned state");
  const auto n = current.size(0);
  const auto count = static_cast<std::int64_t>(aligned.size());

  auto query = query_->forward(current);
  auto stacked = torch::cat(std::vector<torch::Tensor>(aligned.begin(), aligned.end()), 0);
  auto keys = key_->forward(stacked).view({count, n, -1, current.size(2), current.size(3)});
  auto values = value_->forward(stacked).view({count, n, -1, current.size(2), current.size(3)});

  // Unscaled channel inner product per pixel: count x N x H x W.
  auto logits = (keys * query.unsqueeze(0)).sum(2);
  auto weights = torch::softmax(logits, 0);
  auto aggregated = (weights.unsqueeze(2) * values).sum(0);
  return {aggregated, weights.transpose(0, 1).contiguous()};
}

torch::Tensor CrossAttentionUnitImpl::global_se_attention(const torch::Tensor& current,
                                                          const torch::Tensor& aggregated) {
  require(current.sizes() == aggregated.sizes(), "global_se_attention: shape mismatch");
  auto joint = torch::cat({current, aggregated}, 1);
  return se_add_->forward(joint) + aggregated * torch::sigmoid(se_gate_->forward(joint));
}

torch::Tensor CrossAttentionUnitImpl::merge_input(const torch::Tensor& current,
                                                  const torch::Tensor& enhanced) {
  return merge_->forward(torch::cat({current, enhanced}, 1));
}

torch::Tensor CrossAttentionUnitImpl::merge_and_refine(const torch::Tensor& current,
                                                       const torch::Tensor& enhanced,
                                                       const torch::Tensor& input) {
  if (input.size(1) != options_.input_channels) {
    throw ConfigError("merge_and_refine: expected " + std::to_string(options_.input_channels) +
                      " input channels, got " + std::to_string(input.size(1)));
  }
  auto merged = merge_input(current, enhanced);
  return refine_->forward(torch::cat({merged, input}, 1));
}

torch::Tensor CrossAttentionUnitImpl::forward(const torch::Tensor& current,
                                              std::span<const torch::Tensor> aligned,
                                              const torch::Tensor& input) {
  if (options_.aggregation == Aggregation::kConcat) {
    if (input.size(1) != options_.input_channels) {
      throw ConfigError("attention unit: input channel mismatch");
    }
    const auto slots = std::max<std::int64_t>(options_.window, 1);
    require(static_cast<std::int64_t>(aligned.size()) <= slots, "attention unit: window overflow");
    std::vector<torch::Tensor> parts{current};
    for (const auto& a : aligned) parts.push_back(a);
    while (static_cast<std::int64_t>(parts.size()) < slots + 1) {
      parts.push_back(torch::zeros_like(current));
    }
    auto fused = concat_fuse_->forward(torch::cat(parts, 1));
    return refine_->forward(torch::cat({fused, input}, 1));
  }

  if (aligned.empty()) return merge_and_refine(current, torch::zeros_like(current), input);

  torch::Tensor enhanced;
  switch (options_.aggregation) {
    case Aggregation::kFull:
      enhanced = global_se_attention(current, local_cross_attention(current, aligned).aggregated);
      break;
    case Aggregation::kMeanThenSE: {
      auto mean = torch::stack(std::vector<torch::Tensor>(aligned.begin(), aligned.end()), 0).mean(0);
      enhanced = global_se_attention(current, mean);
      break;
    }
    case Aggregation::kAttentionNoSE:
      enhanced = local_cross_attention(current, aligned).aggregated;
      break;
    case Aggregation::kConcat:
      break;
  }
  return merge_and_refine(current, enhanced, input);
}

}  // namespace avsr
