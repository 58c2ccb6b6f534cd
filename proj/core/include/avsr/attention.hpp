#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

#include "avsr/deform.hpp"
#include "avsr/flow.hpp"
#include "avsr/layers.hpp"

namespace avsr {

/// How the aligned future states are reduced into d_c (the ablation switch).
enum class Aggregation {
  kFull,              // local cross-attention, then squeeze-excitation
  kConcat,            // concat(h_c, aligned...) -> 1x1 conv, replaces attention and merge input
  kMeanThenSE,        // b_c = mean of aligned states, then squeeze-excitation
  kAttentionNoSE,     // local cross-attention, d_c = b_c
};

struct AttentionOptions {
  std::int64_t channels = 64;
  std::int64_t input_channels = 3;  // x_c (3) or p_c (C + 3)
  std::int64_t refine_blocks = 15;
  std::int64_t window = 2;          // L
  std::int64_t deform_groups = 8;
  std::int64_t deform_kernel = 3;
  bool rectify = true;              // predict offset/modulation corrections
  bool coarse_flow = true;          // add the estimated flow to the offsets
  Aggregation aggregation = Aggregation::kFull;
};

/// Predicted flow residuals and pre-sigmoid modulation logits.
struct OffsetModulation {
  torch::Tensor offsets;     // N x 2 G k^2 x H x W, (group, tap, {dx, dy})
  torch::Tensor modulation;  // N x G k^2 x H x W, logits
};

struct LocalAttention {
  torch::Tensor aggregated;  // b_c, N x C x H x W
  torch::Tensor weights;     // attention maps, N x L x H x W; sum over dim 1 is 1
};

/// Flow-refined cross-attention over a window of future hidden states.
class CrossAttentionUnitImpl : public torch::nn::Module {
 public:
  explicit CrossAttentionUnitImpl(const AttentionOptions& options);

  /// Offset / modulation predictor on concat(h_c, h_{c+t}).
  OffsetModulation predict_offsets(const torch::Tensor& current, const torch::Tensor& future);

  /// Modulated deformable sampling of `future` at z + coarse_flow + offsets,
  /// weighted by sigmoid(modulation). Coarse flow is broadcast to every tap.
  torch::Tensor deform_align(const torch::Tensor& future, const torch::Tensor& coarse_flow,
                             const OffsetModulation& correction);

  /// Aligns h_{c+t} onto frame c. `t` must lie in 1..window.
  torch::Tensor rectify_and_align(const torch::Tensor& current, const torch::Tensor& future,
                                  const FlowField& coarse_flow, std::int64_t t);

  /// Per-pixel softmax over t of <q_c, k_t>, then weighted sum of v_t.
  LocalAttention local_cross_attention(const torch::Tensor& current,
                                       std::span<const torch::Tensor> aligned);

  /// d_c = add(h_c, b_c) + b_c * sigmoid(gate(h_c, b_c)).
  torch::Tensor global_se_attention(const torch::Tensor& current, const torch::Tensor& aggregated);

  /// e_c = merge(h_c, d_c);  g_c = refine(concat(e_c, input_c)).
  torch::Tensor merge_and_refine(const torch::Tensor& current, const torch::Tensor& enhanced,
                                 const torch::Tensor& input);

  /// Full unit according to the aggregation switch. An empty `aligned` list
  /// feeds d_c = 0 into the merge.
  torch::Tensor forward(const torch::Tensor& current, std::span<const torch::Tensor> aligned,
                        const torch::Tensor& input);

  /// Zeroes the last offset conv so alignment starts from the coarse flow
  /// with modulation 0.5.
  void zero_offset_output();

  const AttentionOptions& options() const { return options_; }

  // Exposed for tests that pin sub-network weights.
  ConvPair& offset_head() { return offset_head_; }
  torch::nn::Conv2d& offset_out() { return offset_out_; }
  ModulatedDeformConv& deform() { return deform_; }
  torch::nn::Conv2d& query() { return query_; }
  torch::nn::Conv2d& key() { return key_; }
  torch::nn::Conv2d& value() { return value_; }
  ConvPair& se_add() { return se_add_; }
  ConvPair& se_gate() { return se_gate_; }
  torch::nn::Conv2d& merge() { return merge_; }
  torch::nn::Conv2d& concat_fuse() { return concat_fuse_; }
  ResidualNet& refine() { return refine_; }

 private:
  torch::Tensor merge_input(const torch::Tensor& current, const torch::Tensor& enhanced);

  AttentionOptions options_;
  ConvPair offset_head_{nullptr};        // conv, leaky, conv
  torch::nn::Conv2d offset_out_{nullptr};  // third conv, zero-initialised
  ModulatedDeformConv deform_{nullptr};
  torch::nn::Conv2d query_{nullptr};
  torch::nn::Conv2d key_{nullptr};
  torch::nn::Conv2d value_{nullptr};
  ConvPair se_add_{nullptr};
  ConvPair se_gate_{nullptr};
  torch::nn::Conv2d merge_{nullptr};
  torch::nn::Conv2d concat_fuse_{nullptr};
  ResidualNet refine_{nullptr};
};
TORCH_MODULE(CrossAttentionUnit);

}  // namespace avsr
