#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "avsr/attention.hpp"
#include "avsr/config.hpp"
#include "avsr/flow.hpp"
#include "avsr/hyperup.hpp"
#include "avsr/kernel_cache.hpp"
#include "avsr/prior.hpp"
#include "avsr/recurrent.hpp"

namespace avsr {

/// Where the upsampling kernels come from during a forward pass.
enum class BankMode {
  kCached,          // shared KernelCache, no autograd
  kPerFrame,        // recomputed for every frame, no autograd ("uncached")
  kDifferentiable,  // computed once per call with autograd (training)
};

/// Flows consumed by one forward pass over a batch of clips.
struct FlowPlan {
  std::vector<FlowField> backward;                // [i] aligns frame i to i-1; [0] is zero
  std::vector<std::vector<FlowField>> future;     // [t-1][c] aligns frame c+t to frame c
};

/// Flow estimation + prior + recurrence + sliding-window cross-attention +
/// hyper-upsampling.
class AvsrModelImpl : public torch::nn::Module {
 public:
  explicit AvsrModelImpl(const ModelConfig& config,
                         std::shared_ptr<KernelCache> cache = nullptr);

  /// video: T x 3 x H x W in [0, 1] -> T x 3 x floor(alpha H) x floor(beta W).
  /// With `precompute` the kernel bank comes from the shared cache, otherwise
  /// it is evaluated for every frame; both give identical frames.
  torch::Tensor super_resolve(const torch::Tensor& video, double alpha, double beta,
                              bool precompute = true);

  /// Batched forward: video N x T x 3 x H x W -> N x T x 3 x H' x W'.
  torch::Tensor forward(const torch::Tensor& video, const ScaleSpec& spec,
                        BankMode mode = BankMode::kDifferentiable);

  /// Same pipeline with caller-supplied recurrence / refinement inputs
  /// (N x T x Cin x H x W) in place of the prior or frames.
  torch::Tensor forward_with_inputs(const torch::Tensor& video, const torch::Tensor& inputs,
                                    const ScaleSpec& spec, BankMode mode);

  /// x_c (B-AVSR) or p_c (ST-AVSR) for every frame: N x T x Cin x H x W.
  torch::Tensor inputs_for(const torch::Tensor& video);

  FlowPlan plan_flows(const torch::Tensor& video) const;

  /// Window length for anchor frame c of a T-frame clip.
  std::int64_t window_at(std::int64_t c, std::int64_t frames) const;

  /// Refined features g_c for every frame, given hidden states and inputs.
  std::vector<torch::Tensor> refine_all(const std::vector<torch::Tensor>& hidden,
                                        const torch::Tensor& inputs, const FlowPlan& flows);

  /// Kernel bank for `spec` via the shared cache.
  std::shared_ptr<const KernelBank> precompute(const ScaleSpec& spec);

  const ModelConfig& config() const { return config_; }
  std::shared_ptr<KernelCache> cache() const { return cache_; }
  FlowProviderImpl& flow() { return *flow_; }
  bool has_prior() const { return static_cast<bool>(prior_); }
  PriorExtractor& prior() { return prior_; }
  RecurrentUnit& recurrent() { return recurrent_; }
  CrossAttentionUnit& attention() { return attention_; }
  HyperUpsampler& hyperup() { return hyperup_; }

  /// Parameters updated by training (everything except the frozen flow
  /// provider and feature pyramid).
  std::vector<torch::Tensor> trainable_parameters();
  /// Checksum over the frozen providers' parameters.
  std::uint64_t frozen_checksum() const;

 private:
  ModelConfig config_;
  std::shared_ptr<KernelCache> cache_;
  FlowProvider flow_;
  PriorExtractor prior_{nullptr};
  RecurrentUnit recurrent_{nullptr};
  CrossAttentionUnit attention_{nullptr};
  HyperUpsampler hyperup_{nullptr};
};
TORCH_MODULE(AvsrModel);

/// Factory for the named variants.
AvsrModel build_variant(const ModelConfig& config, std::shared_ptr<KernelCache> cache = nullptr);

}  // namespace avsr
