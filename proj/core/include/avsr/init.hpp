#pragma once

#include <ATen/core/Generator.h>
#include <torch/torch.h>

#include <cstdint>

namespace avsr {

at::Generator make_generator(std::uint64_t seed);

/// Fills `tensor` in place with U(-bound, bound) drawn from `gen`.
void uniform_(torch::Tensor& tensor, double bound, at::Generator& gen);

/// Re-draws every conv / linear layer of `module` (recursively) with the
/// PyTorch default scheme, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and
/// bias, from a private generator so the result depends on `seed` only.
void seeded_reinit(torch::nn::Module& module, std::uint64_t seed);

}  // namespace avsr
