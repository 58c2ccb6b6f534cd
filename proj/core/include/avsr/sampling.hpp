#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace avsr {

enum class Padding {
  kZeros,   // out-of-range taps read 0
  kBorder,  // coordinates clamp to the valid range
};

/// Differentiable bilinear sampling of `input` (N x C x H x W) at pixel
/// coordinates `x`, `y` (each N x Ho x Wo, pixel centres at integers).
/// Gradients flow to the input and to both coordinate tensors.
torch::Tensor bilinear_sample(const torch::Tensor& input, const torch::Tensor& x,
                              const torch::Tensor& y, Padding padding);

/// Output extent for one axis: floor(size * scale).
std::int64_t scaled_size(std::int64_t size, double scale);

/// Continuous source coordinate of output index `i` under a centre-aligned
/// mapping with scale factor `scale` (output / input).
double source_coordinate(std::int64_t i, double scale);

/// Signed offset of output index `i` from the nearest input sample centre, in
/// input-pixel units; always in [-0.5, 0.5).
double relative_coordinate(std::int64_t i, double scale);

/// Centre-aligned bilinear resize with explicit per-axis scale. Only output
/// rows [row_begin, row_end) are produced; row_end < 0 means out_h. Each output
/// pixel depends only on its own coordinates, so banded calls concatenate to
/// the full result exactly.
torch::Tensor resize_bilinear(const torch::Tensor& input, double scale_y, double scale_x,
                              std::int64_t out_h, std::int64_t out_w,
                              std::int64_t row_begin = 0, std::int64_t row_end = -1);

/// Convenience overload producing the floor-sized output for (scale_y, scale_x).
torch::Tensor resize_bilinear(const torch::Tensor& input, double scale_y, double scale_x);

}  // namespace avsr
