#include "avsr/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "avsr/error.hpp"

namespace avsr {

torch::Tensor bilinear_sample(const torch::Tensor& input, const torch::Tensor& x,
                              const torch::Tensor& y, Padding padding) {
  require(input.dim() == 4, "bilinear_sample: input must be N x C x H x W");
  require(x.dim() == 3 && x.sizes() == y.sizes(), "bilinear_sample: coordinate shape mismatch");
  require(x.size(0) == input.size(0), "bilinear_sample: batch mismatch");

  const auto n = input.size(0);
  const auto c = input.size(1);
  const auto h = input.size(2);
  const auto w = input.size(3);
  const auto points = x.size(1) * x.size(2);

  torch::Tensor sx = x;
  torch::Tensor sy = y;
  if (padding == Padding::kBorder) {
    sx = sx.clamp(0, static_cast<double>(w - 1));
    sy = sy.clamp(0, static_cast<double>(h - 1));
  }

  const auto x0 = sx.floor().detach();
  const auto y0 = sy.floor().detach();
  const auto fx = sx - x0;
  const auto fy = sy - y0;
  const auto gx = 1 - fx;
  const auto gy = 1 - fy;

  const auto flat = input.reshape({n, c, h * w});
  torch::Tensor out;

  auto accumulate = [&](const torch::Tensor& xi, const torch::Tensor& yi,
                        const torch::Tensor& weight) {
    auto valid = (xi >= 0) & (xi <= w - 1) & (yi >= 0) & (yi <= h - 1);
    auto xc = xi.clamp(0, static_cast<double>(w - 1));
    auto yc = yi.clamp(0, static_cast<double>(h - 1));
    auto index = (yc * w + xc).to(torch::kLong).reshape({n, 1, points}).expand({n, c, points});
    auto values = flat.gather(2, index);
    auto wgt = (weight * valid.to(weight.scalar_type())).reshape({n, 1, points});
    auto term = values * wgt;
    out = out.defined() ? out + term : term;
  };

  accumulate(x0, y0, gx * gy);
  accumulate(x0 + 1, y0, fx * gy);
  accumulate(x0, y0 + 1, gx * fy);
  accumulate(x0 + 1, y0 + 1, fx * fy);

  return out.reshape({n, c, x.size(1), x.size(2)});
}

std::int64_t scaled_size(std::int64_t size, double scale) {
  // Tolerate representation error in products such as 16 * 7.2.
  return static_cast<std::int64_t>(std::floor(static_cast<double>(size) * scale + 1e-9));
}

double source_coordinate(std::int64_t i, double scale) {
  return (static_cast<double>(i) + 0.5) / scale - 0.5;
}

double relative_coordinate(std::int64_t i, double scale) {
  const double u = (static_cast<double>(i) + 0.5) / scale;
  return u - std::floor(u) - 0.5;
}

namespace {

struct AxisTaps {
  torch::Tensor lo;      // int64 indices
  torch::Tensor hi;      // int64 indices
  torch::Tensor weight;  // fraction towards hi
};

AxisTaps axis_taps(std::int64_t in_size, double scale, std::int64_t begin, std::int64_t end,
                   const torch::TensorOptions& real) {
  std::vector<std::int64_t> lo(end - begin);
  std::vector<std::int64_t> hi(end - begin);
  std::vector<double> frac(end - begin);
  for (std::int64_t i = begin; i < end; ++i) {
    double s = source_coordinate(i, scale);
    s = std::clamp(s, 0.0, static_cast<double>(in_size - 1));
    const auto l = static_cast<std::int64_t>(std::floor(s));
    lo[i - begin] = l;
    hi[i - begin] = std::min(l + 1, in_size - 1);
    frac[i - begin] = s - static_cast<double>(l);
  }
  const auto n = static_cast<std::int64_t>(lo.size());
  auto as_long = torch::TensorOptions().dtype(torch::kLong);
  return {torch::from_blob(lo.data(), {n}, as_long).clone(),
          torch::from_blob(hi.data(), {n}, as_long).clone(),
          torch::from_blob(frac.data(), {n}, torch::TensorOptions().dtype(torch::kDouble))
              .clone()
              .to(real.dtype())};
}

}  // namespace

torch::Tensor resize_bilinear(const torch::Tensor& input, double scale_y, double scale_x,
                              std::int64_t out_h, std::int64_t out_w, std::int64_t row_begin,
                              std::int64_t row_end) {
  require(input.dim() == 4, "resize_bilinear: input must be N x C x H x W");
  require(scale_y > 0 && scale_x > 0, "resize_bilinear: scale must be positive");
  if (row_end < 0) row_end = out_h;
  require(0 <= row_begin && row_begin <= row_end && row_end <= out_h,
          "resize_bilinear: invalid row band");

  const auto rows = axis_taps(input.size(2), scale_y, row_begin, row_end, input.options());
  const auto cols = axis_taps(input.size(3), scale_x, 0, out_w, input.options());

  auto top = input.index_select(2, rows.lo);
  auto bottom = input.index_select(2, rows.hi);
  auto wy = rows.weight.view({1, 1, -1, 1});
  auto vertical = top + (bottom - top) * wy;

  auto left = vertical.index_select(3, cols.lo);
  auto right = vertical.index_select(3, cols.hi);
  auto wx = cols.weight.view({1, 1, 1, -1});
  return left + (right - left) * wx;
}

torch::Tensor resize_bilinear(const torch::Tensor& input, double scale_y, double scale_x) {
  return resize_bilinear(input, scale_y, scale_x, scaled_size(input.size(2), scale_y),
                         scaled_size(input.size(3), scale_x));
}

}  // namespace avsr
