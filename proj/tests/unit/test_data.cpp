#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "avsr/data.hpp"
#include "avsr/error.hpp"
#include "avsr/image_io.hpp"
#include "avsr/init.hpp"
#include "avsr/sampling.hpp"
#include "test_support.hpp"

using namespace avsr;
using namespace avsr::testing;

namespace {

// Independent scalar bicubic: stretched Catmull-Rom taps around each output
// centre, out-of-range taps dropped, weights renormalised.
std::vector<double> reference_resize_1d(const std::vector<double>& in, std::int64_t out, double scale) {
  auto cubic = [](double x) {
    x = std::abs(x);
    if (x < 1) return (1.5 * x - 2.5) * x * x + 1;
    if (x < 2) return ((-0.5 * x + 2.5) * x - 4) * x + 2;
    return 0.0;
  };
  const double support = scale > 1 ? 2 * scale : 2;
  const double stretch = std::max(scale, 1.0);
  std::vector<double> result(out);
  for (std::int64_t i = 0; i < out; ++i) {
    const double centre = (i + 0.5) * scale;
    const auto lo = static_cast<std::int64_t>(std::max(0.0, std::floor(centre - support + 0.5)));
    const auto hi = static_cast<std::int64_t>(
        std::min(static_cast<double>(in.size()), std::floor(centre + support + 0.5)));
    double total = 0, acc = 0;
    for (std::int64_t j = lo; j < hi; ++j) {
      const double w = cubic((j + 0.5 - centre) / stretch);
      total += w;
      acc += w * in[j];
    }
    result[i] = acc / total;
  }
  return result;
}

TrainingSample sample_for(double alpha, double beta, std::int64_t patch, std::uint64_t seed,
                          std::int64_t crops = 2) {
  SynthOptions o;
  o.frames = 2;
  o.height = static_cast<std::int64_t>(std::ceil(alpha * patch));
  o.width = static_cast<std::int64_t>(std::ceil(beta * patch));
  o.seed = seed;
  auto hr = synth_clip(o).to(torch::kFloat32);
  auto gen = make_generator(seed);
  return make_training_sample(hr, patch, alpha, beta, crops, gen);
}

void expect_coords_follow_formula(const TrainingSample& s) {
  for (std::size_t k = 0; k < s.gt.size(); ++k) {
    auto expected = crop_coordinates(s.alpha, s.beta, s.offsets[k].first, s.offsets[k].second, s.patch());
    EXPECT_LT(max_abs_diff(s.coords[k], expected), 1e-6) << "crop " << k;
  }
}

}  // namespace

TEST(Data, CubicKernelValues) {
  EXPECT_DOUBLE_EQ(cubic_kernel(0.0), 1.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(1.0), 0.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(2.0), 0.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(cubic_kernel(1.5), -0.0625);
  auto m = bicubic_matrix(13, 5, 13.0 / 5.0);
  EXPECT_LT(max_abs_diff(m.sum(1), torch::ones({5}, m.options())), 1e-12);
}

TEST(Data, BicubicPreservesConstants) {
  auto hr = torch::full({2, 3, 24, 20}, 0.37);
  auto lr = degrade(hr, 2.5, 2.0);
  EXPECT_EQ(lr.sizes(), (std::vector<std::int64_t>{2, 3, 9, 10}));
  EXPECT_LT(max_abs_diff(lr, torch::full_like(lr, 0.37)), 1e-6);
}

TEST(Data, UnitScaleShortCircuits) {
  auto hr = seeded_rand({2, 3, 10, 12}, 1);
  EXPECT_TRUE(bit_equal(degrade(hr, 1.0, 1.0), hr));
}

TEST(Data, RampMatchesScalarReference) {
  std::vector<double> ramp{0, 1, 2, 3, 4, 5, 6, 7};
  auto expected = reference_resize_1d(ramp, 4, 2.0);
  auto t = torch::tensor(ramp, torch::kFloat64).view({1, 1, 1, 8});
  auto got = bicubic_resize(t, 1, 4, 1.0, 2.0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(got[0][0][0][i].item<double>(), expected[i], 1e-6);

  std::vector<double> wave(23);
  for (std::size_t i = 0; i < wave.size(); ++i) wave[i] = std::sin(0.7 * i) + 0.1 * i;
  for (auto [out, scale] : {std::pair{7, 23.0 / 7.0}, std::pair{9, 2.5}, std::pair{23, 1.0}}) {
    auto ref = reference_resize_1d(wave, out, scale);
    auto res = bicubic_resize(torch::tensor(wave, torch::kFloat64).view({1, 1, 1, 23}), 1, out, 1.0, scale);
    for (int i = 0; i < out; ++i) EXPECT_NEAR(res[0][0][0][i].item<double>(), ref[i], 1e-6);
  }
}

TEST(Data, MatchesTorchAntialiasedBicubic) {
  namespace F = torch::nn::functional;
  auto img = seeded_rand({1, 3, 40, 36}, 2, f64());
  for (auto [h, w] : {std::pair{20, 18}, std::pair{13, 9}, std::pair{16, 36}}) {
    auto ours = bicubic_resize(img, h, w);
    auto ref = F::interpolate(img, F::InterpolateFuncOptions()
                                       .size(std::vector<std::int64_t>{h, w})
                                       .mode(torch::kBicubic)
                                       .align_corners(false)
                                       .antialias(true));
    EXPECT_LT(max_abs_diff(ours, ref), 1e-6) << h << "x" << w;
  }
}

TEST(Data, DegradeRejectsTinyOutputs) {
  EXPECT_THROW(degrade(torch::rand({1, 3, 30, 30}), 4.0, 2.0), InvalidInput);
  EXPECT_THROW(degrade(torch::rand({1, 3, 30, 30}), 0.5, 2.0), InvalidInput);
  EXPECT_NO_THROW(degrade(torch::rand({1, 3, 32, 32}), 4.0, 4.0));
  EXPECT_EQ(parse_degrade_mode("bicubic+noise"), DegradeMode::kBicubicNoise);
  EXPECT_THROW(parse_degrade_mode("jpeg"), ConfigError);
}

TEST(Data, NoiseIsSeededAndScaled) {
  auto hr = torch::full({4, 3, 64, 64}, 0.5);
  DegradeOptions o{DegradeMode::kBicubicNoise, 0.05, 9};
  auto a = degrade(hr, 2.0, 2.0, o);
  EXPECT_TRUE(bit_equal(a, degrade(hr, 2.0, 2.0, o)));
  EXPECT_NEAR((a - 0.5).std().item<double>(), 0.05, 0.005);
  o.seed = 10;
  EXPECT_FALSE(bit_equal(a, degrade(hr, 2.0, 2.0, o)));
}

TEST(Data, TrainingSampleArithmetic) {
  auto s = sample_for(2.0, 2.0, 8, 3, 6);
  EXPECT_EQ(s.lr.sizes(), (std::vector<std::int64_t>{2, 3, 8, 8}));
  EXPECT_EQ(s.out_h(), 16);
  ASSERT_EQ(s.gt.size(), 6u);
  for (std::size_t k = 0; k < s.gt.size(); ++k) {
    EXPECT_EQ(s.gt[k].sizes(), (std::vector<std::int64_t>{2, 3, 8, 8}));
    EXPECT_GE(s.offsets[k].first, 0);
    EXPECT_LE(s.offsets[k].first, 8);
    EXPECT_GE(s.offsets[k].second, 0);
    EXPECT_LE(s.offsets[k].second, 8);
    EXPECT_EQ(s.coords[k].sizes(), (std::vector<std::int64_t>{2, 8, 8}));
  }
  EXPECT_THROW(make_training_sample(torch::rand({2, 3, 12, 16}), 8, 2.0, 2.0, 1,
                                    *std::make_unique<at::Generator>(make_generator(1))),
               InvalidInput);
}

TEST(Data, UnitScaleSampleIsItsOwnTarget) {
  auto s = sample_for(1.0, 1.0, 10, 4, 1);
  EXPECT_EQ(s.offsets[0], (std::pair<std::int64_t, std::int64_t>{0, 0}));
  EXPECT_TRUE(bit_equal(s.lr, s.gt[0]));
}

TEST(Data, CoordinatesFollowRelativeFormula) {
  auto c = crop_coordinates(2.0, 3.0, 0, 0, 6);
  for (std::int64_t r = 0; r < 6; ++r) {
    for (std::int64_t col = 0; col < 6; ++col) {
      EXPECT_NEAR(c[0][r][col].item<double>(), relative_coordinate(r, 2.0), 1e-7);
      EXPECT_NEAR(c[1][r][col].item<double>(), relative_coordinate(col, 3.0), 1e-7);
    }
  }
  auto shifted = crop_coordinates(2.5, 1.5, 3, 5, 4);
  EXPECT_NEAR(shifted[0][1][0].item<double>(), relative_coordinate(4, 2.5), 1e-7);
  EXPECT_NEAR(shifted[1][0][2].item<double>(), relative_coordinate(7, 1.5), 1e-7);
}

TEST(Data, LowResMatchesDownsizedTarget) {
  SynthOptions o;
  o.frames = 1;
  o.height = o.width = 32;
  o.seed = 5;
  auto hr = synth_clip(o).to(torch::kFloat32);
  auto gen = make_generator(5);
  auto s = make_training_sample(hr, 16, 2.0, 2.0, 8, gen);
  int checked = 0;
  for (std::size_t k = 0; k < s.gt.size(); ++k) {
    const auto [row, col] = s.offsets[k];
    if (row % 2 || col % 2) continue;
    auto down = bicubic_resize(s.gt[k], 8, 8, 2.0, 2.0);
    auto region = s.lr.slice(2, row / 2, row / 2 + 8).slice(3, col / 2, col / 2 + 8);
    // Interior only: crop borders see truncated kernels.
    auto inner = [](const torch::Tensor& t) { return t.slice(2, 2, 6).slice(3, 2, 6); };
    EXPECT_LT(max_abs_diff(inner(down), inner(region)), 0.05);
    ++checked;
  }
  EXPECT_GT(checked, 0);
  auto flat = make_training_sample(torch::full({1, 3, 16, 16}, 0.3), 8, 2.0, 2.0, 1, gen);
  EXPECT_LT(max_abs_diff(bicubic_resize(flat.gt[0], 4, 4, 2.0, 2.0), torch::full({1, 3, 4, 4}, 0.3)), 1e-6);
}

TEST(Data, IdentityAugmentLeavesSample) {
  auto s = sample_for(2.5, 2.5, 8, 6);
  auto a = augment(s, AugmentDraw{});
  EXPECT_TRUE(bit_equal(a.lr, s.lr));
  for (std::size_t k = 0; k < s.gt.size(); ++k) {
    EXPECT_TRUE(bit_equal(a.gt[k], s.gt[k]));
    EXPECT_TRUE(bit_equal(a.coords[k], s.coords[k]));
    EXPECT_EQ(a.offsets[k], s.offsets[k]);
  }
}

TEST(Data, FlipIsAnInvolution) {
  auto s = sample_for(2.5, 1.5, 8, 7);
  for (AugmentDraw d : {AugmentDraw{0, true, false}, AugmentDraw{0, false, true}}) {
    auto twice = augment(augment(s, d), d);
    EXPECT_TRUE(bit_equal(twice.lr, s.lr));
    for (std::size_t k = 0; k < s.gt.size(); ++k) {
      EXPECT_TRUE(bit_equal(twice.gt[k], s.gt[k]));
      EXPECT_LT(max_abs_diff(twice.coords[k], s.coords[k]), 1e-7);
      EXPECT_EQ(twice.offsets[k], s.offsets[k]);
    }
  }
}

TEST(Data, QuarterTurnMovesCorner) {
  auto s = sample_for(2.0, 2.0, 8, 8, 1);
  s.lr.zero_();
  s.gt[0].zero_();
  s.lr.select(-2, 0).select(-1, 7).fill_(1.0);     // top-right
  s.gt[0].select(-2, 0).select(-1, 7).fill_(1.0);
  auto r = augment(s, AugmentDraw{1, false, false});
  // Counter-clockwise: top-right goes to top-left.
  EXPECT_EQ(r.lr.select(-2, 0).select(-1, 0).min().item<float>(), 1.0f);
  EXPECT_EQ(r.gt[0].select(-2, 0).select(-1, 0).min().item<float>(), 1.0f);
  EXPECT_EQ(r.lr.sum().item<float>(), s.lr.sum().item<float>());
  auto full = augment(s, AugmentDraw{4, false, false});
  EXPECT_TRUE(bit_equal(full.lr, s.lr));
}

TEST(Data, AugmentedCoordinatesStayConsistent) {
  // alpha P and beta P integral, so every transform is exact.
  auto s = sample_for(2.5, 1.75, 8, 9, 3);
  for (int rot = 0; rot < 4; ++rot) {
    for (int flips = 0; flips < 4; ++flips) {
      AugmentDraw d{rot, (flips & 1) != 0, (flips & 2) != 0};
      auto a = augment(s, d);
      EXPECT_DOUBLE_EQ(a.alpha, rot % 2 ? s.beta : s.alpha);
      EXPECT_DOUBLE_EQ(a.beta, rot % 2 ? s.alpha : s.beta);
      expect_coords_follow_formula(a);
      for (std::size_t k = 0; k < a.gt.size(); ++k) {
        EXPECT_GE(a.offsets[k].first, 0);
        EXPECT_LE(a.offsets[k].first, a.out_h() - a.patch());
        EXPECT_GE(a.offsets[k].second, 0);
        EXPECT_LE(a.offsets[k].second, a.out_w() - a.patch());
      }
    }
  }
}

TEST(Data, AugmentedGroundTruthTracksHighRes) {
  // With integral scale a transformed crop is the same crop of the
  // transformed HR patch.
  SynthOptions o;
  o.frames = 1;
  o.height = 16;
  o.width = 24;
  o.seed = 10;
  auto hr = synth_clip(o).to(torch::kFloat32);
  auto gen = make_generator(10);
  auto s = make_training_sample(hr, 8, 2.0, 3.0, 2, gen);
  auto a = augment(s, AugmentDraw{1, true, false});
  auto hr_t = torch::rot90(hr, 1, {2, 3}).flip({3});
  for (std::size_t k = 0; k < a.gt.size(); ++k) {
    const auto [row, col] = a.offsets[k];
    EXPECT_TRUE(bit_equal(a.gt[k], hr_t.slice(2, row, row + 8).slice(3, col, col + 8).contiguous()));
  }
}

TEST(Data, ScaleDrawIsUniform) {
  auto gen = make_generator(11);
  const int n = 10000;
  std::vector<double> draws(n);
  for (auto& d : draws) {
    d = sample_scale(gen);
    ASSERT_GE(d, 1.0);
    ASSERT_LE(d, 4.0);
  }
  std::sort(draws.begin(), draws.end());
  double stat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cdf = (draws[i] - 1.0) / 3.0;
    stat = std::max({stat, (i + 1.0) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  EXPECT_LT(stat, 1.63 / std::sqrt(static_cast<double>(n)));
  EXPECT_THROW(sample_scale(gen, 0.5, 2.0), InvalidInput);
}

TEST(Data, SyntheticClipsAreBoundedAndSeeded) {
  SynthOptions o;
  o.frames = 5;
  o.height = 20;
  o.width = 28;
  o.seed = 12;
  auto a = synth_clip(o);
  EXPECT_EQ(a.sizes(), (std::vector<std::int64_t>{5, 3, 20, 28}));
  EXPECT_GE(a.min().item<double>(), 0.1 - 1e-12);
  EXPECT_LE(a.max().item<double>(), 0.9 + 1e-12);
  EXPECT_TRUE(bit_equal(a, synth_clip(o)));
  EXPECT_FALSE(bit_equal(a[0], a[1]));

  auto bar = moving_bar_clip(4, 6, 10, 1, 2);
  for (std::int64_t t = 0; t < 4; ++t) {
    EXPECT_FLOAT_EQ(bar[t][0][3][2 * t].item<float>(), 0.9f);
    EXPECT_NEAR(bar[t].sum().item<double>(), 3 * (6 * 9 * 0.1 + 6 * 0.9), 1e-4);
  }
  EXPECT_TRUE(bit_equal(static_clip(a[0], 3)[2], a[0]));
}

TEST(Data, PngRoundTrip) {
  TempDir dir("png");
  auto img = torch::round(seeded_rand({3, 7, 9}, 13) * 255.0) / 255.0;
  write_png(dir / "a.png", img);
  EXPECT_LT(max_abs_diff(read_png(dir / "a.png"), img), 1e-6);
  write_png(dir / "gray.png", img.slice(0, 0, 1));
  auto gray = read_png(dir / "gray.png");
  EXPECT_EQ(gray.size(0), 3);
  EXPECT_LT(max_abs_diff(gray[2], img[0]), 1e-6);
  {
    std::ofstream junk(dir / "junk.png");
    junk << "not a png";
  }
  EXPECT_THROW(read_png(dir / "junk.png"), Error);
  EXPECT_EQ(frame_name(12), "frame_00000012.png");
}

TEST(Data, DatasetRoundTrip) {
  TempDir dir("dataset");
  SynthOptions o;
  o.frames = 3;
  o.height = 12;
  o.width = 16;
  o.seed = 14;
  auto written = write_synthetic_dataset(dir.path(), 2, 1, o);
  auto ds = load_dataset(dir.path());
  ASSERT_EQ(ds.train.size(), 2u);
  ASSERT_EQ(ds.val.size(), 1u);
  EXPECT_EQ(ds.train[1].frames, 3);
  EXPECT_EQ(ds.train[1].height, 12);
  EXPECT_EQ(ds.train[1].width, 16);
  auto clip = load_clip(ds.train[0]);
  auto expected = synth_clip(o).to(torch::kFloat32);
  EXPECT_LT(max_abs_diff(clip, expected), 0.5 / 255.0 + 1e-6);

  {
    std::ofstream manifest(dir / "manifest.txt", std::ios::app);
    manifest << "# comment\n\ntest " << ds.val[0].id << "\n";
  }
  EXPECT_THROW(load_dataset(dir.path()), ConfigError);
  EXPECT_THROW(load_dataset(dir / "missing"), ConfigError);
}
