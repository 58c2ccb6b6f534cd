#include <gtest/gtest.h>

#include <fstream>

#include "avsr/checkpoint.hpp"
#include "avsr/error.hpp"
#include "avsr/model.hpp"
#include "test_support.hpp"

using namespace avsr;
using namespace avsr::testing;

namespace {

torch::Tensor clip(std::int64_t frames, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  return seeded_rand({frames, 3, h, w}, seed);
}

AvsrModel tiny(Variant variant = Variant::kStAvsr, std::int64_t window = 2) {
  return build_variant(tiny_config(variant, window));
}

}  // namespace

TEST(Pipeline, OutputShapes) {
  auto model = tiny();
  EXPECT_EQ(model->super_resolve(clip(3, 16, 16, 1), 2.5, 3.5).sizes(),
            (std::vector<std::int64_t>{3, 3, 40, 56}));
  EXPECT_EQ(model->super_resolve(clip(1, 12, 12, 2), 2.0, 1.5).sizes(),
            (std::vector<std::int64_t>{1, 3, 24, 18}));
}

TEST(Pipeline, UnitScaleWithZeroHeadIsIdentity) {
  auto model = tiny();
  {
    torch::NoGradGuard no_grad;
    model->hyperup()->head_out()->weight.zero_();
    model->hyperup()->head_out()->bias.zero_();
  }
  auto video = clip(3, 12, 12, 3);
  EXPECT_TRUE(bit_equal(model->super_resolve(video, 1.0, 1.0), video));
}

TEST(Pipeline, FrameCountPreservedForEveryWindow) {
  for (std::int64_t window = 0; window <= 3; ++window) {
    auto model = tiny(Variant::kStAvsr, window);
    for (std::int64_t frames : {1, 2, 4}) {
      EXPECT_EQ(model->super_resolve(clip(frames, 8, 8, 4), 1.5, 1.5).size(0), frames)
          << "L=" << window << " T=" << frames;
    }
  }
}

TEST(Pipeline, WindowSchedule) {
  auto model = tiny(Variant::kStAvsr, 2);
  EXPECT_EQ(model->window_at(0, 5), 2);
  EXPECT_EQ(model->window_at(3, 5), 1);
  EXPECT_EQ(model->window_at(4, 5), 0);
  auto v1 = tiny(Variant::kV1, 3);
  EXPECT_EQ(v1->window_at(0, 5), 0);
}

TEST(Pipeline, RepeatedRunsAreBitIdentical) {
  auto model = tiny();
  auto video = clip(4, 12, 12, 5);
  EXPECT_TRUE(bit_equal(model->super_resolve(video, 2.0, 2.0), model->super_resolve(video, 2.0, 2.0)));
}

TEST(Pipeline, CachedMatchesPerFrameBanks) {
  auto model = tiny();
  auto video = clip(3, 12, 12, 6);
  auto cached = model->super_resolve(video, 2.3, 1.7, true);
  auto uncached = model->super_resolve(video, 2.3, 1.7, false);
  EXPECT_TRUE(bit_equal(cached, uncached));
  EXPECT_EQ(model->cache()->size(), 1u);
}

TEST(Pipeline, OutputNeverReadsBeyondWindow) {
  const std::int64_t frames = 6;
  for (std::int64_t window : {0, 1, 2}) {
    auto model = tiny(Variant::kStAvsr, window);
    auto video = clip(frames, 8, 8, 7);
    auto base = model->super_resolve(video, 2.0, 2.0);
    for (std::int64_t j = 1; j < frames; ++j) {
      auto probe = video.clone();
      probe[j] = probe[j] * 0.5 + 0.25;
      auto out = model->super_resolve(probe, 2.0, 2.0);
      for (std::int64_t c = 0; c < frames; ++c) {
        const bool changed = !bit_equal(out[c], base[c]);
        EXPECT_EQ(changed, j <= c + window) << "L=" << window << " frame " << c << " probe " << j;
      }
    }
  }
}

TEST(Pipeline, VariantContracts) {
  auto st = tiny_config(Variant::kStAvsr);
  EXPECT_EQ(st.input_channels(), st.channels + 3);
  EXPECT_EQ(tiny_config(Variant::kBAvsr).input_channels(), 3);
  EXPECT_EQ(tiny_config(Variant::kBAvsr).effective_prior(), PriorKind::kNone);
  EXPECT_EQ(tiny_config(Variant::kV1, 3).effective_window(), 0);
  EXPECT_FALSE(tiny_config(Variant::kV2).attention_options().rectify);
  EXPECT_FALSE(tiny_config(Variant::kV3).attention_options().coarse_flow);
  EXPECT_EQ(tiny_config(Variant::kV4).attention_options().aggregation, Aggregation::kConcat);
  EXPECT_EQ(tiny_config(Variant::kV5).attention_options().aggregation, Aggregation::kMeanThenSE);
  EXPECT_EQ(tiny_config(Variant::kV6).attention_options().aggregation, Aggregation::kAttentionNoSE);

  auto full = tiny(Variant::kStAvsr);
  auto v1 = tiny(Variant::kV1);
  auto a = full->recurrent()->named_parameters();
  auto b = v1->recurrent()->named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (const auto& item : a) EXPECT_EQ(item.value().sizes(), b[item.key()].sizes()) << item.key();

  auto base = tiny(Variant::kBAvsr);
  EXPECT_FALSE(base->has_prior());
  EXPECT_TRUE(full->has_prior());
  auto video = clip(3, 8, 8, 8);
  EXPECT_EQ(base->inputs_for(video.unsqueeze(0)).size(2), 3);
  EXPECT_EQ(full->inputs_for(video.unsqueeze(0)).size(2), st.channels + 3);

  for (const auto& name : variant_names()) {
    auto model = build_variant(tiny_config(parse_variant(name)));
    EXPECT_EQ(model->super_resolve(video, 1.5, 2.0).sizes(),
              (std::vector<std::int64_t>{3, 3, 12, 16}))
        << name;
  }
}

TEST(Pipeline, NoSeVariantComposesLocalAttentionAndMerge) {
  auto model = tiny(Variant::kV6, 1);
  auto video = clip(2, 8, 8, 9).unsqueeze(0);
  auto inputs = model->inputs_for(video);
  auto flows = model->plan_flows(video);
  auto hidden = model->recurrent()->propagate(inputs, flows.backward);
  auto refined = model->refine_all(hidden, inputs, flows);
  auto& unit = model->attention();
  auto aligned = unit->rectify_and_align(hidden[0], hidden[1], flows.future[0][0], 1);
  auto b = unit->local_cross_attention(hidden[0], std::vector<torch::Tensor>{aligned}).aggregated;
  EXPECT_TRUE(bit_equal(refined[0], unit->merge_and_refine(hidden[0], b, inputs.select(1, 0))));
}

TEST(Pipeline, PriorWithZeroProjectionEqualsPaddedFrames) {
  auto model = tiny();
  {
    torch::NoGradGuard no_grad;
    model->prior()->projection()->weight.zero_();
    model->prior()->projection()->bias.zero_();
  }
  auto video = clip(3, 8, 8, 10).unsqueeze(0);
  ScaleSpec spec(2.0, 2.0, 8, 8);
  torch::NoGradGuard no_grad;
  auto padded = torch::cat({torch::zeros({1, 3, 8, 8, 8}), video}, 2);
  EXPECT_TRUE(bit_equal(model->forward(video, spec, BankMode::kCached),
                        model->forward_with_inputs(video, padded, spec, BankMode::kCached)));
  EXPECT_THROW(model->forward_with_inputs(video, video, spec, BankMode::kCached), ConfigError);
}

TEST(Pipeline, FrozenProvidersTakeNoGradient) {
  auto model = tiny();
  const auto before = model->frozen_checksum();
  auto video = clip(2, 8, 8, 11).unsqueeze(0);
  model->forward(video, ScaleSpec(2.0, 2.0, 8, 8)).sum().backward();
  for (const auto& item : model->named_parameters()) {
    const bool frozen = item.key().starts_with("flow.") || item.key().starts_with("prior.pyramid.");
    EXPECT_EQ(item.value().requires_grad(), !frozen) << item.key();
  }
  std::int64_t trainable = 0;
  for (const auto& p : model->trainable_parameters()) trainable += p.grad().defined() ? 1 : 0;
  EXPECT_GT(trainable, 0);
  EXPECT_EQ(model->frozen_checksum(), before);
}

TEST(Pipeline, CheckpointRoundTrip) {
  TempDir dir("ckpt");
  auto model = tiny();
  {
    torch::NoGradGuard no_grad;
    for (auto& p : model->trainable_parameters()) p.add_(0.01);
  }
  const auto path = dir / "model.ckpt";
  save_checkpoint(*model, path, 42);
  EXPECT_FALSE(std::filesystem::exists(dir / "model.ckpt.partial"));

  std::int64_t step = 0;
  auto loaded = load_checkpoint(path, nullptr, &step);
  EXPECT_EQ(step, 42);
  EXPECT_EQ(loaded->config(), model->config());
  auto video = clip(3, 8, 8, 12);
  EXPECT_TRUE(bit_equal(loaded->super_resolve(video, 2.0, 2.0), model->super_resolve(video, 2.0, 2.0)));

  auto fresh = tiny();
  load_into(*fresh, path);
  EXPECT_TRUE(bit_equal(fresh->super_resolve(video, 2.0, 2.0), model->super_resolve(video, 2.0, 2.0)));
}

TEST(Pipeline, CheckpointErrors) {
  TempDir dir("ckpt_err");
  auto model = tiny(Variant::kV1);
  const auto path = dir / "v1.ckpt";
  save_checkpoint(*model, path);

  auto st = tiny(Variant::kStAvsr);
  EXPECT_THROW(load_into(*st, path), ConfigMismatch);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto truncated = dir / "cut.ckpt";
  {
    std::ofstream out(truncated, std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(load_checkpoint(truncated), CorruptBlob);

  const auto future = dir / "future.ckpt";
  write_archive(future, "AVSRCKPT", kCheckpointVersion + 1, read_archive(path, "AVSRCKPT", kCheckpointVersion));
  EXPECT_THROW(load_checkpoint(future), VersionMismatch);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST(Pipeline, BankSizeGrowsWithScale) {
  auto model = tiny();
  std::int64_t previous = 0;
  for (double s : {1.0, 1.5, 2.0, 3.0, 4.0}) {
    auto bank = model->precompute(ScaleSpec(s, s, 10, 10));
    const auto size = bank->weights.numel();
    EXPECT_EQ(size, static_cast<std::int64_t>(std::floor(10 * s)) * static_cast<std::int64_t>(std::floor(10 * s)) * 9);
    EXPECT_GT(size, previous);
    previous = size;
  }
}

TEST(Pipeline, RejectsInvalidRequests) {
  auto model = tiny();
  EXPECT_THROW(model->super_resolve(clip(2, 8, 8, 13), 0.5, 2.0), InvalidInput);
  EXPECT_THROW(model->super_resolve(torch::zeros({0, 3, 8, 8}), 2.0, 2.0), InvalidInput);
  EXPECT_THROW(model->super_resolve(torch::zeros({2, 1, 8, 8}), 2.0, 2.0), InvalidInput);
  EXPECT_THROW(parse_variant("v7"), ConfigError);
  auto bad = tiny_config();
  bad.window = -1;
  EXPECT_THROW(build_variant(bad), ConfigError);
}
