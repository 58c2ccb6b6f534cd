#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "avsr/attention.hpp"
#include "avsr/flow.hpp"
#include "avsr/hyperup.hpp"
#include "avsr/prior.hpp"

namespace avsr {

/// Full model, prior-free baseline, and the six ablations of the full model.
enum class Variant { kStAvsr, kBAvsr, kV1, kV2, kV3, kV4, kV5, kV6 };

std::string to_string(Variant variant);
/// Accepts "st-avsr", "b-avsr", "v1".."v6"; throws ConfigError listing the
/// valid names otherwise.
Variant parse_variant(const std::string& name);
const std::vector<std::string>& variant_names();

struct ModelConfig {
  Variant variant = Variant::kStAvsr;
  std::int64_t window = 2;          // L
  std::int64_t channels = 64;       // C
  std::int64_t recurrent_blocks = 15;  // N1
  std::int64_t refine_blocks = 15;  // N2
  std::int64_t kernel = 3;          // K
  std::int64_t deform_groups = 8;
  std::int64_t deform_kernel = 3;
  std::vector<std::int64_t> mlp_hidden{16, 16, 16, 64};
  int octaves = kDefaultOctaves;
  FlowKind flow = FlowKind::kLearnedFrozen;
  std::string flow_weights;         // optional external weights, empty = seeded
  PriorKind prior = PriorKind::kSeededPyramid;
  std::string prior_weights;
  std::vector<std::int64_t> prior_widths{64, 128, 256, 512, 512};
  std::uint64_t seed = 0;

  /// Window actually used: 0 for v1, `window` otherwise.
  std::int64_t effective_window() const;
  /// Prior kind actually used: none for b-avsr.
  PriorKind effective_prior() const;
  /// Channels fed to the recurrence and refinement: 3 or C + 3.
  std::int64_t input_channels() const;
  AttentionOptions attention_options() const;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace avsr
