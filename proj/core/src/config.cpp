#include "avsr/config.hpp"

#include <nlohmann/json.hpp>

#include "avsr/error.hpp"

namespace avsr {

namespace {

const std::vector<std::pair<Variant, std::string>>& variant_table() {
  static const std::vector<std::pair<Variant, std::string>> table{
      {Variant::kStAvsr, "st-avsr"}, {Variant::kBAvsr, "b-avsr"}, {Variant::kV1, "v1"},
      {Variant::kV2, "v2"},          {Variant::kV3, "v3"},        {Variant::kV4, "v4"},
      {Variant::kV5, "v5"},          {Variant::kV6, "v6"}};
  return table;
}

}  // namespace

std::string to_string(Variant variant) {
  for (const auto& [v, name] : variant_table()) {
    if (v == variant) return name;
  }
  return "?";
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : variant_table()) out.push_back(entry.second);
    return out;
  }();
  return names;
}

Variant parse_variant(const std::string& name) {
  for (const auto& [v, n] : variant_table()) {
    if (n == name) return v;
  }
  std::string valid;
  for (const auto& n : variant_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown variant '" + name + "' (valid: " + valid + ")");
}

std::int64_t ModelConfig::effective_window() const {
  return variant == Variant::kV1 ? 0 : window;
}

PriorKind ModelConfig::effective_prior() const {
  return variant == Variant::kBAvsr ? PriorKind::kNone : prior;
}

std::int64_t ModelConfig::input_channels() const {
  return effective_prior() == PriorKind::kNone ? 3 : channels + 3;
}

AttentionOptions ModelConfig::attention_options() const {
  AttentionOptions o;
  o.channels = channels;
  o.input_channels = input_channels();
  o.refine_blocks = refine_blocks;
  o.window = effective_window();
  o.deform_groups = deform_groups;
  o.deform_kernel = deform_kernel;
  o.rectify = variant != Variant::kV2;
  o.coarse_flow = variant != Variant::kV3;
  switch (variant) {
    case Variant::kV4: o.aggregation = Aggregation::kConcat; break;
    case Variant::kV5: o.aggregation = Aggregation::kMeanThenSE; break;
    case Variant::kV6: o.aggregation = Aggregation::kAttentionNoSE; break;
    default: o.aggregation = Aggregation::kFull; break;
  }
  return o;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (window < 0) fail("window must be >= 0");
  if (channels < 1) fail("channels must be >= 1");
  if (recurrent_blocks < 0 || refine_blocks < 0) fail("block counts must be >= 0");
  if (kernel < 1 || kernel % 2 == 0) fail("kernel must be odd and >= 1");
  if (deform_kernel < 1 || deform_kernel % 2 == 0) fail("deform_kernel must be odd and >= 1");
  if (deform_groups < 1 || channels % deform_groups != 0) {
    fail("deform_groups must divide channels");
  }
  if (mlp_hidden.empty()) fail("mlp_hidden must not be empty");
  for (auto w : mlp_hidden) {
    if (w < 1) fail("mlp_hidden widths must be >= 1");
  }
  if (octaves < 1) fail("octaves must be >= 1");
  if (effective_prior() != PriorKind::kNone) {
    if (prior_widths.empty()) fail("prior_widths must not be empty");
    for (auto w : prior_widths) {
      if (w < 1) fail("prior_widths must be >= 1");
    }
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["variant"] = to_string(variant);
  j["window"] = window;
  j["channels"] = channels;
  j["recurrent_blocks"] = recurrent_blocks;
  j["refine_blocks"] = refine_blocks;
  j["kernel"] = kernel;
  j["deform_groups"] = deform_groups;
  j["deform_kernel"] = deform_kernel;
  j["mlp_hidden"] = mlp_hidden;
  j["octaves"] = octaves;
  j["flow"] = to_string(flow);
  j["flow_weights"] = flow_weights;
  j["prior"] = to_string(prior);
  j["prior_weights"] = prior_weights;
  j["prior_widths"] = prior_widths;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.window = j.at("window").get<std::int64_t>();
    c.channels = j.at("channels").get<std::int64_t>();
    c.recurrent_blocks = j.at("recurrent_blocks").get<std::int64_t>();
    c.refine_blocks = j.at("refine_blocks").get<std::int64_t>();
    c.kernel = j.at("kernel").get<std::int64_t>();
    c.deform_groups = j.at("deform_groups").get<std::int64_t>();
    c.deform_kernel = j.at("deform_kernel").get<std::int64_t>();
    c.mlp_hidden = j.at("mlp_hidden").get<std::vector<std::int64_t>>();
    c.octaves = j.at("octaves").get<int>();
    c.flow = parse_flow_kind(j.at("flow").get<std::string>());
    c.flow_weights = j.at("flow_weights").get<std::string>();
    c.prior = parse_prior_kind(j.at("prior").get<std::string>());
    c.prior_weights = j.at("prior_weights").get<std::string>();
    c.prior_widths = j.at("prior_widths").get<std::vector<std::int64_t>>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: malformed record: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace avsr
