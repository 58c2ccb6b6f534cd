#include "run_config.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "avsr/error.hpp"

namespace avsr::cli {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError(key + ": cannot parse '" + value + "' as " + expected);
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n\"'");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n\"'");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string token;
  for (char ch : text + ",") {
    if (ch == ',' || ch == ' ' || ch == '\t' || ch == '[' || ch == ']') {
      if (!token.empty()) out.push_back(token);
      token.clear();
    } else {
      token += ch;
    }
  }
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  auto t = trim(text);
  double v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) bad_value(key, text, "a number");
  return v;
}

std::int64_t to_int(const std::string& key, const std::string& text) {
  auto t = trim(text);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) bad_value(key, text, "an integer");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
  auto t = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    bad_value(key, text, "a non-negative integer");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad_value(key, text, "a boolean");
}

std::vector<std::int64_t> to_ints(const std::string& key, const std::string& text) {
  std::vector<std::int64_t> out;
  for (const auto& tok : split_list(text)) out.push_back(to_int(key, tok));
  return out;
}

std::string join_ints(const std::vector<std::int64_t>& values) {
  std::string out;
  for (auto v : values) out += (out.empty() ? "" : ",") + std::to_string(v);
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Bind a member reached through `access` to a parser / formatter pair.
template <class Access>
Field number_field(Access access) {
  using T = std::remove_reference_t<decltype(access(std::declval<RunConfig&>()))>;
  Field f;
  f.set = [access](RunConfig& c, const std::string& key, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      access(c) = to_bool(key, v);
    } else if constexpr (std::is_floating_point_v<T>) {
      access(c) = to_double(key, v);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      access(c) = to_uint(key, v);
    } else {
      access(c) = static_cast<T>(to_int(key, v));
    }
  };
  f.get = [access](const RunConfig& c) {
    auto& value = access(const_cast<RunConfig&>(c));
    if constexpr (std::is_same_v<T, bool>) {
      return std::string(value ? "true" : "false");
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(value);
    } else {
      return std::to_string(value);
    }
  };
  return f;
}

template <class Access>
Field string_field(Access access) {
  return {[access](RunConfig& c, const std::string&, const std::string& v) { access(c) = trim(v); },
          [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); }};
}

template <class Access>
Field ints_field(Access access) {
  return {[access](RunConfig& c, const std::string& key, const std::string& v) {
            access(c) = to_ints(key, v);
          },
          [access](const RunConfig& c) { return join_ints(access(const_cast<RunConfig&>(c))); }};
}

template <class Access, class Parse, class Format>
Field enum_field(Access access, Parse parse, Format format) {
  return {[=](RunConfig& c, const std::string&, const std::string& v) { access(c) = parse(trim(v)); },
          [=](const RunConfig& c) { return format(access(const_cast<RunConfig&>(c))); }};
}

#define AVSR_MEMBER(path) [](RunConfig& c) -> auto& { return c.path; }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("model.variant",
                   enum_field(AVSR_MEMBER(model.variant), parse_variant,
                              [](Variant v) { return to_string(v); }));
    t.emplace_back("model.window", number_field(AVSR_MEMBER(model.window)));
    t.emplace_back("model.channels", number_field(AVSR_MEMBER(model.channels)));
    t.emplace_back("model.recurrent_blocks", number_field(AVSR_MEMBER(model.recurrent_blocks)));
    t.emplace_back("model.refine_blocks", number_field(AVSR_MEMBER(model.refine_blocks)));
    t.emplace_back("model.kernel", number_field(AVSR_MEMBER(model.kernel)));
    t.emplace_back("model.deform_groups", number_field(AVSR_MEMBER(model.deform_groups)));
    t.emplace_back("model.deform_kernel", number_field(AVSR_MEMBER(model.deform_kernel)));
    t.emplace_back("model.mlp_hidden", ints_field(AVSR_MEMBER(model.mlp_hidden)));
    t.emplace_back("model.octaves", number_field(AVSR_MEMBER(model.octaves)));
    t.emplace_back("model.flow", enum_field(AVSR_MEMBER(model.flow), parse_flow_kind,
                                            [](FlowKind k) { return to_string(k); }));
    t.emplace_back("model.flow_weights", string_field(AVSR_MEMBER(model.flow_weights)));
    t.emplace_back("model.prior", enum_field(AVSR_MEMBER(model.prior), parse_prior_kind,
                                             [](PriorKind k) { return to_string(k); }));
    t.emplace_back("model.prior_weights", string_field(AVSR_MEMBER(model.prior_weights)));
    t.emplace_back("model.prior_widths", ints_field(AVSR_MEMBER(model.prior_widths)));
    t.emplace_back("model.seed", number_field(AVSR_MEMBER(model.seed)));

    t.emplace_back("train.iterations", number_field(AVSR_MEMBER(train.iterations)));
    t.emplace_back("train.lr_init", number_field(AVSR_MEMBER(train.lr_init)));
    t.emplace_back("train.lr_final", number_field(AVSR_MEMBER(train.lr_final)));
    t.emplace_back("train.batch_size", number_field(AVSR_MEMBER(train.batch_size)));
    t.emplace_back("train.patch", number_field(AVSR_MEMBER(train.patch)));
    t.emplace_back("train.frames", number_field(AVSR_MEMBER(train.frames)));
    t.emplace_back("train.crops", number_field(AVSR_MEMBER(train.crops)));
    t.emplace_back("train.epsilon", number_field(AVSR_MEMBER(train.epsilon)));
    t.emplace_back("train.scale_min", number_field(AVSR_MEMBER(train.scale_min)));
    t.emplace_back("train.scale_max", number_field(AVSR_MEMBER(train.scale_max)));
    t.emplace_back("train.augment", number_field(AVSR_MEMBER(train.augment)));
    t.emplace_back("train.log_every", number_field(AVSR_MEMBER(train.log_every)));
    t.emplace_back("train.checkpoint_every", number_field(AVSR_MEMBER(train.checkpoint_every)));
    t.emplace_back("train.seed", number_field(AVSR_MEMBER(train.seed)));

    t.emplace_back("data.root", string_field(AVSR_MEMBER(data.root)));
    t.emplace_back("data.generate", number_field(AVSR_MEMBER(data.generate)));
    t.emplace_back("data.train_clips", number_field(AVSR_MEMBER(data.train_clips)));
    t.emplace_back("data.val_clips", number_field(AVSR_MEMBER(data.val_clips)));
    t.emplace_back("data.frames", number_field(AVSR_MEMBER(data.synth.frames)));
    t.emplace_back("data.height", number_field(AVSR_MEMBER(data.synth.height)));
    t.emplace_back("data.width", number_field(AVSR_MEMBER(data.synth.width)));
    t.emplace_back("data.gratings", number_field(AVSR_MEMBER(data.synth.gratings)));
    t.emplace_back("data.blobs", number_field(AVSR_MEMBER(data.synth.blobs)));
    t.emplace_back("data.max_frequency", number_field(AVSR_MEMBER(data.synth.max_frequency)));
    t.emplace_back("data.max_speed", number_field(AVSR_MEMBER(data.synth.max_speed)));
    t.emplace_back("data.seed", number_field(AVSR_MEMBER(data.synth.seed)));

    t.emplace_back("eval.scales",
                   Field{[](RunConfig& c, const std::string&, const std::string& v) {
                           c.eval.scales = parse_scales(v);
                         },
                         [](const RunConfig& c) { return format_scales(c.eval.scales); }});
    t.emplace_back("eval.degrade", enum_field(AVSR_MEMBER(eval.degrade), parse_degrade_mode,
                                              [](DegradeMode m) { return to_string(m); }));
    t.emplace_back("eval.noise_sigma", number_field(AVSR_MEMBER(eval.noise_sigma)));
    t.emplace_back("eval.precompute", number_field(AVSR_MEMBER(eval.precompute)));

    t.emplace_back("run.dir", string_field(AVSR_MEMBER(run_dir)));
    return t;
  }();
  return table;
}

#undef AVSR_MEMBER

const Field& lookup(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

ScaleList parse_scales(const std::string& text) {
  ScaleList out;
  for (const auto& tok : split_list(text)) {
    auto x = tok.find_first_of("xX");
    if (x == std::string::npos) {
      double s = to_double("eval.scales", tok);
      out.emplace_back(s, s);
    } else {
      out.emplace_back(to_double("eval.scales", tok.substr(0, x)),
                       to_double("eval.scales", tok.substr(x + 1)));
    }
  }
  if (out.empty()) throw ConfigError("eval.scales: empty scale list");
  for (const auto& [a, b] : out) {
    if (!(a >= 1.0) || !(b >= 1.0)) throw ConfigError("eval.scales: scales must be >= 1");
  }
  return out;
}

std::string format_scales(const ScaleList& scales) {
  std::string out;
  for (const auto& [a, b] : scales) {
    if (!out.empty()) out += ",";
    out += a == b ? format_double(a) : format_double(a) + "x" + format_double(b);
  }
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  lookup(key).set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const { return lookup(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : fields()) out.push_back(entry.first);
    return out;
  }();
  return names;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file '" + path.string() + "' does not exist");
  }
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path.string());
  } catch (const CLI::Error& e) {
    throw ConfigError("config file '" + path.string() + "': " + e.what());
  }
  for (const auto& item : items) {
    // Section open / close markers.
    if (item.name == "++" || item.name == "--") continue;
    std::string value;
    for (const auto& in : item.inputs) value += (value.empty() ? "" : ",") + in;
    set(item.fullname(), value);
  }
}

std::string RunConfig::to_ini() const {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, field] : fields()) {
    auto dot = key.find('.');
    auto sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << field.get(*this) << "\n";
  }
  return out.str();
}

std::string RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_ini()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace avsr::cli
