#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "avsr/config.hpp"
#include "avsr/data.hpp"
#include "avsr/train.hpp"

namespace avsr::cli {

using ScaleList = std::vector<std::pair<double, double>>;

struct DataSettings {
  std::string root;
  // Write a synthetic dataset into `root` when it has no manifest yet.
  bool generate = false;
  std::int64_t train_clips = 2;
  std::int64_t val_clips = 1;
  SynthOptions synth;
};

struct EvalSettings {
  ScaleList scales{{2, 2}, {3, 3}, {4, 4}};
  DegradeMode degrade = DegradeMode::kBicubic;
  double noise_sigma = 0.0;
  bool precompute = true;
};

/// Everything a command needs, addressable as "section.key".
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataSettings data;
  EvalSettings eval;
  std::string run_dir = "runs";

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Applies every entry of a sectioned key = value file.
  void load_file(const std::filesystem::path& path);

  /// Canonical sectioned dump; reading it back reproduces the config.
  std::string to_ini() const;
  /// 16 hex digits of FNV-1a over to_ini().
  std::string hash() const;
};

ScaleList parse_scales(const std::string& text);
std::string format_scales(const ScaleList& scales);
std::string format_double(double value);

}  // namespace avsr::cli
