#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scfnet/model.hpp"

namespace scfnet {

struct TrainConfig {
  double lr0 = 1e-4;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  int epochs = 12;
  int batch = 2;
  int resize_height = 64;
  int resize_width = 64;
  double augment_fraction = 0.25;
  std::vector<int> quality_levels{15, 23, 30};
  std::uint64_t seed = 0;
  // lr = lr0 * lr_decay_factor^floor(epoch / lr_decay_every); 0 disables decay.
  int lr_decay_every = 2;
  double lr_decay_factor = 0.5;
  // Stop after this many optimizer steps in total; 0 means no cap.
  std::uint64_t max_steps = 0;
  // Score the validation set at the end of every epoch.
  bool validate = true;

  // Randomly initialised desk-scale network: the small learning rate of the
  // pretrained setup barely moves it, so desk runs use a larger constant rate.
  static TrainConfig desk();
  static TrainConfig full_scale();
  void validate_or_throw() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Text config format: one `key = value` per line, `#` starts a comment,
/// blank lines ignored. Lists are comma separated, sizes are `HxW`.
/// Keys are unique; unknown keys are errors.
struct ConfigEntry {
  std::string key, value;
  int line = 0;
};

class ConfigText {
 public:
  static ConfigText parse(const std::string& text, const std::string& source = "<config>");
  static ConfigText read(const std::filesystem::path& path);

  // Overwrites keys of this file with the keys of `other`.
  void merge(const ConfigText& other);

  // Applies and removes every key the target understands.
  void apply_to(ModelConfig& cfg);
  void apply_to(TrainConfig& cfg);
  // Throws ConfigError naming the first key nobody consumed.
  void expect_consumed() const;

  const std::vector<ConfigEntry>& entries() const { return entries_; }

 private:
  std::vector<ConfigEntry> entries_;
  std::string source_;
};

std::string to_config_text(const ModelConfig& cfg);
std::string to_config_text(const TrainConfig& cfg);

// Strict single-target parsers: any key the target does not know is an error.
ModelConfig parse_model_config(const std::string& text);
TrainConfig parse_train_config(const std::string& text);

std::string format_double(double v);

}  // namespace scfnet
