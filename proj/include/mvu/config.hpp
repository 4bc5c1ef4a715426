#pragma once

#include "mvu/losses.hpp"
#include "mvu/model.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mvu {

struct TrainConfig {
  uint64_t seed = 1;
  int iterations = 3000;
  int n_source_train = 4;
  int n_source_eval = 8;
  int patches_per_batch = 113;  // 1017 rays, the 1024-pixel budget in whole patches
  int samples_per_ray = 48;
  double lr = 5e-4;
  bool stratified = true;
  int log_every = 25;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  LossConfig loss;
  ModelDims dims;

  void validate() const;
  // Applies "key=value" overrides (same keys as the config file).
  void set(const std::string& key, const std::string& value);

  std::string to_json() const;
  static TrainConfig from_json(const std::string& json_text);
};

// Plain-text config: one key=value per line, '#' comments, blank lines ignored.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);
void apply_config_file(TrainConfig& cfg, const std::string& path);

// FNV-1a hex digest used as the config hash in reports.
std::string fnv1a_hex(const std::string& text);

}  // namespace mvu
