#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aren/degrade.hpp"
#include "aren/model.hpp"

namespace aren {

// One run's settings: flat `key = value` text under [model]/[data]/[train]/
// [task]/[output] sections. CLI flags override file values; the effective
// config is written to the output dir and re-running from that file
// reproduces the run.
struct RunConfig {
  // [model]
  int64_t levels = 1;
  bool attention = true;
  int64_t width = 48;
  int64_t latent_dim = 64;
  int64_t codebook_size = 64;
  int64_t attention_max_pixels = 4096;
  bool mask_input = false;  // 4th input channel; forced on by the mask task

  // [data]
  std::string data_dir;
  int64_t resolution = 32;
  double split = 0.8;
  uint64_t seed = 0;

  // [train]
  int64_t epochs = 50;
  int64_t batch_size = 16;
  double lr = 1e-4;
  double beta = 0.25;
  double adv_weight = 0.1;

  // [task]
  std::string task = "none";  // none | mask | noise | blur
  double mask_fraction = 0.5;
  double noise_sigma = 0.3;
  double blur_sigma_x = 1.0;
  double blur_sigma_y = 5.0;
  int64_t blur_kx = 3;
  int64_t blur_ky = 15;

  // [output]
  std::string output_dir = "out";

  ModelConfig model_config() const;
  DegradeSpec degrade_spec(uint64_t degrade_seed) const;
};

// Mutable training progress carried inside checkpoints as a [state] section.
struct TrainState {
  uint64_t rng_state = 0;
  int64_t epoch = 0;
  int64_t gen_steps = 0;
  int64_t disc_steps = 0;
  double sigma_data = 0.0;
};

struct ConfigParse {
  RunConfig cfg;
  TrainState state;
  bool has_state = false;
  std::vector<std::string> errors;  // unknown keys, bad values, syntax
};

ConfigParse parse_config_text(const std::string& text);
ConfigParse parse_config_file(const std::string& path);

// Applies one `section.key=value` pair, appending a message on failure.
void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value,
                    std::vector<std::string>& errors);

// Every problem listed, not just the first. need_data adds checks that only
// matter when a dataset directory will be read.
std::vector<std::string> validate_config(const RunConfig& cfg, bool need_data);

// Effective config text. Checkpoints embed it without [output] and with the
// [state] section appended.
std::string serialize_config(const RunConfig& cfg, bool include_output = true);
std::string serialize_config_with_state(const RunConfig& cfg, const TrainState& state);

// Derived RNG stream tags off RunConfig::seed.
inline constexpr uint64_t kModelInitStream = 3;
inline constexpr uint64_t kDegradeStream = 4;

}  // namespace aren
