#pragma once

#include <string>

#include "mcsplat/loss.hpp"
#include "mcsplat/optimizer.hpp"

namespace mcsplat {

// Full training configuration. Persisted as a flat key=value text document;
// parse/serialize round-trip exactly (doubles printed with %.17g).
struct TrainConfig {
  // Scene and output plumbing.
  std::string scene;          // image path (2d) or dataset directory (3d)
  std::string mode = "2d";    // "2d" | "3d"
  std::string out = "out";    // output directory
  std::string init_mode = "random";  // "random" | "point_cloud"
  std::string init_ply;       // optional point cloud for point_cloud init

  // Capacity and initialization.
  int max_gaussians = 512;
  int init_count = 256;
  double extent_multiplier = 3.0;
  double init_opacity = 0.1;
  int sh_degree = 0;

  // Loop schedule.
  long iters = 2000;
  long warmup_iters = 500;
  long relocation_cadence = 100;
  double growth_rate = 0.05;
  bool enable_relocation = true;
  bool enable_growth = true;
  long log_every = 50;

  // Loss weights.
  double lambda_dssim = 0.2;
  double lambda_opacity = 0.01;
  double lambda_scale = 0.01;

  // Position-noise term.
  double lambda_noise = 5e5;
  double noise_k = 100.0;
  double noise_t = 0.005;
  bool noise_printed_sign = false;
  double live_threshold = 0.005;

  // Learning rates.
  double position_lr_init = 1.6e-4;
  double position_lr_final = 1.6e-6;
  bool scale_position_lr_by_extent = true;
  double scale_lr = 5e-3;
  double rotation_lr = 1e-3;
  double opacity_lr = 5e-2;
  double color_lr = 2.5e-3;

  // Reproducibility.
  unsigned long long seed = 0;
  bool deterministic = false;

  // Throws contract_error on violated invariants.
  void validate() const;

  LossWeights loss_weights() const;
  NoiseParams noise_params() const;
  // position_scale left at 1; the trainer rescales by scene extent.
  LrSchedule lr_schedule() const;

  bool operator==(const TrainConfig&) const = default;
};

// Parses a flat key=value document ('#' comments, blank lines allowed).
// Unknown keys and malformed values throw contract_error.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);

// Emits every key in a fixed order; parse(serialize(c)) == c.
std::string serialize_config(const TrainConfig& cfg);
void write_config_file(const TrainConfig& cfg, const std::string& path);

// Sets one key from its text form (same syntax as the file); used for
// flag-over-file precedence. Throws contract_error on unknown key.
void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);

}  // namespace mcsplat
