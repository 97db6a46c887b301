#pragma once

#include <string>
#include <vector>

#include "mcsplat/config.hpp"
#include "mcsplat/gaussian_set.hpp"
#include "mcsplat/optimizer.hpp"
#include "mcsplat/rng.hpp"
#include "mcsplat/scene_io.hpp"

namespace mcsplat {

struct MetricRow {
  long iteration = 0;
  double wall_ms = 0.0;  // cumulative; pinned to 0 in deterministic mode
  double loss_total = 0.0;
  double loss_l1 = 0.0;
  double loss_dssim = 0.0;
  double reg_opacity = 0.0;
  double reg_scale = 0.0;
  int live_count = 0;
  double psnr_train_view = 0.0;  // pre-step render of the sampled view
};

struct TrainResult {
  GaussianSet set;
  OptimizerState opt;
  std::vector<MetricRow> log;
  long completed_iters = 0;
  bool aborted = false;  // non-finite loss; set/opt hold the last good state
};

// Per iteration: sample one view uniformly ("views" stream), render, total
// loss, backward, sgld_step; every relocation_cadence iterations after warmup
// relocate dead Gaussians onto live targets, then grow toward the cap. Logs a
// metric row every log_every iterations plus the final one. A non-finite loss
// aborts, returning the parameters from before the offending step.
TrainResult train(const SceneDataset& dataset, const TrainConfig& cfg, RngPool& rng);

// Continues a persisted run; rng must be seeded with the state's master seed
// and is overwritten with the saved substream states. Bitwise-matches the
// uninterrupted run.
TrainResult train_resume(const SceneDataset& dataset, const TrainConfig& cfg,
                         const TrainState& state, RngPool& rng);

struct EvalRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

// Renders every view that has a reference image; empty input -> empty report.
EvalReport evaluate(const GaussianSet& set, const SceneDataset& dataset);

// Schema: iteration,wall_ms,loss_total,loss_l1,loss_dssim,reg_opacity,
// reg_scale,live_count,psnr_train_view. Doubles printed with %.17g.
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& log);

}  // namespace mcsplat
