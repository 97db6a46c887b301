#include "mcsplat/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mcsplat/loss.hpp"
#include "mcsplat/relocate.hpp"
#include "mcsplat/render.hpp"

namespace mcsplat {
namespace {

TrainResult run_loop(const SceneDataset& dataset, const TrainConfig& cfg, GaussianSet set,
                     OptimizerState opt, RngPool& rng, long start_iter) {
  MCSPLAT_CHECK(!dataset.views.empty(), "train: dataset has no views");
  for (const View& v : dataset.views) {
    MCSPLAT_CHECK(v.has_image, "train: view '" + v.name + "' has no reference image");
  }
  MCSPLAT_CHECK(set.capacity() >= cfg.max_gaussians, "train: set capacity below max_gaussians");

  LrSchedule sched = cfg.lr_schedule();
  if (cfg.scale_position_lr_by_extent) sched.position_scale = dataset.extent_radius;
  const NoiseParams noise = cfg.noise_params();
  const LossWeights weights = cfg.loss_weights();

  SubStream& views_stream = rng.stream("views");
  SubStream& noise_stream = rng.stream("noise");

  TrainResult res;
  res.completed_iters = start_iter;
  const auto t0 = std::chrono::steady_clock::now();

  // Pre-step snapshots back the non-finite-loss abort path.
  GaussianSet last_set = set;
  OptimizerState last_opt = opt;

  for (long iter = start_iter; iter < cfg.iters; ++iter) {
    const size_t view_idx = views_stream.uniform_below(dataset.views.size());
    const View& view = dataset.views[view_idx];

    RenderOutput out = render(set, view.camera);
    TotalLoss tl = loss_total(out.image, view.image, set, weights);
    if (!std::isfinite(tl.total)) {
      set = std::move(last_set);
      opt = std::move(last_opt);
      res.aborted = true;
      break;
    }
    last_set = set;
    last_opt = opt;

    Gradients grads = render_backward(set, view.camera, out, tl.d_render);
    for (int i = 0; i < set.count; ++i) {
      grads.raw_opacities[i] += tl.d_raw_opacity[i];
      grads.raw_scales[i] += tl.d_raw_scale[i];
    }
    sgld_step(set, grads, opt, sched, noise, noise_stream);

    const long done = iter + 1;
    if ((cfg.enable_relocation || cfg.enable_growth) && done > cfg.warmup_iters &&
        done % cfg.relocation_cadence == 0) {
      if (cfg.enable_relocation) {
        const LivenessMask mask = classify_liveness(set, cfg.live_threshold);
        RelocationPlan plan = build_plan(mask, set, rng.stream("relocate"));
        if (!plan.no_live_targets) apply_plan(set, opt, plan);
      }
      if (cfg.enable_growth) {
        grow_step(set, opt, cfg.max_gaussians, cfg.growth_rate, rng.stream("relocate"));
      }
    }

    res.completed_iters = done;
    if (done % cfg.log_every == 0 || done == cfg.iters) {
      MetricRow row;
      row.iteration = done;
      if (!cfg.deterministic) {
        row.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
      }
      row.loss_total = tl.total;
      row.loss_l1 = tl.l1;
      row.loss_dssim = tl.dssim;
      row.reg_opacity = tl.reg_opacity;
      row.reg_scale = tl.reg_scale;
      row.live_count = classify_liveness(set, cfg.live_threshold).live_count;
      row.psnr_train_view = psnr(out.image, view.image);
      res.log.push_back(row);
    }
  }

  res.set = std::move(set);
  res.opt = std::move(opt);
  return res;
}

}  // namespace

TrainResult train(const SceneDataset& dataset, const TrainConfig& cfg, RngPool& rng) {
  cfg.validate();
  GaussianSet set = initialize(dataset, cfg, rng.stream("init"));
  OptimizerState opt = OptimizerState::for_set(set);
  return run_loop(dataset, cfg, std::move(set), std::move(opt), rng, 0);
}

TrainResult train_resume(const SceneDataset& dataset, const TrainConfig& cfg,
                         const TrainState& state, RngPool& rng) {
  cfg.validate();
  MCSPLAT_CHECK(state.iteration <= cfg.iters, "train_resume: state is past requested iters");
  MCSPLAT_CHECK(state.opt.shapes_match(state.set), "train_resume: corrupt state");
  rng.restore_states(state.rng_states);
  return run_loop(dataset, cfg, state.set, state.opt, rng, state.iteration);
}

EvalReport evaluate(const GaussianSet& set, const SceneDataset& dataset) {
  EvalReport rep;
  for (const View& v : dataset.views) {
    if (!v.has_image) continue;
    const RenderOutput out = render(set, v.camera);
    EvalRow row;
    row.name = v.name;
    row.psnr = psnr(out.image, v.image);
    row.ssim = ssim(out.image, v.image);
    rep.rows.push_back(std::move(row));
  }
  for (const EvalRow& r : rep.rows) {
    rep.mean_psnr += r.psnr;
    rep.mean_ssim += r.ssim;
  }
  if (!rep.rows.empty()) {
    rep.mean_psnr /= static_cast<double>(rep.rows.size());
    rep.mean_ssim /= static_cast<double>(rep.rows.size());
  }
  return rep;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_failure("metrics: cannot write " + path);
  out << "iteration,wall_ms,loss_total,loss_l1,loss_dssim,reg_opacity,reg_scale,live_count,"
         "psnr_train_view\n";
  char buf[512];
  for (const MetricRow& r : log) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n",
                  r.iteration, r.wall_ms, r.loss_total, r.loss_l1, r.loss_dssim, r.reg_opacity,
                  r.reg_scale, r.live_count, r.psnr_train_view);
    out << buf;
  }
  if (!out) throw runtime_failure("metrics: write failed for " + path);
}

}  // namespace mcsplat
