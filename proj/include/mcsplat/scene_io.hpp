#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcsplat/camera.hpp"
#include "mcsplat/config.hpp"
#include "mcsplat/gaussian_set.hpp"
#include "mcsplat/optimizer.hpp"
#include "mcsplat/rng.hpp"
#include "mcsplat/types.hpp"

namespace mcsplat {

// ---- PNG ----
// Decodes gray / gray+alpha / palette / RGB / RGBA at 8 or 16 bit into RGB
// doubles in [0,1]; other bit depths raise a descriptive runtime_failure.
Image read_png(const std::string& path);
// bit_depth must be 8 or 16; values are clamped to [0,1] and quantized.
void write_png(const std::string& path, const Image& img, int bit_depth = 8);

// ---- datasets ----
struct View {
  Camera camera;
  Image image;
  bool has_image = false;
  std::string name;
};

struct SceneDataset {
  std::vector<View> views;
  CameraMode mode = CameraMode::kIdentity2D;
  Vec3 centroid = Vec3::Zero();  // camera-center centroid (2d: image center)
  double extent_radius = 1.0;    // max center distance from centroid, > 0
  std::vector<Vec3> cloud_positions;
  std::vector<Vec3> cloud_colors;  // RGB in [0,1]

  bool has_cloud() const { return !cloud_positions.empty(); }
};

// mode "2d": path is one PNG -> a single identity-camera view whose extent is
// max(W,H)/2 about the image center. mode "3d": path is a directory holding a
// transforms manifest (camera_angle_x + per-frame camera-to-world matrices in
// the GL axis convention) plus PNG frames. require_images=false tolerates
// missing frame files (render-only workflows) as long as the manifest carries
// w/h. An optional PLY point cloud populates cloud_positions/colors.
SceneDataset load_scene(const std::string& path, const std::string& mode,
                        const std::string& point_cloud_ply = "", bool require_images = true);

// Writes dir/transforms.json plus one 16-bit PNG per view; inverse of the
// 3d branch of load_scene (manifest file_path entries carry no extension).
void write_scene(const std::string& dir, const std::vector<View>& views);

// Reads x/y/z (+ red/green/blue if present, uchar scaled by 1/255) from an
// ascii or binary little-endian PLY. Missing colors default to 0.5 gray.
void read_point_cloud_ply(const std::string& path, std::vector<Vec3>& positions,
                          std::vector<Vec3>& colors);

// ---- initialization ----
// Random mode: init_count positions uniform in the cube of half-width
// extent_multiplier * extent_radius about the centroid, colors uniform.
// Point-cloud mode: stride-subsampled (or padded by resampling) cloud entries.
// Opacity cfg.init_opacity, isotropic scale = 3rd-nearest-neighbor distance,
// identity rotations. Consumes the "init" stream per the documented order.
GaussianSet initialize(const SceneDataset& dataset, const TrainConfig& cfg, SubStream& rng);

// ---- checkpoints ----
// Binary little-endian PLY, 3DGS splat layout: x y z nx ny nz f_dc_0..2
// (f_rest_* channel-major when sh_degree > 0) opacity scale_0..2 rot_0..3,
// all float32, raw (pre-activation) values. Round trip is float32-exact.
void save_checkpoint(const GaussianSet& set, const std::string& path);
GaussianSet load_checkpoint(const std::string& path);

// Full-precision sidecar: parameters as doubles, optimizer moments, iteration
// counter, and RNG substream states — everything needed to resume bitwise.
struct TrainState {
  GaussianSet set;
  OptimizerState opt;
  long iteration = 0;
  unsigned long long master_seed = 0;
  std::map<std::string, std::string> rng_states;
};

void save_train_state(const std::string& path, const GaussianSet& set, const OptimizerState& opt,
                      long iteration, const RngPool& rng);
TrainState load_train_state(const std::string& path);

}  // namespace mcsplat
