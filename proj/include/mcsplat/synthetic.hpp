#pragma once

#include "mcsplat/camera.hpp"
#include "mcsplat/gaussian_set.hpp"
#include "mcsplat/rng.hpp"
#include "mcsplat/types.hpp"

namespace mcsplat {

// Deterministic synthetic inputs for tests, verification sweeps, and demos.

// Random well-conditioned Gaussians. identity2D: means cover [0,w]x[0,h]
// (z = 0, planar), footprints 0.5-4 px. pinhole3D: means in a unit-ish cloud
// around the origin, scales 0.05-0.3. Colors keep channels within [0,1] so
// compositing bounds stay tight; degree > 0 adds small directional terms.
GaussianSet random_scene(int count, int degree, CameraMode mode, int width, int height,
                         SubStream& rng);

// Camera on a random orbit of radius ~4 looking at the origin.
Camera random_pinhole(int width, int height, SubStream& rng);

// Smooth deterministic multi-frequency target (closed form, no assets):
// mixed sinusoids plus a radial falloff, channels decorrelated.
Image test_image(int width, int height);

}  // namespace mcsplat
