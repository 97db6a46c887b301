#pragma once

#include "mcsplat/types.hpp"

namespace mcsplat {

enum class CameraMode { kPinhole3D, kIdentity2D };

// Pixel (px, py) samples the continuous plane at (px + 0.5, py + 0.5).
//
// kPinhole3D: x_cam = rotation * x_world + translation (world-to-camera),
// camera looks down +z, projection (fx*x/z + cx, fy*y/z + cy). Gaussians with
// depth <= near are culled.
//
// kIdentity2D: position (x, y) is already in pixel coordinates, the leading
// 2x2 block of the covariance is the footprint, depth is the source index.
struct Camera {
  CameraMode mode = CameraMode::kPinhole3D;
  int width = 0;
  int height = 0;
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double near = 0.01;

  static Camera identity2d(int w, int h) {
    Camera c;
    c.mode = CameraMode::kIdentity2D;
    c.width = w;
    c.height = h;
    return c;
  }

  static Camera pinhole(int w, int h, double fx_, double fy_, double cx_, double cy_,
                        const Mat3& rot, const Vec3& trans) {
    Camera c;
    c.mode = CameraMode::kPinhole3D;
    c.width = w;
    c.height = h;
    c.fx = fx_;
    c.fy = fy_;
    c.cx = cx_;
    c.cy = cy_;
    c.rotation = rot;
    c.translation = trans;
    c.validate();
    return c;
  }

  Vec3 center() const { return -rotation.transpose() * translation; }

  void validate() const {
    MCSPLAT_CHECK(width > 0 && height > 0, "Camera: nonpositive image size");
    if (mode == CameraMode::kPinhole3D) {
      MCSPLAT_CHECK(fx > 0 && fy > 0, "Camera: nonpositive focal length");
      MCSPLAT_CHECK((rotation * rotation.transpose() - Mat3::Identity()).norm() < 1e-9,
                    "Camera: rotation not orthonormal");
    }
  }
};

}  // namespace mcsplat
