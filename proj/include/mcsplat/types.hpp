#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// Contract violations (bad arguments, broken preconditions) throw this.
struct contract_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Recoverable runtime failures (I/O, format, numerical degeneracy).
struct runtime_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define MCSPLAT_CHECK(cond, msg) \
  do { \
    if (!(cond)) throw ::mcsplat::contract_error(msg); \
  } while (0)

// Row-major interleaved RGB image, values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // height * width * 3

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}

  double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  size_t pixels() const { return static_cast<size_t>(width) * height; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

}  // namespace mcsplat
