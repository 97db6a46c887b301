#include "mcsplat/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mcsplat/render.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mcsplat {
namespace {

// GL camera axes (look down -z, y up) <-> CV axes (look down +z, y down):
// negate the second and third basis columns. Involution, exact in FP, so the
// manifest round trip preserves matrices bitwise.
Eigen::Matrix4d flip_gl_cv(Eigen::Matrix4d m) {
  m.col(1) = -m.col(1);
  m.col(2) = -m.col(2);
  return m;
}

Camera camera_from_c2w_gl(const Eigen::Matrix4d& c2w_gl, int w, int h, double angle_x) {
  const Eigen::Matrix4d cv = flip_gl_cv(c2w_gl);
  const Mat3 r_c2w = cv.block<3, 3>(0, 0);
  const Vec3 center = cv.block<3, 1>(0, 3);
  const Mat3 r = r_c2w.transpose();
  const double fx = 0.5 * w / std::tan(0.5 * angle_x);
  return Camera::pinhole(w, h, fx, fx, 0.5 * w, 0.5 * h, r, -r * center);
}

Eigen::Matrix4d c2w_gl_from_camera(const Camera& cam) {
  Eigen::Matrix4d cv = Eigen::Matrix4d::Identity();
  cv.block<3, 3>(0, 0) = cam.rotation.transpose();
  cv.block<3, 1>(0, 3) = cam.center();
  return flip_gl_cv(cv);
}

void finish_extent(SceneDataset& ds) {
  if (ds.views.empty() || ds.mode == CameraMode::kIdentity2D) return;
  Vec3 sum = Vec3::Zero();
  for (const View& v : ds.views) sum += v.camera.center();
  ds.centroid = sum / static_cast<double>(ds.views.size());
  double r = 0.0;
  for (const View& v : ds.views) r = std::max(r, (v.camera.center() - ds.centroid).norm());
  ds.extent_radius = r > 0.0 ? r : 1.0;
}

}  // namespace

SceneDataset load_scene(const std::string& path, const std::string& mode,
                        const std::string& point_cloud_ply, bool require_images) {
  MCSPLAT_CHECK(mode == "2d" || mode == "3d", "load_scene: mode must be 2d or 3d");
  SceneDataset ds;
  if (mode == "2d") {
    ds.mode = CameraMode::kIdentity2D;
    View v;
    v.image = read_png(path);
    v.has_image = true;
    v.name = fs::path(path).stem().string();
    v.camera = Camera::identity2d(v.image.width, v.image.height);
    ds.centroid = Vec3(0.5 * v.image.width, 0.5 * v.image.height, 0.0);
    ds.extent_radius = 0.5 * std::max(v.image.width, v.image.height);
    ds.views.push_back(std::move(v));
  } else {
    ds.mode = CameraMode::kPinhole3D;
    const fs::path dir(path);
    fs::path manifest = dir / "transforms.json";
    if (!fs::exists(manifest)) manifest = dir / "transforms_train.json";
    if (!fs::exists(manifest)) {
      throw runtime_failure("load_scene: no transforms manifest under " + path);
    }
    std::ifstream in(manifest);
    json j;
    try {
      in >> j;
      if (!j.contains("frames") || !j["frames"].is_array()) {
        throw runtime_failure("load_scene: manifest lacks a frames array");
      }
      const double global_angle = j.value("camera_angle_x", 0.0);
      const int manifest_w = j.value("w", 0);
      const int manifest_h = j.value("h", 0);
      for (const json& fr : j["frames"]) {
        const std::string file_path = fr.at("file_path").get<std::string>();
        const double angle = fr.value("camera_angle_x", global_angle);
        if (!(angle > 0.0 && angle < M_PI)) {
          throw runtime_failure("load_scene: bad camera_angle_x for " + file_path);
        }
        const json& tm = fr.at("transform_matrix");
        if (!tm.is_array() || tm.size() != 4) {
          throw runtime_failure("load_scene: transform_matrix must be 4x4 for " + file_path);
        }
        Eigen::Matrix4d m;
        for (int r = 0; r < 4; ++r) {
          const json& row = tm.at(r);
          if (!row.is_array() || row.size() != 4) {
            throw runtime_failure("load_scene: transform_matrix must be 4x4 for " + file_path);
          }
          for (int c = 0; c < 4; ++c) m(r, c) = row.at(c).get<double>();
        }
        fs::path img = dir / file_path;
        if (img.extension() != ".png") img += ".png";
        View v;
        v.name = img.stem().string();
        int w = 0, h = 0;
        if (fs::exists(img)) {
          v.image = read_png(img.string());
          v.has_image = true;
          w = v.image.width;
          h = v.image.height;
        } else if (require_images) {
          throw runtime_failure("load_scene: missing image " + img.string());
        } else if (manifest_w > 0 && manifest_h > 0) {
          w = manifest_w;
          h = manifest_h;
        } else {
          throw runtime_failure("load_scene: no image and no w/h in manifest for " + file_path);
        }
        v.camera = camera_from_c2w_gl(m, w, h, angle);
        ds.views.push_back(std::move(v));
      }
    } catch (const json::exception& e) {
      throw runtime_failure("load_scene: malformed manifest " + manifest.string() + ": " +
                            e.what());
    }
    finish_extent(ds);
  }
  if (!point_cloud_ply.empty()) {
    read_point_cloud_ply(point_cloud_ply, ds.cloud_positions, ds.cloud_colors);
  }
  return ds;
}

void write_scene(const std::string& dir, const std::vector<View>& views) {
  MCSPLAT_CHECK(!views.empty(), "write_scene: no views");
  MCSPLAT_CHECK(views[0].camera.mode == CameraMode::kPinhole3D,
                "write_scene: pinhole cameras only");
  fs::create_directories(dir);
  const Camera& c0 = views[0].camera;
  json j;
  j["camera_angle_x"] = 2.0 * std::atan(0.5 * c0.width / c0.fx);
  j["w"] = c0.width;
  j["h"] = c0.height;
  json frames = json::array();
  for (size_t i = 0; i < views.size(); ++i) {
    const std::string stem = "r_" + std::to_string(i);
    json fr;
    fr["file_path"] = "./" + stem;
    const Eigen::Matrix4d m = c2w_gl_from_camera(views[i].camera);
    json rows = json::array();
    for (int r = 0; r < 4; ++r) {
      rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
    }
    fr["transform_matrix"] = rows;
    frames.push_back(fr);
    if (views[i].has_image) {
      write_png((fs::path(dir) / (stem + ".png")).string(), views[i].image, 16);
    }
  }
  j["frames"] = frames;
  std::ofstream out(fs::path(dir) / "transforms.json", std::ios::binary);
  if (!out) throw runtime_failure("write_scene: cannot write manifest under " + dir);
  out << j.dump(2) << "\n";
}

// ---- point cloud PLY ----
namespace {

struct PlyProp {
  std::string type;
  std::string name;
};

size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32") {
    return 4;
  }
  if (t == "double" || t == "float64") return 8;
  throw runtime_failure("ply: unsupported property type " + t);
}

double ply_decode(const unsigned char* p, const std::string& t) {
  auto load = [&](auto v) {
    std::memcpy(&v, p, sizeof v);
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return load(int8_t{});
  if (t == "uchar" || t == "uint8") return load(uint8_t{});
  if (t == "short" || t == "int16") return load(int16_t{});
  if (t == "ushort" || t == "uint16") return load(uint16_t{});
  if (t == "int" || t == "int32") return load(int32_t{});
  if (t == "uint" || t == "uint32") return load(uint32_t{});
  if (t == "float" || t == "float32") return load(float{});
  return load(double{});
}

std::string header_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw runtime_failure("ply: truncated header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

void read_point_cloud_ply(const std::string& path, std::vector<Vec3>& positions,
                          std::vector<Vec3>& colors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw runtime_failure("ply: cannot open " + path);
  if (header_line(in) != "ply") throw runtime_failure("ply: missing magic in " + path);
  const std::string format = header_line(in);
  const bool ascii = format == "format ascii 1.0";
  if (!ascii && format != "format binary_little_endian 1.0") {
    throw runtime_failure("ply: unsupported format '" + format + "' in " + path);
  }

  long vertex_count = -1;
  std::vector<PlyProp> props;
  bool in_vertex = false;
  for (;;) {
    const std::string line = header_line(in);
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment" || word == "obj_info") continue;
    if (word == "element") {
      std::string name;
      long count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        vertex_count = count;
        in_vertex = true;
      } else {
        if (vertex_count < 0) {
          throw runtime_failure("ply: non-vertex element before vertex in " + path);
        }
        in_vertex = false;  // trailing elements are never read
      }
      continue;
    }
    if (word == "property") {
      if (!in_vertex) continue;
      PlyProp p;
      ls >> p.type;
      if (p.type == "list") throw runtime_failure("ply: list property on vertex in " + path);
      ls >> p.name;
      props.push_back(std::move(p));
      continue;
    }
    throw runtime_failure("ply: unrecognized header line '" + line + "' in " + path);
  }
  if (vertex_count < 0) throw runtime_failure("ply: no vertex element in " + path);

  auto find_prop = [&](const std::string& name) -> int {
    for (size_t i = 0; i < props.size(); ++i) {
      if (props[i].name == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int ix = find_prop("x"), iy = find_prop("y"), iz = find_prop("z");
  if (ix < 0 || iy < 0 || iz < 0) throw runtime_failure("ply: missing x/y/z in " + path);
  const int ir = find_prop("red"), ig = find_prop("green"), ib = find_prop("blue");
  const bool has_rgb = ir >= 0 && ig >= 0 && ib >= 0;
  auto color_scale = [&](int idx) {
    const std::string& t = props[idx].type;
    return (t == "uchar" || t == "uint8") ? 1.0 / 255.0 : 1.0;
  };

  positions.assign(vertex_count, Vec3::Zero());
  colors.assign(vertex_count, Vec3::Constant(0.5));
  if (ascii) {
    std::vector<double> vals(props.size());
    for (long v = 0; v < vertex_count; ++v) {
      for (size_t p = 0; p < props.size(); ++p) {
        if (!(in >> vals[p])) throw runtime_failure("ply: truncated vertex data in " + path);
      }
      positions[v] = Vec3(vals[ix], vals[iy], vals[iz]);
      if (has_rgb) {
        colors[v] = Vec3(vals[ir] * color_scale(ir), vals[ig] * color_scale(ig),
                         vals[ib] * color_scale(ib));
      }
    }
  } else {
    std::vector<size_t> offsets(props.size());
    size_t stride = 0;
    for (size_t p = 0; p < props.size(); ++p) {
      offsets[p] = stride;
      stride += ply_type_size(props[p].type);
    }
    std::vector<unsigned char> row(stride);
    for (long v = 0; v < vertex_count; ++v) {
      in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(stride));
      if (!in) throw runtime_failure("ply: truncated vertex data in " + path);
      auto at = [&](int idx) { return ply_decode(row.data() + offsets[idx], props[idx].type); };
      positions[v] = Vec3(at(ix), at(iy), at(iz));
      if (has_rgb) {
        colors[v] =
            Vec3(at(ir) * color_scale(ir), at(ig) * color_scale(ig), at(ib) * color_scale(ib));
      }
    }
  }
}

// ---- initialization ----

GaussianSet initialize(const SceneDataset& dataset, const TrainConfig& cfg, SubStream& rng) {
  cfg.validate();
  GaussianSet set(cfg.max_gaussians, cfg.sh_degree);
  set.count = cfg.init_count;
  set.planar = dataset.mode == CameraMode::kIdentity2D;
  const int n = cfg.init_count;
  const int cpc = set.coeffs_per_channel();

  if (cfg.init_mode == "random") {
    const double half = cfg.extent_multiplier * dataset.extent_radius;
    for (int i = 0; i < n; ++i) {
      const Vec3 u(rng.u01(), rng.u01(), rng.u01());
      Vec3 p = dataset.centroid + half * (2.0 * u - Vec3::Ones());
      if (set.planar) p.z() = 0.0;
      set.positions[i] = p;
    }
    for (int i = 0; i < n; ++i) {
      double* col = set.color_ptr(i);
      for (int c = 0; c < 3; ++c) col[c * cpc] = (rng.u01() - 0.5) / kSH0;
    }
  } else {
    if (!dataset.has_cloud()) {
      throw contract_error("initialize: point_cloud mode without a point cloud");
    }
    const int m = static_cast<int>(dataset.cloud_positions.size());
    std::vector<int> pick(n);
    if (m >= n) {
      for (int i = 0; i < n; ++i) {
        pick[i] = static_cast<int>((static_cast<long>(i) * m) / n);  // stride subsample
      }
    } else {
      for (int i = 0; i < m; ++i) pick[i] = i;
      for (int i = m; i < n; ++i) {
        pick[i] = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(m)));
      }
    }
    for (int i = 0; i < n; ++i) {
      Vec3 p = dataset.cloud_positions[pick[i]];
      if (set.planar) p.z() = 0.0;
      set.positions[i] = p;
      double* col = set.color_ptr(i);
      for (int c = 0; c < 3; ++c) col[c * cpc] = (dataset.cloud_colors[pick[i]][c] - 0.5) / kSH0;
    }
  }

  // Isotropic log-scale from the 3rd-nearest initialized neighbor (fewer when
  // the set is tiny); floor keeps log finite for duplicate points.
  for (int i = 0; i < n; ++i) {
    double d = 1.0;
    if (n > 1) {
      std::vector<double> d2;
      d2.reserve(n - 1);
      for (int j = 0; j < n; ++j) {
        if (j != i) d2.push_back((set.positions[i] - set.positions[j]).squaredNorm());
      }
      const size_t k = std::min<size_t>(2, d2.size() - 1);
      std::nth_element(d2.begin(), d2.begin() + k, d2.end());
      d = std::sqrt(d2[k]);
    }
    set.raw_scales[i] = Vec3::Constant(std::log(std::max(d, 1e-12)));
  }

  const double raw_o = logit(cfg.init_opacity);
  for (int i = 0; i < n; ++i) {
    set.raw_opacities[i] = raw_o;
    set.rotations[i] = Vec4(1, 0, 0, 0);
  }
  return set;
}

// ---- checkpoint PLY ----
namespace {

std::vector<std::string> checkpoint_props(int degree) {
  std::vector<std::string> p = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  const int rest = 3 * ((degree + 1) * (degree + 1) - 1);
  for (int i = 0; i < rest; ++i) p.push_back("f_rest_" + std::to_string(i));
  for (const char* s : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
                        "rot_3"}) {
    p.push_back(s);
  }
  return p;
}

}  // namespace

void save_checkpoint(const GaussianSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_failure("checkpoint: cannot write " + path);
  const auto props = checkpoint_props(set.sh_degree);
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << set.count << "\n";
  for (const std::string& p : props) out << "property float " << p << "\n";
  out << "end_header\n";

  const int cpc = set.coeffs_per_channel();
  std::vector<float> row(props.size());
  for (int i = 0; i < set.count; ++i) {
    size_t k = 0;
    for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(set.positions[i][a]);
    for (int a = 0; a < 3; ++a) row[k++] = 0.0f;  // normals, by convention
    const double* col = set.color_ptr(i);
    for (int c = 0; c < 3; ++c) row[k++] = static_cast<float>(col[c * cpc]);
    for (int c = 0; c < 3; ++c) {
      for (int j = 1; j < cpc; ++j) row[k++] = static_cast<float>(col[c * cpc + j]);
    }
    row[k++] = static_cast<float>(set.raw_opacities[i]);
    for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(set.raw_scales[i][a]);
    for (int a = 0; a < 4; ++a) row[k++] = static_cast<float>(set.rotations[i][a]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw runtime_failure("checkpoint: write failed for " + path);
}

GaussianSet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw runtime_failure("checkpoint: cannot open " + path);
  if (header_line(in) != "ply") throw runtime_failure("checkpoint: not a PLY file: " + path);
  if (header_line(in) != "format binary_little_endian 1.0") {
    throw runtime_failure("checkpoint: unsupported PLY format in " + path);
  }
  long count = -1;
  std::vector<std::string> names;
  for (;;) {
    const std::string line = header_line(in);
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment") continue;
    if (word == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex" || count < 0) {
        throw runtime_failure("checkpoint: unsupported element layout in " + path);
      }
      continue;
    }
    if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") {
        throw runtime_failure("checkpoint: unsupported property type '" + type + "' in " + path);
      }
      names.push_back(name);
      continue;
    }
    throw runtime_failure("checkpoint: unrecognized header line '" + line + "' in " + path);
  }
  if (count < 0) throw runtime_failure("checkpoint: missing vertex element in " + path);

  int degree = -1;
  for (int d = 0; d <= 3; ++d) {
    if (names == checkpoint_props(d)) {
      degree = d;
      break;
    }
  }
  if (degree < 0) throw runtime_failure("checkpoint: unsupported property layout in " + path);

  GaussianSet set(static_cast<int>(count), degree);
  set.count = static_cast<int>(count);
  const int cpc = set.coeffs_per_channel();
  std::vector<float> row(names.size());
  for (long i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw runtime_failure("checkpoint: truncated vertex data in " + path);
    size_t k = 0;
    for (int a = 0; a < 3; ++a) set.positions[i][a] = row[k++];
    k += 3;  // normals ignored
    double* col = set.color_ptr(static_cast<int>(i));
    for (int c = 0; c < 3; ++c) col[c * cpc] = row[k++];
    for (int c = 0; c < 3; ++c) {
      for (int j = 1; j < cpc; ++j) col[c * cpc + j] = row[k++];
    }
    set.raw_opacities[i] = row[k++];
    for (int a = 0; a < 3; ++a) set.raw_scales[i][a] = row[k++];
    for (int a = 0; a < 4; ++a) set.rotations[i][a] = row[k++];
  }
  return set;
}

// ---- train-state sidecar ----
namespace {

constexpr char kStateMagic[12] = {'M', 'C', 'S', 'P', 'L', 'A', 'T', 'S', 'T', 'A', 'T', 'E'};
constexpr uint32_t kStateVersion = 1;

template <typename T>
void wpod(std::ostream& o, const T& v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T rpod(std::istream& i, const std::string& path) {
  T v{};
  i.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!i) throw runtime_failure("train state: truncated file " + path);
  return v;
}

void warr(std::ostream& o, const double* p, size_t n) {
  o.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void rarr(std::istream& i, double* p, size_t n, const std::string& path) {
  i.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!i) throw runtime_failure("train state: truncated file " + path);
}

void wgroup(std::ostream& o, const AdamGroup& g, size_t dim, size_t n) {
  wpod<int64_t>(o, g.step_offset);
  warr(o, g.m.data(), dim * n);
  warr(o, g.v.data(), dim * n);
}

void rgroup(std::istream& i, AdamGroup& g, size_t dim, size_t n, const std::string& path) {
  g.step_offset = rpod<int64_t>(i, path);
  rarr(i, g.m.data(), dim * n, path);
  rarr(i, g.v.data(), dim * n, path);
}

}  // namespace

void save_train_state(const std::string& path, const GaussianSet& set, const OptimizerState& opt,
                      long iteration, const RngPool& rng) {
  MCSPLAT_CHECK(opt.shapes_match(set), "train state: optimizer shape mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_failure("train state: cannot write " + path);
  out.write(kStateMagic, sizeof kStateMagic);
  wpod<uint32_t>(out, kStateVersion);
  wpod<int64_t>(out, iteration);
  wpod<int32_t>(out, set.count);
  wpod<int32_t>(out, set.capacity());
  wpod<int32_t>(out, set.sh_degree);
  wpod<uint8_t>(out, set.planar ? 1 : 0);

  const size_t n = static_cast<size_t>(set.count);
  const size_t cpc = static_cast<size_t>(set.coeffs_per_channel());
  warr(out, reinterpret_cast<const double*>(set.positions.data()), 3 * n);
  warr(out, reinterpret_cast<const double*>(set.raw_scales.data()), 3 * n);
  warr(out, reinterpret_cast<const double*>(set.rotations.data()), 4 * n);
  warr(out, set.raw_opacities.data(), n);
  warr(out, set.colors.data(), 3 * cpc * n);

  wpod<int64_t>(out, opt.step);
  wgroup(out, opt.positions, 3, n);
  wgroup(out, opt.scales, 3, n);
  wgroup(out, opt.rotations, 4, n);
  wgroup(out, opt.opacities, 1, n);
  wgroup(out, opt.colors, 3 * cpc, n);

  wpod<uint64_t>(out, rng.master_seed());
  const auto states = rng.serialize_states();
  wpod<uint32_t>(out, static_cast<uint32_t>(states.size()));
  for (const auto& [name, st] : states) {
    wpod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    wpod<uint32_t>(out, static_cast<uint32_t>(st.size()));
    out.write(st.data(), static_cast<std::streamsize>(st.size()));
  }
  if (!out) throw runtime_failure("train state: write failed for " + path);
}

TrainState load_train_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw runtime_failure("train state: cannot open " + path);
  char magic[sizeof kStateMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kStateMagic, sizeof magic) != 0) {
    throw runtime_failure("train state: bad magic in " + path);
  }
  const uint32_t version = rpod<uint32_t>(in, path);
  if (version != kStateVersion) {
    throw runtime_failure("train state: unsupported version " + std::to_string(version) + " in " +
                          path);
  }
  TrainState ts;
  ts.iteration = static_cast<long>(rpod<int64_t>(in, path));
  const int32_t count = rpod<int32_t>(in, path);
  const int32_t capacity = rpod<int32_t>(in, path);
  const int32_t degree = rpod<int32_t>(in, path);
  const uint8_t planar = rpod<uint8_t>(in, path);
  if (count < 0 || capacity < count || degree < 0 || degree > 3) {
    throw runtime_failure("train state: corrupt dimensions in " + path);
  }
  ts.set = GaussianSet(capacity, degree);
  ts.set.count = count;
  ts.set.planar = planar != 0;

  const size_t n = static_cast<size_t>(count);
  const size_t cpc = static_cast<size_t>(ts.set.coeffs_per_channel());
  rarr(in, reinterpret_cast<double*>(ts.set.positions.data()), 3 * n, path);
  rarr(in, reinterpret_cast<double*>(ts.set.raw_scales.data()), 3 * n, path);
  rarr(in, reinterpret_cast<double*>(ts.set.rotations.data()), 4 * n, path);
  rarr(in, ts.set.raw_opacities.data(), n, path);
  rarr(in, ts.set.colors.data(), 3 * cpc * n, path);

  ts.opt = OptimizerState::for_set(ts.set);
  ts.opt.step = static_cast<long>(rpod<int64_t>(in, path));
  rgroup(in, ts.opt.positions, 3, n, path);
  rgroup(in, ts.opt.scales, 3, n, path);
  rgroup(in, ts.opt.rotations, 4, n, path);
  rgroup(in, ts.opt.opacities, 1, n, path);
  rgroup(in, ts.opt.colors, 3 * cpc, n, path);

  ts.master_seed = rpod<uint64_t>(in, path);
  const uint32_t n_streams = rpod<uint32_t>(in, path);
  for (uint32_t s = 0; s < n_streams; ++s) {
    const uint32_t name_len = rpod<uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t st_len = rpod<uint32_t>(in, path);
    std::string st(st_len, '\0');
    in.read(st.data(), st_len);
    if (!in) throw runtime_failure("train state: truncated file " + path);
    ts.rng_states[name] = st;
  }
  return ts;
}

}  // namespace mcsplat
