#include "mcsplat/config.hpp"

#include <climits>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

#include "mcsplat/types.hpp"

namespace mcsplat {
namespace {

using Field = std::variant<std::string TrainConfig::*, double TrainConfig::*,
                           int TrainConfig::*, long TrainConfig::*,
                           bool TrainConfig::*, unsigned long long TrainConfig::*>;

struct KeyDesc {
  const char* name;
  Field field;
};

const std::vector<KeyDesc>& key_table() {
  static const std::vector<KeyDesc> table = {
      {"scene", &TrainConfig::scene},
      {"mode", &TrainConfig::mode},
      {"out", &TrainConfig::out},
      {"init_mode", &TrainConfig::init_mode},
      {"init_ply", &TrainConfig::init_ply},
      {"max_gaussians", &TrainConfig::max_gaussians},
      {"init_count", &TrainConfig::init_count},
      {"extent_multiplier", &TrainConfig::extent_multiplier},
      {"init_opacity", &TrainConfig::init_opacity},
      {"sh_degree", &TrainConfig::sh_degree},
      {"iters", &TrainConfig::iters},
      {"warmup_iters", &TrainConfig::warmup_iters},
      {"relocation_cadence", &TrainConfig::relocation_cadence},
      {"growth_rate", &TrainConfig::growth_rate},
      {"enable_relocation", &TrainConfig::enable_relocation},
      {"enable_growth", &TrainConfig::enable_growth},
      {"log_every", &TrainConfig::log_every},
      {"lambda_dssim", &TrainConfig::lambda_dssim},
      {"lambda_opacity", &TrainConfig::lambda_opacity},
      {"lambda_scale", &TrainConfig::lambda_scale},
      {"lambda_noise", &TrainConfig::lambda_noise},
      {"noise_k", &TrainConfig::noise_k},
      {"noise_t", &TrainConfig::noise_t},
      {"noise_printed_sign", &TrainConfig::noise_printed_sign},
      {"live_threshold", &TrainConfig::live_threshold},
      {"position_lr_init", &TrainConfig::position_lr_init},
      {"position_lr_final", &TrainConfig::position_lr_final},
      {"scale_position_lr_by_extent", &TrainConfig::scale_position_lr_by_extent},
      {"scale_lr", &TrainConfig::scale_lr},
      {"rotation_lr", &TrainConfig::rotation_lr},
      {"opacity_lr", &TrainConfig::opacity_lr},
      {"color_lr", &TrainConfig::color_lr},
      {"seed", &TrainConfig::seed},
      {"deterministic", &TrainConfig::deterministic},
  };
  return table;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw contract_error("config: bad boolean for '" + key + "': " + v);
}

template <typename T, typename Fn>
T parse_with(const std::string& v, const std::string& key, Fn fn) {
  size_t pos = 0;
  T out;
  try {
    out = fn(v, &pos);
  } catch (const std::exception&) {
    throw contract_error("config: bad value for '" + key + "': " + v);
  }
  if (pos != v.size()) throw contract_error("config: trailing junk for '" + key + "': " + v);
  return out;
}

void set_field(TrainConfig& cfg, const KeyDesc& kd, const std::string& value) {
  const std::string& key = kd.name;
  std::visit(
      [&](auto member) {
        using T = std::decay_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          cfg.*member = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          cfg.*member = parse_bool(value, key);
        } else if constexpr (std::is_same_v<T, double>) {
          cfg.*member = parse_with<double>(value, key, [](const std::string& s, size_t* p) {
            return std::stod(s, p);
          });
        } else if constexpr (std::is_same_v<T, int>) {
          cfg.*member = parse_with<int>(value, key, [](const std::string& s, size_t* p) {
            long long x = std::stoll(s, p);
            if (x < INT_MIN || x > INT_MAX) throw std::out_of_range("int");
            return static_cast<int>(x);
          });
        } else if constexpr (std::is_same_v<T, long>) {
          cfg.*member = parse_with<long>(value, key, [](const std::string& s, size_t* p) {
            return static_cast<long>(std::stoll(s, p));
          });
        } else {
          static_assert(std::is_same_v<T, unsigned long long>);
          cfg.*member = parse_with<unsigned long long>(
              value, key, [](const std::string& s, size_t* p) { return std::stoull(s, p); });
        }
      },
      kd.field);
}

std::string get_field(const TrainConfig& cfg, const KeyDesc& kd) {
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::decay_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return cfg.*member;
        } else if constexpr (std::is_same_v<T, bool>) {
          return (cfg.*member) ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), "%.17g", cfg.*member);
          return buf;
        } else {
          return std::to_string(cfg.*member);
        }
      },
      kd.field);
}

const KeyDesc& find_key(const std::string& key) {
  for (const KeyDesc& kd : key_table()) {
    if (key == kd.name) return kd;
  }
  throw contract_error("config: unknown key '" + key + "'");
}

}  // namespace

void TrainConfig::validate() const {
  MCSPLAT_CHECK(mode == "2d" || mode == "3d", "config: mode must be 2d or 3d");
  MCSPLAT_CHECK(init_mode == "random" || init_mode == "point_cloud",
                "config: init_mode must be random or point_cloud");
  MCSPLAT_CHECK(init_count >= 1, "config: init_count must be >= 1");
  MCSPLAT_CHECK(max_gaussians >= init_count, "config: max_gaussians must be >= init_count");
  MCSPLAT_CHECK(extent_multiplier > 0.0, "config: extent_multiplier must be > 0");
  MCSPLAT_CHECK(init_opacity > 0.0 && init_opacity < 1.0, "config: init_opacity must be in (0,1)");
  MCSPLAT_CHECK(sh_degree >= 0 && sh_degree <= 3, "config: sh_degree must be in [0,3]");
  MCSPLAT_CHECK(iters >= 0, "config: iters must be >= 0");
  MCSPLAT_CHECK(warmup_iters >= 0, "config: warmup_iters must be >= 0");
  MCSPLAT_CHECK(relocation_cadence >= 1, "config: relocation_cadence must be >= 1");
  MCSPLAT_CHECK(growth_rate >= 0.0, "config: growth_rate must be >= 0");
  MCSPLAT_CHECK(log_every >= 1, "config: log_every must be >= 1");
  MCSPLAT_CHECK(lambda_dssim >= 0.0 && lambda_dssim <= 1.0,
                "config: lambda_dssim must be in [0,1]");
  MCSPLAT_CHECK(lambda_opacity >= 0.0, "config: lambda_opacity must be >= 0");
  MCSPLAT_CHECK(lambda_scale >= 0.0, "config: lambda_scale must be >= 0");
  MCSPLAT_CHECK(lambda_noise >= 0.0, "config: lambda_noise must be >= 0");
  MCSPLAT_CHECK(noise_t > 0.0 && noise_t < 1.0, "config: noise_t must be in (0,1)");
  MCSPLAT_CHECK(live_threshold > 0.0 && live_threshold < 1.0,
                "config: live_threshold must be in (0,1)");
  MCSPLAT_CHECK(position_lr_init > 0.0 && position_lr_final > 0.0,
                "config: position lrs must be > 0");
  MCSPLAT_CHECK(scale_lr >= 0.0 && rotation_lr >= 0.0 && opacity_lr >= 0.0 && color_lr >= 0.0,
                "config: group lrs must be >= 0");
}

LossWeights TrainConfig::loss_weights() const {
  LossWeights w;
  w.dssim = lambda_dssim;
  w.opacity = lambda_opacity;
  w.scale = lambda_scale;
  return w;
}

NoiseParams TrainConfig::noise_params() const {
  NoiseParams p;
  p.lambda = lambda_noise;
  p.k = noise_k;
  p.t = noise_t;
  p.printed_sign = noise_printed_sign;
  return p;
}

LrSchedule TrainConfig::lr_schedule() const {
  LrSchedule s;
  s.position_initial = position_lr_init;
  s.position_final = position_lr_final;
  s.total_steps = iters;
  s.position_scale = 1.0;
  s.scale_rate = scale_lr;
  s.rotation_rate = rotation_lr;
  s.opacity_rate = opacity_lr;
  s.color_rate = color_lr;
  return s;
}

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw contract_error("config: line " + std::to_string(lineno) + " is not key=value: " + t);
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    set_field(cfg, find_key(key), value);
  }
  return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw runtime_failure("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream out;
  for (const KeyDesc& kd : key_table()) {
    out << kd.name << " = " << get_field(cfg, kd) << "\n";
  }
  return out.str();
}

void write_config_file(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_failure("config: cannot write " + path);
  out << serialize_config(cfg);
}

void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
  set_field(cfg, find_key(key), value);
}

}  // namespace mcsplat
