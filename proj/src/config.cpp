#include "dsp/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "dsp/error.hpp"

namespace dsp {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

int to_int(const std::string& key, const std::string& v) {
  double d = to_double(key, v);
  if (d != std::floor(d)) throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::string s = v;
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(to_double(key, tok));
  return out;
}

std::string fmt(double d) {
  std::ostringstream os;
  os << std::setprecision(10) << d;
  return os.str();
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

struct Key {
  const char* name;
  const char* doc;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

#define DSP_NUM(NAME, FIELD, DOC)                                                    \
  Key {                                                                              \
    NAME, DOC, [](const Config& c) { return fmt(c.FIELD); },                         \
        [](Config& c, const std::string& v) { c.FIELD = to_double(NAME, v); }        \
  }
#define DSP_INT(NAME, FIELD, DOC)                                                    \
  Key {                                                                              \
    NAME, DOC, [](const Config& c) { return std::to_string(c.FIELD); },              \
        [](Config& c, const std::string& v) { c.FIELD = to_int(NAME, v); }           \
  }
#define DSP_BOOL(NAME, FIELD, DOC)                                                   \
  Key {                                                                              \
    NAME, DOC, [](const Config& c) { return std::string(c.FIELD ? "true" : "false"); }, \
        [](Config& c, const std::string& v) { c.FIELD = to_bool(NAME, v); }          \
  }
#define DSP_DEG(NAME, FIELD, DOC)                                                    \
  Key {                                                                              \
    NAME, DOC, [](const Config& c) { return fmt(rad2deg(c.FIELD)); },                \
        [](Config& c, const std::string& v) { c.FIELD = deg2rad(to_double(NAME, v)); } \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"map_size", "map box edge lengths x,y,z (m)",
          [](const Config& c) {
            return fmt_list({c.map.map_size.x(), c.map.map_size.y(), c.map.map_size.z()});
          },
          [](Config& c, const std::string& v) {
            auto l = to_list("map_size", v);
            if (l.size() != 3) throw ConfigError("key 'map_size': expected three values");
            c.map.map_size = Eigen::Vector3d(l[0], l[1], l[2]);
          }},
      DSP_NUM("l", map.voxel_edge, "storage voxel edge (m)"),
      DSP_DEG("theta", map.pyramid_angle, "pyramid angle (deg), 180/theta must be an integer"),
      DSP_DEG("fov_h", map.fov_h, "horizontal field of view (deg)"),
      DSP_DEG("fov_v", map.fov_v, "vertical field of view (deg)"),
      DSP_NUM("r_min", map.robot_radius, "robot radius; nearer particles are not updated (m)"),
      DSP_NUM("Res", map.filter_resolution, "voxel filter resolution and query cube side (m)"),
      DSP_INT("activation_n", map.activation_n, "activation half-width in pyramids, 0 = derived"),
      Key{"noise_model", "range noise model: linear (sigma * r) or constant",
          [](const Config& c) {
            return std::string(c.map.noise.kind == NoiseModel::Kind::Linear ? "linear" : "constant");
          },
          [](Config& c, const std::string& v) {
            if (v == "linear")
              c.map.noise.kind = NoiseModel::Kind::Linear;
            else if (v == "constant")
              c.map.noise.kind = NoiseModel::Kind::Constant;
            else
              throw ConfigError("key 'noise_model': expected linear or constant");
          }},
      DSP_NUM("sigma", map.noise.sigma, "noise std: fraction of range (linear) or meters"),
      DSP_NUM("epsilon", map.epsilon, "likelihood threshold for the activation space"),
      DSP_DEG("theta_snsr", map.sensor_resolution, "sensor angular resolution (deg)"),
      DSP_NUM("eta1", map.eta_voxel, "voxel storage headroom factor"),
      DSP_NUM("eta2", map.eta_pyramid, "pyramid index headroom factor"),
      DSP_NUM("point_bin_factor", map.point_bin_factor, "headroom on points per pyramid"),
      DSP_BOOL("time_particles", map.time_particles, "enable unknown-space time particles"),
      DSP_INT("time_particles_per_voxel", map.time_particles_per_voxel, "time particles seeded per voxel"),
      DSP_NUM("P_d", filter.P_d, "detection probability"),
      DSP_NUM("P_s", filter.P_s, "survival probability"),
      DSP_NUM("kappa", filter.kappa, "clutter intensity"),
      DSP_NUM("v_b", filter.v_b, "newborn mass per frame, <= 0 gives w_init per newborn"),
      DSP_INT("L_b", filter.L_b, "newborn particles per measurement point"),
      DSP_NUM("L_max", filter.L_max, "global particle budget"),
      DSP_NUM("q_pos_std", filter.q_pos_std, "prediction position noise std per frame (m)"),
      DSP_NUM("q_vel_std", filter.q_vel_std, "prediction velocity noise std per frame (m/s)"),
      DSP_NUM("V_hat", filter.V_hat, "static/dynamic speed threshold (m/s)"),
      DSP_NUM("sigma_vb", filter.sigma_vb, "newborn velocity std around the estimate (m/s)"),
      DSP_NUM("v_max", filter.v_max, "max object speed (m/s)"),
      DSP_NUM("w_init", filter.w_init, "initial particle weight"),
      DSP_INT("dst_min_particles", filter.dst_min_particles, "live particles needed before voxel lambda is trusted"),
      DSP_BOOL("empty_pyramid_visible", filter.empty_pyramid_visible, "update particles in pyramids without points"),
      DSP_BOOL("future_noise", filter.future_noise, "inject process noise in future prediction"),
      DSP_NUM("cluster_dist", velocity.cluster_dist, "clustering distance, <= 0 gives 2 * Res (m)"),
      DSP_INT("min_cluster_size", velocity.min_cluster_size, "smallest kept cluster"),
      DSP_NUM("w_count", velocity.w_count, "point-count weight in the matching cost"),
      DSP_NUM("ground_height_thresh", velocity.ground_height_thresh, "ground segmentation height (m)"),
      Key{"mode", "dynamic, random or static",
          [](const Config& c) { return to_string(c.mode); },
          [](Config& c, const std::string& v) { c.mode = parse_mode(v); }},
      Key{"seed", "random seed",
          [](const Config& c) { return std::to_string(c.seed); },
          [](Config& c, const std::string& v) {
            try {
              c.seed = std::stoull(v);
            } catch (const std::exception&) {
              throw ConfigError("key 'seed': expected an unsigned integer");
            }
          }},
      Key{"output_resolutions", "grid resolutions written by map (m)",
          [](const Config& c) { return fmt_list(c.output_resolutions); },
          [](Config& c, const std::string& v) { c.output_resolutions = to_list("output_resolutions", v); }},
      DSP_BOOL("concurrent_velocity", concurrent_velocity, "run velocity estimation on its own thread"),
  };
  return table;
}

#undef DSP_NUM
#undef DSP_INT
#undef DSP_BOOL
#undef DSP_DEG

}  // namespace

std::string to_string(MapMode m) {
  switch (m) {
    case MapMode::Dynamic: return "dynamic";
    case MapMode::Random: return "random";
    case MapMode::Static: return "static";
  }
  return "dynamic";
}

MapMode parse_mode(const std::string& s) {
  if (s == "dynamic") return MapMode::Dynamic;
  if (s == "random") return MapMode::Random;
  if (s == "static") return MapMode::Static;
  throw ConfigError("unknown mode '" + s + "' (expected dynamic, random or static)");
}

Config desk_profile() {
  Config c;
  c.filter.L_max = 2e5;
  c.map.map_size = Eigen::Vector3d(8.0, 8.0, 3.0);
  return c;
}

bool has_config_key(const std::string& key) {
  for (const auto& k : keys())
    if (key == k.name) return true;
  return false;
}

void set_config_key(Config& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(cfg, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

Config parse_config(const std::string& text, const Config& base) {
  Config cfg = base;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_key(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

Config load_config(const std::string& path, const Config& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), base);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string dump_config(const Config& cfg, bool with_docs) {
  std::ostringstream os;
  for (const auto& k : keys()) {
    if (with_docs) os << "# " << k.doc << "\n";
    os << k.name << " = " << k.get(cfg) << "\n";
  }
  return os.str();
}

std::size_t voxels_per_axis(double size, double edge) {
  return static_cast<std::size_t>(std::ceil(size / edge - 1e-9));
}

void validate(const Config& cfg) {
  const auto& m = cfg.map;
  const auto& f = cfg.filter;
  auto fail = [](const std::string& s) { throw ConfigError(s); };
  if (!(m.map_size.minCoeff() > 0)) fail("map_size must be positive");
  if (!(m.voxel_edge > 0)) fail("l must be positive");
  if (!(m.pyramid_angle > 0)) fail("theta must be positive");
  double ratio = kPi / m.pyramid_angle;
  if (std::abs(ratio - std::round(ratio)) > 1e-6) fail("theta must divide 180 degrees");
  if (!(m.fov_v > 0 && m.fov_v < kPi)) fail("fov_v must lie in (0, 180)");
  if (!(m.fov_h > 0 && m.fov_h <= 2 * kPi + 1e-12)) fail("fov_h must lie in (0, 360]");
  if (!(m.robot_radius > 0)) fail("r_min must be positive");
  if (!(m.robot_radius < 0.5 * m.map_size.norm())) fail("r_min must be below half the map diagonal");
  if (!(m.filter_resolution > 0)) fail("Res must be positive");
  if (m.activation_n < 0) fail("activation_n must be >= 0");
  if (!(m.noise.sigma > 0)) fail("sigma must be positive");
  if (!(m.epsilon > 0)) fail("epsilon must be positive");
  if (!(m.sensor_resolution > 0)) fail("theta_snsr must be positive");
  if (!(m.eta_voxel >= 1 && m.eta_pyramid >= 1)) fail("eta1 and eta2 must be >= 1");
  if (m.time_particles_per_voxel < 1) fail("time_particles_per_voxel must be >= 1");
  if (!(f.P_d > 0 && f.P_d <= 1)) fail("P_d must lie in (0, 1]");
  if (!(f.P_s > 0 && f.P_s <= 1)) fail("P_s must lie in (0, 1]");
  if (!(f.kappa >= 0)) fail("kappa must be >= 0");
  if (f.L_b < 1) fail("L_b must be >= 1");
  if (!(f.L_max >= 1)) fail("L_max must be >= 1");
  if (!(f.q_pos_std >= 0 && f.q_vel_std >= 0)) fail("prediction noise must be >= 0");
  if (!(f.V_hat > 0)) fail("V_hat must be positive");
  if (!(f.sigma_vb >= 0)) fail("sigma_vb must be >= 0");
  if (!(f.v_max > 0)) fail("v_max must be positive");
  if (!(f.w_init > 0)) fail("w_init must be positive");
  if (cfg.velocity.min_cluster_size < 1) fail("min_cluster_size must be >= 1");
  for (double r : cfg.output_resolutions)
    if (!(r > 0)) fail("output_resolutions must be positive");
}

}  // namespace dsp
