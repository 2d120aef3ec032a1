#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dsp {

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

struct NoiseModel {
  enum class Kind { Constant, Linear };
  Kind kind = Kind::Linear;
  double sigma = 0.01;  // meters for Constant, fraction of range for Linear

  double rho(double r) const { return kind == Kind::Constant ? sigma : sigma * r; }
};

struct MapConfig {
  Eigen::Vector3d map_size{10.0, 10.0, 6.0};
  double voxel_edge = 0.2;
  double pyramid_angle = deg2rad(3.0);
  double fov_h = deg2rad(90.0);
  double fov_v = deg2rad(60.0);
  double robot_radius = 0.15;
  double filter_resolution = 0.1;
  int activation_n = 0;  // 0 = derive from theta_prime_max
  NoiseModel noise;
  double epsilon = 0.01;
  double sensor_resolution = deg2rad(1.0);
  double eta_voxel = 3.0;
  double eta_pyramid = 3.0;
  double point_bin_factor = 2.0;  // headroom on theta^2/theta_snsr^2
  bool time_particles = false;
  int time_particles_per_voxel = 1;
};

struct FilterParams {
  double P_d = 0.9;
  double P_s = 0.98;
  double kappa = 0.01;
  double v_b = 0.0;  // <= 0: w_init per newborn
  int L_b = 20;
  double L_max = 1.6e6;
  double q_pos_std = 0.05;
  double q_vel_std = 0.1;
  double V_hat = 0.2;
  double sigma_vb = 0.5;
  double v_max = 5.0;
  double w_init = 1e-4;
  int dst_min_particles = 1;
  bool empty_pyramid_visible = false;
  bool future_noise = false;
};

struct VelocityParams {
  double cluster_dist = 0.0;  // <= 0: 2 * Res
  int min_cluster_size = 5;
  double w_count = 1.0;
  double ground_height_thresh = 0.2;
};

enum class MapMode { Dynamic, Random, Static };

std::string to_string(MapMode m);
MapMode parse_mode(const std::string& s);

struct Config {
  MapConfig map;
  FilterParams filter;
  VelocityParams velocity;
  MapMode mode = MapMode::Dynamic;
  std::uint64_t seed = 1;
  std::vector<double> output_resolutions{0.1, 0.2, 0.3};
  bool concurrent_velocity = true;
};

Config desk_profile();

// key=value text; unknown keys throw ConfigError with the line number
Config parse_config(const std::string& text, const Config& base = Config{});
Config load_config(const std::string& path, const Config& base = Config{});
void set_config_key(Config& cfg, const std::string& key, const std::string& value);
bool has_config_key(const std::string& key);
std::string dump_config(const Config& cfg, bool with_docs = true);

void validate(const Config& cfg);

// storage sizes derived from the budget
std::size_t voxels_per_axis(double size, double edge);

}  // namespace dsp
