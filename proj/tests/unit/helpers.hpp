#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dsp/config.hpp"
#include "dsp/frame.hpp"
#include "dsp/map_state.hpp"

namespace testutil {

// small seeded value generator for property checks
struct Gen {
  std::mt19937_64 eng;
  explicit Gen(std::uint64_t seed) : eng(seed) {}

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(eng); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(eng); }
  double normal(double s = 1.0) { return std::normal_distribution<double>(0.0, s)(eng); }
  bool coin() { return integer(0, 1) == 1; }

  Eigen::Vector3d in_box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    return {uniform(lo.x(), hi.x()), uniform(lo.y(), hi.y()), uniform(lo.z(), hi.z())};
  }
  Eigen::Vector3d unit() {
    Eigen::Vector3d v;
    do v = Eigen::Vector3d(normal(), normal(), normal());
    while (v.norm() < 1e-6);
    return v.normalized();
  }
};

// 4 x 4 x 2 m box with a few hundred particles per voxel at most
inline dsp::Config small_config() {
  dsp::Config c;
  c.map.map_size = {4, 4, 2};
  c.map.voxel_edge = 0.2;
  c.filter.L_max = 4e4;
  c.concurrent_velocity = false;
  return c;
}

inline dsp::Particle make_particle(const Eigen::Vector3d& p, const Eigen::Vector3d& v, double w,
                                   dsp::ParticleFlag flag = dsp::ParticleFlag::Survived) {
  dsp::Particle q;
  q.position = p.cast<float>();
  q.velocity = v.cast<float>();
  q.weight = w;
  q.flag = flag;
  return q;
}

inline dsp::Frame make_frame(double t, const std::vector<Eigen::Vector3d>& sensor_points,
                             const Eigen::Vector3d& position = Eigen::Vector3d::Zero()) {
  dsp::Frame f;
  f.timestamp = t;
  f.pose.position = position;
  for (const auto& p : sensor_points) f.points.push_back(p.cast<float>());
  return f;
}

inline std::string source_path(const std::string& rel) { return std::string(DSP_SOURCE_DIR) + "/" + rel; }

}  // namespace testutil
