#include "dsp/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "dsp/error.hpp"

namespace dsp {

SphericalCoord to_spherical(const Eigen::Vector3d& p) {
  SphericalCoord s;
  s.r = p.norm();
  if (s.r == 0.0) return s;
  double rho = std::hypot(p.x(), p.y());
  s.alpha = std::atan2(rho, p.z());
  if (rho == 0.0) return s;
  double b = std::atan2(p.y(), p.x());
  if (b < 0) b += 2 * kPi;
  if (b >= 2 * kPi || b == 0.0) b = 0.0;
  s.beta = b;
  return s;
}

Eigen::Vector3d to_cartesian(const SphericalCoord& s) {
  double sa = std::sin(s.alpha);
  return {s.r * sa * std::cos(s.beta), s.r * sa * std::sin(s.beta), s.r * std::cos(s.alpha)};
}

VoxelGrid::VoxelGrid(const Eigen::Vector3d& map_size, double edge) : edge_(edge) {
  for (int a = 0; a < 3; ++a) {
    n_[a] = static_cast<int>(voxels_per_axis(map_size[a], edge));
    size_[a] = n_[a] * edge;
  }
}

std::optional<std::uint32_t> VoxelGrid::index(const Eigen::Vector3d& p, const Eigen::Vector3d& center) const {
  std::int64_t i[3];
  for (int a = 0; a < 3; ++a) {
    double f = std::floor((p[a] - center[a] + 0.5 * size_[a]) / edge_);
    if (!(f >= 0.0 && f < n_[a])) return std::nullopt;
    i[a] = static_cast<std::int64_t>(f);
  }
  return static_cast<std::uint32_t>(i[0] + i[1] * n_[0] + i[2] * std::int64_t(n_[0]) * n_[1]);
}

Eigen::Vector3d VoxelGrid::voxel_center(std::uint32_t id, const Eigen::Vector3d& center) const {
  int ix = static_cast<int>(id % n_[0]);
  int iy = static_cast<int>((id / n_[0]) % n_[1]);
  int iz = static_cast<int>(id / (std::uint32_t(n_[0]) * n_[1]));
  return center - 0.5 * size_ + edge_ * Eigen::Vector3d(ix + 0.5, iy + 0.5, iz + 0.5);
}

PyramidGrid::PyramidGrid(double theta, double fov_h, double fov_v)
    : theta_(theta), fov_h_(fov_h), fov_v_(fov_v) {
  full_circle_ = fov_h >= 2 * kPi - 1e-9;
  if (full_circle_) fov_h_ = 2 * kPi;
  zenith_min_ = 0.5 * (kPi - fov_v);
  // a cell exists iff its center direction lies inside the field of view
  n_beta_ = std::max(1, static_cast<int>(std::floor(fov_h_ / theta + 0.5)));
  n_alpha_ = std::max(1, static_cast<int>(std::floor(fov_v_ / theta + 0.5)));
}

std::optional<int> PyramidGrid::index_sensor(const Eigen::Vector3d& p) const {
  double rho = std::hypot(p.x(), p.y());
  if (rho == 0.0 && p.z() == 0.0) return std::nullopt;
  double alpha = std::atan2(rho, p.z());
  if (alpha < zenith_min_ || alpha > zenith_min_ + fov_v_) return std::nullopt;
  double b;
  if (full_circle_) {
    b = rho == 0.0 ? 0.0 : std::atan2(p.y(), p.x());
    if (b < 0) b += 2 * kPi;
  } else {
    b = std::atan2(p.y(), p.x());
    if (b < -0.5 * fov_h_ || b > 0.5 * fov_h_) return std::nullopt;
    b += 0.5 * fov_h_;
  }
  int ib = std::clamp(static_cast<int>(std::floor(b / theta_)), 0, n_beta_ - 1);
  int ia = std::clamp(static_cast<int>(std::floor((alpha - zenith_min_) / theta_)), 0, n_alpha_ - 1);
  return ia * n_beta_ + ib;
}

std::vector<int> PyramidGrid::neighbors(int id, int n) const {
  std::vector<int> out;
  int ia = id / n_beta_;
  int ib = id % n_beta_;
  int a0 = std::max(0, ia - n), a1 = std::min(n_alpha_ - 1, ia + n);
  for (int a = a0; a <= a1; ++a) {
    if (full_circle_) {
      int width = std::min(2 * n + 1, n_beta_);
      for (int k = 0; k < width; ++k) {
        int b = ((ib - n + k) % n_beta_ + n_beta_) % n_beta_;
        out.push_back(a * n_beta_ + b);
      }
    } else {
      int b0 = std::max(0, ib - n), b1 = std::min(n_beta_ - 1, ib + n);
      for (int b = b0; b <= b1; ++b) out.push_back(a * n_beta_ + b);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

NeighborTable::NeighborTable(const PyramidGrid& grid, int n) {
  offsets.reserve(grid.count() + 1);
  offsets.push_back(0);
  for (int id = 0; id < grid.count(); ++id) {
    for (int j : grid.neighbors(id, n)) ids.push_back(static_cast<std::uint32_t>(j));
    offsets.push_back(static_cast<std::uint32_t>(ids.size()));
  }
}

double theta_prime_max(const MapConfig& cfg) {
  const double s = cfg.noise.sigma;
  const double c2 = std::pow(std::cos(0.5 * cfg.fov_v), 2);
  double log_arg, scale;
  if (cfg.noise.kind == NoiseModel::Kind::Constant) {
    log_arg = cfg.epsilon * std::pow(2 * kPi, 1.5) * s * s * s;
    scale = 2 * s * s / (cfg.robot_radius * cfg.robot_radius * c2);
  } else {
    double r3 = std::pow(cfg.robot_radius, 3);
    log_arg = cfg.epsilon * std::pow(2 * kPi, 1.5) * s * s * s * r3;
    scale = 2 * s * s / c2;
  }
  if (!(log_arg > 0)) throw InfeasibleError("activation bound: non-positive log argument");
  double arg = scale * std::log(1.0 / log_arg);
  if (arg < 0) arg = 0;  // peak density already below epsilon
  if (arg > 1)
    throw InfeasibleError("activation bound: square-root argument exceeds 1; increase r_min or reduce fov_v");
  return std::asin(std::sqrt(arg));
}

int activation_n_from(double theta_prime, double theta) {
  return std::max(0, static_cast<int>(std::ceil(theta_prime / theta - 1e-12)));
}

int effective_activation_n(const MapConfig& cfg) {
  if (cfg.activation_n > 0) return cfg.activation_n;
  return activation_n_from(theta_prime_max(cfg), cfg.pyramid_angle);
}

double lower_bound_distance(double r, double alpha, double theta_prime) {
  return r * std::sin(alpha) * std::sin(theta_prime);
}

double gaussian_density(double d2, double rho) {
  static const double k = std::pow(2 * kPi, -1.5);
  return k / (rho * rho * rho) * std::exp(-d2 / (2 * rho * rho));
}

}  // namespace dsp
