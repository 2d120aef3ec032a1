#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dsp/config.hpp"

namespace dsp {

struct SphericalCoord {
  double r = 0;
  double alpha = 0;  // zenith, [0, pi]
  double beta = 0;   // azimuth, [0, 2pi)
};

SphericalCoord to_spherical(const Eigen::Vector3d& p);
Eigen::Vector3d to_cartesian(const SphericalCoord& s);

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();  // sensor -> world

  Eigen::Vector3d to_world(const Eigen::Vector3d& p_sensor) const {
    return orientation * p_sensor + position;
  }
  Eigen::Vector3d to_sensor(const Eigen::Vector3d& p_world) const {
    return orientation.conjugate() * (p_world - position);
  }
};

// storage voxel lattice of the egocentric box; edges rounded up to voxel multiples
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(const Eigen::Vector3d& map_size, double edge);

  std::optional<std::uint32_t> index(const Eigen::Vector3d& p, const Eigen::Vector3d& center) const;
  Eigen::Vector3d voxel_center(std::uint32_t id, const Eigen::Vector3d& center) const;
  bool contains(const Eigen::Vector3d& p, const Eigen::Vector3d& center) const {
    return index(p, center).has_value();
  }

  int nx() const { return n_[0]; }
  int ny() const { return n_[1]; }
  int nz() const { return n_[2]; }
  std::size_t count() const { return static_cast<std::size_t>(n_[0]) * n_[1] * n_[2]; }
  double edge() const { return edge_; }
  const Eigen::Vector3d& size() const { return size_; }

 private:
  int n_[3] = {0, 0, 0};
  double edge_ = 1;
  Eigen::Vector3d size_ = Eigen::Vector3d::Zero();
};

// (zenith, azimuth) cells of side theta over the sensor field of view
class PyramidGrid {
 public:
  PyramidGrid() = default;
  PyramidGrid(double theta, double fov_h, double fov_v);

  std::optional<int> index_sensor(const Eigen::Vector3d& p_sensor) const;
  std::optional<int> index(const Eigen::Vector3d& p_world, const Pose& pose) const {
    return index_sensor(pose.to_sensor(p_world));
  }
  std::vector<int> neighbors(int id, int n) const;

  int n_azimuth() const { return n_beta_; }
  int n_zenith() const { return n_alpha_; }
  int count() const { return n_beta_ * n_alpha_; }
  bool full_circle() const { return full_circle_; }
  double theta() const { return theta_; }

 private:
  double theta_ = 1;
  double fov_h_ = 0;
  double fov_v_ = 0;
  double zenith_min_ = 0;
  int n_beta_ = 0;
  int n_alpha_ = 0;
  bool full_circle_ = false;
};

// flat neighbor table for a fixed n
struct NeighborTable {
  std::vector<std::uint32_t> offsets;  // count + 1
  std::vector<std::uint32_t> ids;

  NeighborTable() = default;
  NeighborTable(const PyramidGrid& grid, int n);
  std::size_t size(int id) const { return offsets[id + 1] - offsets[id]; }
  const std::uint32_t* begin(int id) const { return ids.data() + offsets[id]; }
  const std::uint32_t* end(int id) const { return ids.data() + offsets[id + 1]; }
};

// throws InfeasibleError when the closed form has no real solution
double theta_prime_max(const MapConfig& cfg);
int activation_n_from(double theta_prime, double theta);
int effective_activation_n(const MapConfig& cfg);

double lower_bound_distance(double r, double alpha, double theta_prime);

// isotropic 3-D Gaussian density with std rho at squared distance d2
double gaussian_density(double d2, double rho);

}  // namespace dsp
