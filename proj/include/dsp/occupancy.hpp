#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dsp/error.hpp"
#include "dsp/map_state.hpp"

namespace dsp {

class OutsideMap : public Error {
 public:
  using Error::Error;
};

// query grid snapped to the world lattice of edge l_q, covering the map box around center
struct GridLattice {
  double edge = 0.1;
  Eigen::Matrix<std::int64_t, 3, 1> origin = Eigen::Matrix<std::int64_t, 3, 1>::Zero();  // in cells
  Eigen::Vector3i dims = Eigen::Vector3i::Zero();

  static GridLattice around(const Eigen::Vector3d& center, const Eigen::Vector3d& map_size, double edge);
  std::size_t count() const { return std::size_t(dims.x()) * dims.y() * dims.z(); }
  Eigen::Vector3d min_corner() const { return origin.cast<double>() * edge; }
  Eigen::Vector3d cell_center(std::size_t id) const;
  std::optional<std::size_t> cell_of(const Eigen::Vector3d& p) const;
  std::size_t id(int ix, int iy, int iz) const { return ix + std::size_t(dims.x()) * (iy + std::size_t(dims.y()) * iz); }
  bool operator==(const GridLattice& o) const {
    return edge == o.edge && origin == o.origin && dims == o.dims;
  }
};

struct OccupancyGrid {
  GridLattice lattice;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double timestamp = 0;
  std::vector<float> prob;
  std::vector<std::uint8_t> observed;  // optional, empty when absent
};

double occupancy_voxel(double mass, double l_q, double l_prime);

double occupancy_at(const MapState& s, const Eigen::Vector3d& p);
double mass_in_cube(const MapState& s, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

OccupancyGrid occupancy_grid(const MapState& s, double l_q);
OccupancyGrid predict_occupancy(const MapState& s, double tau, double l_q);

std::vector<std::uint8_t> binarize(const OccupancyGrid& g, double threshold);

// nullopt when time particles are disabled; 1 = unknown
std::optional<std::vector<std::uint8_t>> unknown_mask(const MapState& s, double l_q);

// little-endian: "DSPG", u32 version, f64 center xyz, f64 l_q, i64 origin xyz, u32 dims xyz, f64 timestamp,
// u8 has_observed, f32 prob[count], then observed bytes when present
void write_grid(const std::string& path, const OccupancyGrid& g);
OccupancyGrid read_grid(const std::string& path);
// horizontal slice as binary PGM, 255 = probability 1
void write_pgm_slice(const std::string& path, const OccupancyGrid& g, double z);

}  // namespace dsp
