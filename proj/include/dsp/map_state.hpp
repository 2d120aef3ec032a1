#pragma once

#include <cstdint>
#include <vector>

#include "dsp/config.hpp"
#include "dsp/geometry.hpp"
#include "dsp/particle_store.hpp"

namespace dsp {

struct MapLayout {
  VoxelGrid voxels;
  PyramidGrid pyramids;
  NeighborTable neighbors;
  int activation_n = 1;
  std::size_t resample_cap = 1;       // L^V_max
  std::size_t slots_per_voxel = 1;    // L_s^V
  std::size_t pyramid_capacity = 1;   // L_s^A
  std::size_t point_bin_capacity = 1; // M_s^A

  static MapLayout from(const Config& cfg);
};

struct MapState {
  explicit MapState(const Config& cfg);

  Config cfg;
  MapLayout layout;
  VoxelArena arena;
  PyramidIndex index;
  std::vector<double> lambda_dyn;   // DST lambda_1 per voxel
  std::vector<double> voxel_mass;   // E per voxel after the fused pass
  std::vector<std::int32_t> slot_scratch;  // per slot: destination voxel or pyramid id

  Pose pose;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double time = 0;
  std::uint64_t frame = 0;
  double newborn_mass = 0;  // prior mass of live newborn-flagged particles
  std::size_t pruned = 0;   // particles that left the box in the last predict
  double last_dt = 0;

  void set_pose(const Pose& p) {
    pose = p;
    center = p.position;
  }
  std::size_t live() const { return arena.total_live(); }
  double total_weight() const;
};

}  // namespace dsp
