#include "dsp/map_state.hpp"

#include <algorithm>
#include <cmath>

namespace dsp {

MapLayout MapLayout::from(const Config& cfg) {
  validate(cfg);
  const auto& m = cfg.map;
  MapLayout l;
  l.voxels = VoxelGrid(m.map_size, m.voxel_edge);
  l.pyramids = PyramidGrid(m.pyramid_angle, m.fov_h, m.fov_v);
  l.activation_n = effective_activation_n(m);
  l.neighbors = NeighborTable(l.pyramids, l.activation_n);

  double per_voxel = cfg.filter.L_max / double(l.voxels.count());
  l.resample_cap = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(per_voxel)));
  l.slots_per_voxel = static_cast<std::size_t>(std::ceil(m.eta_voxel * l.resample_cap));
  if (m.time_particles) l.slots_per_voxel += m.time_particles_per_voxel;

  double t2 = m.pyramid_angle * m.pyramid_angle;
  l.pyramid_capacity = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(m.eta_pyramid * cfg.filter.L_max * t2 / (2 * kPi * kPi))));
  double s2 = m.sensor_resolution * m.sensor_resolution;
  l.point_bin_capacity = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(m.point_bin_factor * t2 / s2)));
  return l;
}

MapState::MapState(const Config& c)
    : cfg(c),
      layout(MapLayout::from(c)),
      arena(layout.voxels.count(), layout.slots_per_voxel),
      index(layout.pyramids.count(), layout.pyramid_capacity),
      lambda_dyn(layout.voxels.count(), 0.5),
      voxel_mass(layout.voxels.count(), 0.0),
      slot_scratch(layout.voxels.count() * layout.slots_per_voxel, -1) {}

double MapState::total_weight() const {
  double s = 0;
  for (std::uint32_t v = 0; v < arena.num_voxels(); ++v) {
    if (!arena.live_count(v)) continue;
    const Particle* p = arena.voxel_slots(v);
    for (std::size_t i = 0; i < arena.slots_per_voxel(); ++i)
      if (p[i].flag != ParticleFlag::Vacant) s += p[i].weight;
  }
  return s;
}

}  // namespace dsp
