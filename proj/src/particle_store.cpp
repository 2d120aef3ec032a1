#include "dsp/particle_store.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>

namespace dsp {

VoxelArena::VoxelArena(std::size_t num_voxels, std::size_t slots_per_voxel)
    : slots_(num_voxels * slots_per_voxel), counts_(num_voxels, 0), hint_(num_voxels, 0),
      per_voxel_(slots_per_voxel) {}

std::optional<SlotRef> VoxelArena::add(std::uint32_t voxel, const Particle& p) {
  if (counts_[voxel] >= per_voxel_) {
    ++dropped_count;
    dropped_weight += p.weight;
    return std::nullopt;
  }
  Particle* s = voxel_slots(voxel);
  std::uint32_t i = hint_[voxel];
  while (s[i].flag != ParticleFlag::Vacant) ++i;
  s[i] = p;
  if (s[i].flag == ParticleFlag::Vacant) s[i].flag = ParticleFlag::Survived;
  ++counts_[voxel];
  hint_[voxel] = i + 1;
  return SlotRef{voxel, i};
}

void VoxelArena::remove(SlotRef r) {
  Particle& p = at(r);
  if (p.flag == ParticleFlag::Vacant) return;
  p.flag = ParticleFlag::Vacant;
  p.weight = 0;
  --counts_[r.voxel];
  hint_[r.voxel] = std::min(hint_[r.voxel], r.slot);
}

void VoxelArena::set_vacant_unchecked(std::uint32_t v, std::uint32_t slot) {
  Particle& p = voxel_slots(v)[slot];
  p.flag = ParticleFlag::Vacant;
  p.weight = 0;
}

void VoxelArena::recount(std::uint32_t v) {
  const Particle* s = voxel_slots(v);
  std::uint32_t c = 0, first = static_cast<std::uint32_t>(per_voxel_);
  for (std::uint32_t i = 0; i < per_voxel_; ++i) {
    if (s[i].flag != ParticleFlag::Vacant)
      ++c;
    else if (first == per_voxel_)
      first = i;
  }
  counts_[v] = c;
  hint_[v] = first;
}

std::size_t VoxelArena::total_live() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

void VoxelArena::clear() {
  std::fill(slots_.begin(), slots_.end(), Particle{});
  std::fill(counts_.begin(), counts_.end(), 0u);
  std::fill(hint_.begin(), hint_.end(), 0u);
  dropped_count = 0;
  dropped_weight = 0;
}

bool VoxelArena::counters_consistent() const {
  for (std::size_t v = 0; v < counts_.size(); ++v) {
    const Particle* s = voxel_slots(static_cast<std::uint32_t>(v));
    std::uint32_t c = 0;
    for (std::size_t i = 0; i < per_voxel_; ++i) {
      if (s[i].flag != ParticleFlag::Vacant) {
        ++c;
      } else if (i < hint_[v]) {
        return false;
      }
    }
    if (c != counts_[v]) return false;
  }
  return true;
}

std::optional<SlotRef> add_particle(VoxelArena& arena, const VoxelGrid& grid, const Eigen::Vector3d& center,
                                    const Particle& p) {
  auto v = grid.index(p.position.cast<double>(), center);
  if (!v) {
    ++arena.dropped_count;
    arena.dropped_weight += p.weight;
    return std::nullopt;
  }
  return arena.add(*v, p);
}

void delete_particle(VoxelArena& arena, SlotRef r) { arena.remove(r); }

std::optional<SlotRef> move_particle(VoxelArena& arena, const VoxelGrid& grid, const Eigen::Vector3d& center,
                                     SlotRef r) {
  Particle p = arena.at(r);
  arena.remove(r);
  return add_particle(arena, grid, center, p);
}

PyramidIndex::PyramidIndex(std::size_t num_pyramids, std::size_t capacity)
    : entries_(num_pyramids * capacity), counts_(num_pyramids, 0), capacity_(capacity) {}

bool PyramidIndex::add(int pyramid, SlotRef r) {
  auto& c = counts_[pyramid];
  if (c >= capacity_) {
    ++dropped;
    return false;
  }
  entries_[std::size_t(pyramid) * capacity_ + c] = r;
  ++c;
  return true;
}

void PyramidIndex::clear() {
  std::fill(counts_.begin(), counts_.end(), 0u);
  dropped = 0;
}

void write_particle_dump(std::ostream& os, const VoxelArena& arena) {
  os << "voxel_id\tslot_id\tflag\tweight\tvx\tvy\tvz\tpx\tpy\tpz\n";
  os << std::setprecision(9);
  for (std::uint32_t v = 0; v < arena.num_voxels(); ++v) {
    if (arena.live_count(v) == 0) continue;
    const Particle* s = arena.voxel_slots(v);
    for (std::uint32_t i = 0; i < arena.slots_per_voxel(); ++i) {
      const Particle& p = s[i];
      if (p.flag == ParticleFlag::Vacant) continue;
      os << v << '\t' << i << '\t' << int(p.flag) << '\t' << p.weight << '\t' << p.velocity.x() << '\t'
         << p.velocity.y() << '\t' << p.velocity.z() << '\t' << p.position.x() << '\t' << p.position.y() << '\t'
         << p.position.z() << '\n';
    }
  }
}

}  // namespace dsp
