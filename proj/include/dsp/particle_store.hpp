#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Core>

#include "dsp/geometry.hpp"

namespace dsp {

enum class ParticleFlag : std::uint8_t { Vacant = 0, Survived = 1, Newborn = 2, Time = 3 };

struct Particle {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();
  Eigen::Vector3f velocity = Eigen::Vector3f::Zero();
  double weight = 0;
  float stamp = -1.0f;  // time particles: last refresh, < 0 never
  ParticleFlag flag = ParticleFlag::Vacant;
};

struct SlotRef {
  std::uint32_t voxel = 0;
  std::uint32_t slot = 0;
  bool operator==(const SlotRef&) const = default;
};

class VoxelArena {
 public:
  VoxelArena() = default;
  VoxelArena(std::size_t num_voxels, std::size_t slots_per_voxel);

  // first vacant slot of the voxel, nullopt (Dropped) when full
  std::optional<SlotRef> add(std::uint32_t voxel, const Particle& p);
  void remove(SlotRef r);
  bool is_live(SlotRef r) const { return at(r).flag != ParticleFlag::Vacant; }

  Particle& at(SlotRef r) { return slots_[std::size_t(r.voxel) * per_voxel_ + r.slot]; }
  const Particle& at(SlotRef r) const { return slots_[std::size_t(r.voxel) * per_voxel_ + r.slot]; }
  Particle* voxel_slots(std::uint32_t v) { return slots_.data() + std::size_t(v) * per_voxel_; }
  const Particle* voxel_slots(std::uint32_t v) const { return slots_.data() + std::size_t(v) * per_voxel_; }

  std::uint32_t live_count(std::uint32_t v) const { return counts_[v]; }
  std::size_t total_live() const;
  std::size_t num_voxels() const { return counts_.size(); }
  std::size_t slots_per_voxel() const { return per_voxel_; }

  // voxel-local mutation used by resampling; keeps counters and hints in sync
  void set_vacant_unchecked(std::uint32_t v, std::uint32_t slot);
  void recount(std::uint32_t v);

  void clear();
  bool counters_consistent() const;

  std::size_t dropped_count = 0;
  double dropped_weight = 0;

 private:
  std::vector<Particle> slots_;
  std::vector<std::uint32_t> counts_;
  std::vector<std::uint32_t> hint_;  // no vacancy below this slot
  std::size_t per_voxel_ = 0;
};

std::optional<SlotRef> add_particle(VoxelArena& arena, const VoxelGrid& grid, const Eigen::Vector3d& center,
                                    const Particle& p);
void delete_particle(VoxelArena& arena, SlotRef r);
// position already updated; deleted here, then re-added at its new voxel
std::optional<SlotRef> move_particle(VoxelArena& arena, const VoxelGrid& grid, const Eigen::Vector3d& center,
                                     SlotRef r);

class PyramidIndex {
 public:
  PyramidIndex() = default;
  PyramidIndex(std::size_t num_pyramids, std::size_t capacity);

  bool add(int pyramid, SlotRef r);  // false = Dropped
  void clear();

  std::uint32_t count(int p) const { return counts_[p]; }
  const SlotRef* begin(int p) const { return entries_.data() + std::size_t(p) * capacity_; }
  const SlotRef* end(int p) const { return begin(p) + counts_[p]; }
  std::size_t num_pyramids() const { return counts_.size(); }
  std::size_t capacity() const { return capacity_; }

  std::size_t dropped = 0;

 private:
  std::vector<SlotRef> entries_;
  std::vector<std::uint32_t> counts_;
  std::size_t capacity_ = 0;
};

// voxel_id slot_id flag weight vx vy vz px py pz, tab separated
void write_particle_dump(std::ostream& os, const VoxelArena& arena);

}  // namespace dsp
