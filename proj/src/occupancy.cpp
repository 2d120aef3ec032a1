#include "dsp/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "dsp/binary_io.hpp"
#include "dsp/rng.hpp"

namespace dsp {

GridLattice GridLattice::around(const Eigen::Vector3d& center, const Eigen::Vector3d& map_size, double edge) {
  GridLattice g;
  g.edge = edge;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = static_cast<int>(std::llround(map_size[a] / edge));
    g.origin[a] = std::llround(center[a] / edge - 0.5 * g.dims[a]);
  }
  return g;
}

Eigen::Vector3d GridLattice::cell_center(std::size_t id) const {
  std::size_t ix = id % dims.x();
  std::size_t iy = (id / dims.x()) % dims.y();
  std::size_t iz = id / (std::size_t(dims.x()) * dims.y());
  return edge * Eigen::Vector3d(double(origin.x() + std::int64_t(ix)) + 0.5, double(origin.y() + std::int64_t(iy)) + 0.5,
                                double(origin.z() + std::int64_t(iz)) + 0.5);
}

std::optional<std::size_t> GridLattice::cell_of(const Eigen::Vector3d& p) const {
  int i[3];
  for (int a = 0; a < 3; ++a) {
    double f = std::floor(p[a] / edge) - double(origin[a]);
    if (!(f >= 0 && f < dims[a])) return std::nullopt;
    i[a] = static_cast<int>(f);
  }
  return id(i[0], i[1], i[2]);
}

double occupancy_voxel(double mass, double l_q, double l_prime) {
  if (l_q <= l_prime) {
    double s = l_prime / l_q;
    return std::min(mass * s * s * s, 1.0);
  }
  return std::min(mass, 1.0);
}

double mass_in_cube(const MapState& s, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  const auto& grid = s.layout.voxels;
  const Eigen::Vector3d box_min = s.center - 0.5 * grid.size();
  int i0[3], i1[3];
  const int n[3] = {grid.nx(), grid.ny(), grid.nz()};
  for (int a = 0; a < 3; ++a) {
    i0[a] = std::clamp(static_cast<int>(std::floor((lo[a] - box_min[a]) / grid.edge())), 0, n[a] - 1);
    i1[a] = std::clamp(static_cast<int>(std::floor((hi[a] - box_min[a]) / grid.edge())), 0, n[a] - 1);
  }
  double m = 0;
  for (int z = i0[2]; z <= i1[2]; ++z)
    for (int y = i0[1]; y <= i1[1]; ++y)
      for (int x = i0[0]; x <= i1[0]; ++x) {
        auto v = static_cast<std::uint32_t>(x + y * n[0] + z * n[0] * n[1]);
        if (!s.arena.live_count(v)) continue;
        const Particle* p = s.arena.voxel_slots(v);
        for (std::size_t i = 0; i < s.arena.slots_per_voxel(); ++i) {
          if (p[i].flag == ParticleFlag::Vacant || p[i].flag == ParticleFlag::Time) continue;
          Eigen::Vector3d q = p[i].position.cast<double>();
          if ((q.array() >= lo.array()).all() && (q.array() < hi.array()).all()) m += p[i].weight;
        }
      }
  return m;
}

double occupancy_at(const MapState& s, const Eigen::Vector3d& p) {
  if (!s.layout.voxels.contains(p, s.center)) throw OutsideMap("query point outside the map box");
  const double h = 0.5 * s.cfg.map.filter_resolution;
  return std::min(mass_in_cube(s, p.array() - h, p.array() + h), 1.0);
}

namespace {

OccupancyGrid empty_grid(const MapState& s, double l_q) {
  OccupancyGrid g;
  g.lattice = GridLattice::around(s.center, s.cfg.map.map_size, l_q);
  g.center = s.center;
  g.timestamp = s.time;
  g.prob.assign(g.lattice.count(), 0.0f);
  return g;
}

void finish(OccupancyGrid& g, const std::vector<double>& mass, double l_prime) {
  for (std::size_t i = 0; i < mass.size(); ++i)
    g.prob[i] = static_cast<float>(occupancy_voxel(mass[i], g.lattice.edge, l_prime));
}

template <class F>
void for_each_particle(const MapState& s, F&& f) {
  for (std::uint32_t v = 0; v < s.arena.num_voxels(); ++v) {
    if (!s.arena.live_count(v)) continue;
    const Particle* p = s.arena.voxel_slots(v);
    for (std::size_t i = 0; i < s.arena.slots_per_voxel(); ++i) {
      if (p[i].flag == ParticleFlag::Vacant || p[i].flag == ParticleFlag::Time) continue;
      f(p[i], v, i);
    }
  }
}

}  // namespace

OccupancyGrid occupancy_grid(const MapState& s, double l_q) {
  OccupancyGrid g = empty_grid(s, l_q);
  std::vector<double> mass(g.lattice.count(), 0.0);
  for_each_particle(s, [&](const Particle& p, std::uint32_t, std::size_t) {
    if (auto c = g.lattice.cell_of(p.position.cast<double>())) mass[*c] += p.weight;
  });
  finish(g, mass, s.cfg.map.filter_resolution);
  return g;
}

OccupancyGrid predict_occupancy(const MapState& s, double tau, double l_q) {
  OccupancyGrid g = empty_grid(s, l_q);
  g.timestamp = s.time + tau;
  std::vector<double> mass(g.lattice.count(), 0.0);
  const auto& f = s.cfg.filter;
  const bool noisy = f.future_noise && tau > 0 && s.last_dt > 0;
  const int steps = noisy ? static_cast<int>(std::ceil(tau / s.last_dt - 1e-9)) : 0;

  auto deposit = [&](const Eigen::Vector3d& q, double w) {
    if (auto c = g.lattice.cell_of(q)) mass[*c] += w;
  };
  for_each_particle(s, [&](const Particle& p, std::uint32_t v, std::size_t i) {
    const Eigen::Vector3d pos = p.position.cast<double>();
    Eigen::Vector3d vel = p.velocity.cast<double>();
    double speed = vel.norm();
    // 0 static, 1 dynamic, 2 half of each
    int cls = 1;
    if (s.cfg.mode == MapMode::Static)
      cls = 0;
    else if (s.cfg.mode == MapMode::Dynamic)
      cls = speed > f.V_hat ? 1 : (speed <= 1e-9 ? 0 : 2);

    Eigen::Vector3d moved = pos + vel * tau;
    if (noisy && cls != 0) {
      auto rng = substream(s.cfg.seed, Stream::Future, s.frame, std::uint64_t(v) * s.arena.slots_per_voxel() + i);
      std::normal_distribution<double> nd(0.0, 1.0);
      const double h = tau / steps;
      moved = pos;
      for (int k = 0; k < steps; ++k) {
        moved += vel * h + f.q_pos_std * Eigen::Vector3d(nd(rng), nd(rng), nd(rng));
        vel += f.q_vel_std * Eigen::Vector3d(nd(rng), nd(rng), nd(rng));
      }
    }
    if (cls == 0) {
      deposit(pos, p.weight);
    } else if (cls == 1) {
      deposit(moved, p.weight);
    } else {
      auto a = g.lattice.cell_of(pos), b = g.lattice.cell_of(moved);
      if (a == b) {
        deposit(pos, p.weight);
      } else {
        deposit(pos, 0.5 * p.weight);
        deposit(moved, 0.5 * p.weight);
      }
    }
  });
  finish(g, mass, s.cfg.map.filter_resolution);
  return g;
}

std::vector<std::uint8_t> binarize(const OccupancyGrid& g, double threshold) {
  std::vector<std::uint8_t> out(g.prob.size());
  for (std::size_t i = 0; i < g.prob.size(); ++i) out[i] = g.prob[i] >= threshold ? 1 : 0;
  return out;
}

std::optional<std::vector<std::uint8_t>> unknown_mask(const MapState& s, double l_q) {
  if (!s.cfg.map.time_particles) return std::nullopt;
  GridLattice lat = GridLattice::around(s.center, s.cfg.map.map_size, l_q);
  std::vector<std::uint8_t> has(lat.count(), 0), known(lat.count(), 0);
  std::vector<std::uint8_t> voxel_known(s.arena.num_voxels(), 0);
  for (std::uint32_t v = 0; v < s.arena.num_voxels(); ++v) {
    if (!s.arena.live_count(v)) continue;
    const Particle* p = s.arena.voxel_slots(v);
    for (std::size_t i = 0; i < s.arena.slots_per_voxel(); ++i) {
      if (p[i].flag != ParticleFlag::Time) continue;
      bool refreshed = p[i].stamp >= 0.0f;
      if (refreshed) voxel_known[v] = 1;
      if (auto c = lat.cell_of(p[i].position.cast<double>())) {
        has[*c] = 1;
        if (refreshed) known[*c] = 1;
      }
    }
  }
  std::vector<std::uint8_t> unknown(lat.count(), 1);
  for (std::size_t c = 0; c < lat.count(); ++c) {
    if (has[c]) {
      unknown[c] = known[c] ? 0 : 1;
    } else if (auto v = s.layout.voxels.index(lat.cell_center(c), s.center)) {
      unknown[c] = voxel_known[*v] ? 0 : 1;
    }
  }
  return unknown;
}

void write_grid(const std::string& path, const OccupancyGrid& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write grid '" + path + "'");
  bin::put_magic(os, "DSPG");
  bin::put<std::uint32_t>(os, 1);
  for (int a = 0; a < 3; ++a) bin::put<double>(os, g.center[a]);
  bin::put<double>(os, g.lattice.edge);
  for (int a = 0; a < 3; ++a) bin::put<std::int64_t>(os, g.lattice.origin[a]);
  for (int a = 0; a < 3; ++a) bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.lattice.dims[a]));
  bin::put<double>(os, g.timestamp);
  bin::put<std::uint8_t>(os, g.observed.empty() ? 0 : 1);
  os.write(reinterpret_cast<const char*>(g.prob.data()), std::streamsize(g.prob.size() * sizeof(float)));
  if (!g.observed.empty()) os.write(reinterpret_cast<const char*>(g.observed.data()), std::streamsize(g.observed.size()));
  if (!os) throw DataError("failed writing grid '" + path + "'");
}

OccupancyGrid read_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open grid '" + path + "'");
  bin::expect_magic(is, "DSPG", path);
  auto version = bin::get<std::uint32_t>(is, "version");
  if (version != 1) throw DataError(path + ": unsupported grid version " + std::to_string(version));
  OccupancyGrid g;
  for (int a = 0; a < 3; ++a) g.center[a] = bin::get<double>(is, "center");
  g.lattice.edge = bin::get<double>(is, "edge");
  for (int a = 0; a < 3; ++a) g.lattice.origin[a] = bin::get<std::int64_t>(is, "origin");
  for (int a = 0; a < 3; ++a) g.lattice.dims[a] = static_cast<int>(bin::get<std::uint32_t>(is, "dims"));
  g.timestamp = bin::get<double>(is, "timestamp");
  bool has_obs = bin::get<std::uint8_t>(is, "flags") != 0;
  g.prob.resize(g.lattice.count());
  is.read(reinterpret_cast<char*>(g.prob.data()), std::streamsize(g.prob.size() * sizeof(float)));
  if (static_cast<std::size_t>(is.gcount()) != g.prob.size() * sizeof(float))
    throw DataError(path + ": truncated probabilities");
  if (has_obs) {
    g.observed.resize(g.lattice.count());
    is.read(reinterpret_cast<char*>(g.observed.data()), std::streamsize(g.observed.size()));
    if (static_cast<std::size_t>(is.gcount()) != g.observed.size()) throw DataError(path + ": truncated mask");
  }
  return g;
}

void write_pgm_slice(const std::string& path, const OccupancyGrid& g, double z) {
  const auto& L = g.lattice;
  int iz = static_cast<int>(std::floor(z / L.edge) - double(L.origin.z()));
  iz = std::clamp(iz, 0, L.dims.z() - 1);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write image '" + path + "'");
  os << "P5\n" << L.dims.x() << " " << L.dims.y() << "\n255\n";
  // rows top to bottom = +y to -y
  for (int y = L.dims.y() - 1; y >= 0; --y)
    for (int x = 0; x < L.dims.x(); ++x) {
      float p = g.prob[L.id(x, y, iz)];
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f))));
    }
}

}  // namespace dsp
