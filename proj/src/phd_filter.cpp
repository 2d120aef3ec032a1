#include "dsp/phd_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dsp/rng.hpp"

namespace dsp {

double likelihood(const Eigen::Vector3d& z, const Eigen::Vector3d& x, double r, const NoiseModel& noise) {
  return gaussian_density((z - x).squaredNorm(), noise.rho(r));
}

namespace {

constexpr double kStaticSpeed = 1e-9;

MotionClass classify(const Particle& p, MapMode mode, double v_hat, SplitMix64& rng) {
  if (mode == MapMode::Static) return MotionClass::Static;
  if (mode == MapMode::Random) return MotionClass::Dynamic;
  double speed = p.velocity.cast<double>().norm();
  if (speed > v_hat) return MotionClass::Dynamic;
  if (speed <= kStaticSpeed) return MotionClass::Static;
  return (rng() >> 63) ? MotionClass::Dynamic : MotionClass::Static;
}

void seed_time_particles(MapState& s) {
  const auto& grid = s.layout.voxels;
  const int k = s.cfg.map.time_particles_per_voxel;
  const double l = grid.edge();
  for (std::uint32_t v = 0; v < s.arena.num_voxels(); ++v) {
    const Particle* slots = s.arena.voxel_slots(v);
    bool has = false;
    for (std::size_t i = 0; i < s.arena.slots_per_voxel() && !has; ++i) has = slots[i].flag == ParticleFlag::Time;
    if (has) continue;
    auto rng = substream(s.cfg.seed, Stream::Init, s.frame, v);
    Eigen::Vector3d c = grid.voxel_center(v, s.center);
    for (int j = 0; j < k; ++j) {
      Particle p;
      p.flag = ParticleFlag::Time;
      p.weight = 0;
      p.stamp = -1.0f;
      Eigen::Vector3d off(uniform01(rng) - 0.5, uniform01(rng) - 0.5, uniform01(rng) - 0.5);
      p.position = (c + 0.98 * l * off).cast<float>();
      s.arena.add(v, p);
    }
  }
}

}  // namespace

void predict(MapState& s, double dt, Exec exec) {
  const auto& f = s.cfg.filter;
  const MapMode mode = s.cfg.mode;
  const auto& grid = s.layout.voxels;
  const std::size_t L = s.arena.slots_per_voxel();
  const std::int64_t nv = static_cast<std::int64_t>(s.arena.num_voxels());
  const bool parallel = exec == Exec::Parallel;
  auto& dest = s.slot_scratch;

#pragma omp parallel for schedule(dynamic, 256) if (parallel)
  for (std::int64_t vi = 0; vi < nv; ++vi) {
    const auto v = static_cast<std::uint32_t>(vi);
    if (s.arena.live_count(v) == 0) continue;
    auto rng = substream(s.cfg.seed, Stream::Predict, s.frame, v);
    std::normal_distribution<double> nd(0.0, 1.0);
    Particle* slots = s.arena.voxel_slots(v);
    for (std::size_t i = 0; i < L; ++i) {
      Particle& p = slots[i];
      if (p.flag == ParticleFlag::Vacant) continue;
      Eigen::Vector3d pos = p.position.cast<double>();
      if (p.flag != ParticleFlag::Time) {
        Eigen::Vector3d vel = p.velocity.cast<double>();
        MotionClass mc = classify(p, mode, f.V_hat, rng);
        Eigen::Vector3d np(nd(rng), nd(rng), nd(rng));
        if (mc == MotionClass::Dynamic) {
          Eigen::Vector3d nvel(nd(rng), nd(rng), nd(rng));
          pos += vel * dt + f.q_pos_std * np;
          vel += f.q_vel_std * nvel;
          p.velocity = vel.cast<float>();
        } else {
          pos += f.q_pos_std * np;
        }
        p.position = pos.cast<float>();
        if (p.flag == ParticleFlag::Survived) p.weight *= f.P_s;
      }
      auto d = grid.index(p.position.cast<double>(), s.center);
      dest[v * L + i] = d ? static_cast<std::int32_t>(*d) : -1;
    }
  }

  // relocation is serial so slot assignment never depends on the thread count
  std::vector<Particle> movers;
  std::vector<std::uint32_t> targets;
  s.pruned = 0;
  for (std::uint32_t v = 0; v < nv; ++v) {
    if (s.arena.live_count(v) == 0) continue;
    Particle* slots = s.arena.voxel_slots(v);
    for (std::uint32_t i = 0; i < L; ++i) {
      if (slots[i].flag == ParticleFlag::Vacant) continue;
      std::int32_t d = dest[v * L + i];
      if (d == static_cast<std::int32_t>(v)) continue;
      if (d < 0) {
        ++s.pruned;
      } else {
        movers.push_back(slots[i]);
        targets.push_back(static_cast<std::uint32_t>(d));
      }
      s.arena.remove({v, i});
    }
  }
  for (std::size_t k = 0; k < movers.size(); ++k) s.arena.add(targets[k], movers[k]);

  if (s.cfg.map.time_particles) seed_time_particles(s);
}

void rebuild_pyramid_index(MapState& s, Exec exec) {
  s.index.clear();
  const std::size_t L = s.arena.slots_per_voxel();
  const std::int64_t nv = static_cast<std::int64_t>(s.arena.num_voxels());
  const double rmin2 = s.cfg.map.robot_radius * s.cfg.map.robot_radius;
  const bool parallel = exec == Exec::Parallel;
  auto& pid = s.slot_scratch;
  const Eigen::Matrix3d world_to_sensor = s.pose.orientation.conjugate().toRotationMatrix();

#pragma omp parallel for schedule(dynamic, 256) if (parallel)
  for (std::int64_t vi = 0; vi < nv; ++vi) {
    const auto v = static_cast<std::uint32_t>(vi);
    if (s.arena.live_count(v) == 0) continue;
    const Particle* slots = s.arena.voxel_slots(v);
    for (std::size_t i = 0; i < L; ++i) {
      if (slots[i].flag == ParticleFlag::Vacant) continue;
      Eigen::Vector3d d = slots[i].position.cast<double>() - s.center;
      if (d.squaredNorm() < rmin2) {
        pid[v * L + i] = -1;
        continue;
      }
      auto id = s.layout.pyramids.index_sensor(world_to_sensor * d);
      pid[v * L + i] = id ? *id : -1;
    }
  }

  double nb = 0;
  for (std::uint32_t v = 0; v < nv; ++v) {
    if (s.arena.live_count(v) == 0) continue;
    const Particle* slots = s.arena.voxel_slots(v);
    for (std::uint32_t i = 0; i < L; ++i) {
      if (slots[i].flag == ParticleFlag::Vacant) continue;
      if (slots[i].flag == ParticleFlag::Newborn) nb += slots[i].weight;
      if (pid[v * L + i] >= 0) s.index.add(pid[v * L + i], {v, i});
    }
  }
  s.newborn_mass = nb;
}

namespace {

void clear_newborn_flags(MapState& s, bool parallel) {
  const std::size_t L = s.arena.slots_per_voxel();
  const std::int64_t nv = static_cast<std::int64_t>(s.arena.num_voxels());
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t vi = 0; vi < nv; ++vi) {
    const auto v = static_cast<std::uint32_t>(vi);
    if (s.arena.live_count(v) == 0) continue;
    Particle* slots = s.arena.voxel_slots(v);
    for (std::size_t i = 0; i < L; ++i)
      if (slots[i].flag == ParticleFlag::Newborn) slots[i].flag = ParticleFlag::Survived;
  }
}

double visible_limit(const MapState& s, const PreprocessedFrame& pre, int pyramid) {
  double vis = pre.visible_length[pyramid];
  if (vis > 0) return vis;
  return s.cfg.filter.empty_pyramid_visible ? std::numeric_limits<double>::infinity() : -1.0;
}

}  // namespace

// literal transcription of the two-pass update; kept as the reference for the kernels
void update_serial(MapState& s, const PreprocessedFrame& pre) {
  const auto& f = s.cfg.filter;
  const auto& noise = s.cfg.map.noise;
  const int np = s.layout.pyramids.count();
  const auto& nbr = s.layout.neighbors;
  const std::size_t bc = pre.bin_capacity;

  std::vector<double> denom(std::size_t(np) * bc, 0.0);
  for (int i = 0; i < np; ++i) {
    for (std::uint32_t j = 0; j < pre.bin_counts[i]; ++j) {
      Eigen::Vector3d z = pre.bin(i)[j].position.cast<double>();
      double c = s.newborn_mass;
      for (auto it = nbr.begin(i); it != nbr.end(i); ++it) {
        for (const SlotRef* e = s.index.begin(*it); e != s.index.end(*it); ++e) {
          const Particle& p = s.arena.at(*e);
          if (p.flag != ParticleFlag::Survived) continue;
          Eigen::Vector3d x = p.position.cast<double>();
          c += f.P_d * p.weight * likelihood(z, x, (x - s.center).norm(), noise);
        }
      }
      denom[i * bc + j] = f.kappa + c;
    }
  }

  for (int i = 0; i < np; ++i) {
    double vis = visible_limit(s, pre, i);
    if (vis < 0) continue;
    for (const SlotRef* e = s.index.begin(i); e != s.index.end(i); ++e) {
      Particle& p = s.arena.at(*e);
      Eigen::Vector3d x = p.position.cast<double>();
      double r2 = (x - s.center).squaredNorm();
      if (r2 > vis) continue;
      if (p.flag == ParticleFlag::Time) {
        p.stamp = static_cast<float>(s.time);
        continue;
      }
      double r = std::sqrt(r2);
      double acc = 0;
      for (auto it = nbr.begin(i); it != nbr.end(i); ++it) {
        for (std::uint32_t j = 0; j < pre.bin_counts[*it]; ++j) {
          Eigen::Vector3d z = pre.bin(*it)[j].position.cast<double>();
          double d = denom[*it * bc + j];
          if (p.flag == ParticleFlag::Survived)
            acc += f.P_d * likelihood(z, x, r, noise) / d;
          else
            acc += 1.0 / d;
        }
      }
      if (p.flag == ParticleFlag::Survived)
        p.weight *= (1.0 - f.P_d) + acc;
      else
        p.weight *= acc;
    }
  }
  clear_newborn_flags(s, false);
}

namespace {

struct Candidate {
  double x, y, z;
  double r2;
  double norm;   // (2 pi)^-1.5 / rho^3
  double a;      // 1 / (2 rho^2)
  double c1;     // P_d * w * norm for survived particles, else 0
  ParticleFlag flag;
};

}  // namespace

void update_parallel(MapState& s, const PreprocessedFrame& pre) {
  const auto& f = s.cfg.filter;
  const auto& noise = s.cfg.map.noise;
  const int np = s.layout.pyramids.count();
  const auto& nbr = s.layout.neighbors;
  const std::size_t bc = pre.bin_capacity;
  const std::size_t cap = s.index.capacity();
  static const double k = std::pow(2 * kPi, -1.5);

  std::vector<Candidate> cand(std::size_t(np) * cap);
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < np; ++i) {
    Candidate* out = cand.data() + std::size_t(i) * cap;
    std::uint32_t n = s.index.count(i);
    const SlotRef* e = s.index.begin(i);
    for (std::uint32_t j = 0; j < n; ++j) {
      const Particle& p = s.arena.at(e[j]);
      Candidate& c = out[j];
      c.x = p.position.x();
      c.y = p.position.y();
      c.z = p.position.z();
      double dx = c.x - s.center.x(), dy = c.y - s.center.y(), dz = c.z - s.center.z();
      c.r2 = dx * dx + dy * dy + dz * dz;
      double rho = noise.rho(std::sqrt(c.r2));
      c.norm = k / (rho * rho * rho);
      c.a = 1.0 / (2 * rho * rho);
      c.flag = p.flag;
      c.c1 = p.flag == ParticleFlag::Survived ? f.P_d * p.weight * c.norm : 0.0;
    }
  }

  std::vector<double> inv_denom(std::size_t(np) * bc, 0.0);
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < np; ++i) {
    for (std::uint32_t j = 0; j < pre.bin_counts[i]; ++j) {
      const Eigen::Vector3f& zp = pre.bin(i)[j].position;
      const double zx = zp.x(), zy = zp.y(), zz = zp.z();
      double c = s.newborn_mass;
      for (auto it = nbr.begin(i); it != nbr.end(i); ++it) {
        const Candidate* cs = cand.data() + std::size_t(*it) * cap;
        const std::uint32_t n = s.index.count(*it);
        for (std::uint32_t q = 0; q < n; ++q) {
          if (cs[q].c1 == 0.0) continue;
          double dx = zx - cs[q].x, dy = zy - cs[q].y, dz = zz - cs[q].z;
          c += cs[q].c1 * std::exp(-(dx * dx + dy * dy + dz * dz) * cs[q].a);
        }
      }
      inv_denom[i * bc + j] = 1.0 / (f.kappa + c);
    }
  }

#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < np; ++i) {
    const double vis = visible_limit(s, pre, i);
    if (vis < 0) continue;
    const Candidate* cs = cand.data() + std::size_t(i) * cap;
    const SlotRef* e = s.index.begin(i);
    const std::uint32_t n = s.index.count(i);
    // newborn factor does not depend on the particle
    double newborn_acc = 0;
    for (auto it = nbr.begin(i); it != nbr.end(i); ++it)
      for (std::uint32_t j = 0; j < pre.bin_counts[*it]; ++j) newborn_acc += inv_denom[*it * bc + j];
    for (std::uint32_t q = 0; q < n; ++q) {
      const Candidate& c = cs[q];
      if (c.r2 > vis) continue;
      Particle& p = s.arena.at(e[q]);
      if (c.flag == ParticleFlag::Time) {
        p.stamp = static_cast<float>(s.time);
        continue;
      }
      if (c.flag == ParticleFlag::Newborn) {
        p.weight *= newborn_acc;
        continue;
      }
      double acc = 0;
      for (auto it = nbr.begin(i); it != nbr.end(i); ++it) {
        const MeasurementPoint* zs = pre.bin(*it);
        const double* id = inv_denom.data() + std::size_t(*it) * bc;
        for (std::uint32_t j = 0; j < pre.bin_counts[*it]; ++j) {
          double dx = zs[j].position.x() - c.x, dy = zs[j].position.y() - c.y, dz = zs[j].position.z() - c.z;
          acc += std::exp(-(dx * dx + dy * dy + dz * dz) * c.a) * id[j];
        }
      }
      p.weight *= (1.0 - f.P_d) + f.P_d * c.norm * acc;
    }
  }
  clear_newborn_flags(s, true);
}

void update(MapState& s, const PreprocessedFrame& pre, Exec exec) {
  if (exec == Exec::Serial)
    update_serial(s, pre);
  else
    update_parallel(s, pre);
}

BirthStats birth(MapState& s, const PreprocessedFrame& pre, const std::vector<VelocityLabel>& labels) {
  BirthStats st;
  const auto& f = s.cfg.filter;
  const std::size_t M = pre.num_binned();
  if (M == 0) return st;
  const int Lb = f.L_b;
  const double vb = f.v_b > 0 ? f.v_b : f.w_init * double(M) * Lb;
  const double w = vb / (double(M) * Lb);
  st.prior_weight = w;
  const auto& grid = s.layout.voxels;
  const std::size_t dropped0 = s.arena.dropped_count;

  std::uint64_t k = 0;
  for (std::size_t i = 0; i < pre.num_pyramids(); ++i) {
    for (std::uint32_t j = 0; j < pre.bin_counts[i]; ++j, ++k) {
      const MeasurementPoint& mp = pre.bin(static_cast<int>(i))[j];
      auto rng = substream(s.cfg.seed, Stream::Birth, s.frame, k);
      std::normal_distribution<double> nd(0.0, 1.0);
      std::uniform_real_distribution<double> ud(-f.v_max, f.v_max);
      const Eigen::Vector3d z = mp.position.cast<double>();
      const double rho = s.cfg.map.noise.rho(std::sqrt(double(mp.range2)));

      const VelocityLabel* label = mp.source < labels.size() ? &labels[mp.source] : nullptr;
      int n_gauss = 0, n_rand = 0;
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      if (s.cfg.mode == MapMode::Random) {
        n_rand = Lb;
      } else if (s.cfg.mode == MapMode::Dynamic && !(label && label->kind == LabelKind::Static)) {
        auto vox = grid.index(z, s.center);
        double l1 = vox ? s.lambda_dyn[*vox] : 0.5;
        int n_dyn = static_cast<int>(std::lround(l1 * Lb));
        n_rand = n_dyn / 2;
        n_gauss = n_dyn - n_rand;
        if (label && label->kind == LabelKind::Estimated) mean = label->velocity;
      }

      for (int q = 0; q < Lb; ++q) {
        Particle p;
        p.flag = ParticleFlag::Newborn;
        p.weight = w;
        Eigen::Vector3d pos = z + rho * Eigen::Vector3d(nd(rng), nd(rng), nd(rng));
        Eigen::Vector3d vel = Eigen::Vector3d::Zero();
        if (q < n_gauss)
          vel = mean + f.sigma_vb * Eigen::Vector3d(nd(rng), nd(rng), nd(rng));
        else if (q < n_gauss + n_rand)
          vel = Eigen::Vector3d(ud(rng), ud(rng), ud(rng));
        p.position = pos.cast<float>();
        p.velocity = vel.cast<float>();
        if (add_particle(s.arena, grid, s.center, p)) ++st.born;
      }
    }
  }
  st.dropped = s.arena.dropped_count - dropped0;
  return st;
}

double dst_lambda1(const DstMasses& m) {
  double W = m.dynamic + m.stat + m.ambiguous;
  if (!(W > 0)) return 0.5;
  double l1 = (m.dynamic + 0.5 * m.ambiguous) / W;
  return std::clamp(l1, 0.0, 1.0);
}

DstMasses voxel_dst_masses(const Particle* slots, std::size_t n, double v_hat) {
  DstMasses m;
  for (std::size_t i = 0; i < n; ++i) {
    const Particle& p = slots[i];
    if (p.flag == ParticleFlag::Vacant || p.flag == ParticleFlag::Time) continue;
    double speed = p.velocity.cast<double>().norm();
    if (speed >= v_hat)
      m.dynamic += p.weight;
    else if (speed <= kStaticSpeed)
      m.stat += p.weight;
    else
      m.ambiguous += p.weight;
  }
  return m;
}

DstCoefficients dst_coefficients(const MapState& s, double v_hat) {
  DstCoefficients d;
  d.lambda1.assign(s.arena.num_voxels(), 0.5);
  for (std::uint32_t v = 0; v < s.arena.num_voxels(); ++v) {
    if (s.arena.live_count(v) == 0) continue;
    d.lambda1[v] = dst_lambda1(voxel_dst_masses(s.arena.voxel_slots(v), s.arena.slots_per_voxel(), v_hat));
  }
  return d;
}

std::vector<std::uint32_t> systematic_select(const std::vector<double>& weights, std::size_t cap, double u0) {
  std::vector<std::uint32_t> keep;
  const std::size_t n = weights.size();
  if (n <= cap) {
    for (std::uint32_t i = 0; i < n; ++i) keep.push_back(i);
    return keep;
  }
  double total = 0;
  for (double w : weights) total += w;
  if (!(total > 0)) return keep;
  const double step = total / double(cap);
  double pointer = u0 * step;
  double cum = 0;
  std::size_t drawn = 0;
  for (std::uint32_t i = 0; i < n && drawn < cap; ++i) {
    cum += weights[i];
    bool taken = false;
    while (drawn < cap && pointer < cum) {
      if (!taken) keep.push_back(i);
      taken = true;
      pointer += step;
      ++drawn;
    }
  }
  return keep;
}

namespace {

// returns E of the voxel; resamples in place
double resample_voxel(MapState& s, std::uint32_t v, std::vector<std::uint32_t>& idx, std::vector<double>& w) {
  Particle* slots = s.arena.voxel_slots(v);
  const std::size_t L = s.arena.slots_per_voxel();
  idx.clear();
  w.clear();
  double E = 0;
  for (std::uint32_t i = 0; i < L; ++i) {
    if (slots[i].flag == ParticleFlag::Vacant || slots[i].flag == ParticleFlag::Time) continue;
    idx.push_back(i);
    w.push_back(slots[i].weight);
    E += slots[i].weight;
  }
  if (idx.empty()) return 0.0;
  if (!(E > 0)) {
    for (auto i : idx) s.arena.set_vacant_unchecked(v, i);
    s.arena.recount(v);
    return 0.0;
  }
  const std::size_t cap = s.layout.resample_cap;
  std::size_t kept = idx.size();
  if (idx.size() > cap) {
    auto rng = substream(s.cfg.seed, Stream::Resample, s.frame, v);
    auto keep = systematic_select(w, cap, uniform01(rng));
    std::vector<char> mark(idx.size(), 0);
    for (auto k : keep) mark[k] = 1;
    for (std::size_t k = 0; k < idx.size(); ++k)
      if (!mark[k]) s.arena.set_vacant_unchecked(v, idx[k]);
    kept = keep.size();
  }
  const double wn = E / double(kept);
  for (auto i : idx)
    if (slots[i].flag != ParticleFlag::Vacant) slots[i].weight = wn;
  s.arena.recount(v);
  return E;
}

}  // namespace

void resample(MapState& s, Exec exec) {
  const std::int64_t nv = static_cast<std::int64_t>(s.arena.num_voxels());
  const bool parallel = exec == Exec::Parallel;
#pragma omp parallel if (parallel)
  {
    std::vector<std::uint32_t> idx;
    std::vector<double> w;
#pragma omp for schedule(dynamic, 256)
    for (std::int64_t vi = 0; vi < nv; ++vi) {
      const auto v = static_cast<std::uint32_t>(vi);
      if (s.arena.live_count(v) == 0) continue;
      resample_voxel(s, v, idx, w);
    }
  }
}

void resample_fused(MapState& s, Exec exec) {
  const std::int64_t nv = static_cast<std::int64_t>(s.arena.num_voxels());
  const bool parallel = exec == Exec::Parallel;
  const double v_hat = s.cfg.filter.V_hat;
  const int min_n = s.cfg.filter.dst_min_particles;
#pragma omp parallel if (parallel)
  {
    std::vector<std::uint32_t> idx;
    std::vector<double> w;
#pragma omp for schedule(dynamic, 256)
    for (std::int64_t vi = 0; vi < nv; ++vi) {
      const auto v = static_cast<std::uint32_t>(vi);
      if (s.arena.live_count(v) == 0) {
        s.lambda_dyn[v] = 0.5;
        s.voxel_mass[v] = 0.0;
        continue;
      }
      const Particle* slots = s.arena.voxel_slots(v);
      DstMasses m = voxel_dst_masses(slots, s.arena.slots_per_voxel(), v_hat);
      s.voxel_mass[v] = resample_voxel(s, v, idx, w);
      s.lambda_dyn[v] = static_cast<int>(idx.size()) >= min_n ? dst_lambda1(m) : 0.5;
    }
  }
}

}  // namespace dsp
