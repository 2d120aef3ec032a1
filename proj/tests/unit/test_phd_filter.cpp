#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "dsp/phd_filter.hpp"
#include "dsp/pipeline.hpp"
#include "helpers.hpp"

using namespace dsp;
using doctest::Approx;
using testutil::make_frame;
using testutil::make_particle;

namespace {

std::vector<Particle> live_particles(const MapState& s) {
  std::vector<Particle> out;
  for (std::uint32_t v = 0; v < s.arena.num_voxels(); ++v)
    for (std::size_t i = 0; i < s.arena.slots_per_voxel(); ++i)
      if (s.arena.voxel_slots(v)[i].flag != ParticleFlag::Vacant) out.push_back(s.arena.voxel_slots(v)[i]);
  return out;
}

SlotRef put(MapState& s, const Eigen::Vector3d& p, const Eigen::Vector3d& v, double w,
            ParticleFlag flag = ParticleFlag::Survived) {
  auto r = add_particle(s.arena, s.layout.voxels, s.center, make_particle(p, v, w, flag));
  REQUIRE(r);
  return *r;
}

PreprocessedFrame prepare(MapState& s, const std::vector<Eigen::Vector3d>& pts) {
  Frame f = make_frame(0, pts);
  s.set_pose(f.pose);
  return preprocess(f, s.cfg, s.layout, std::nullopt);
}

// 2 x 2 x 2 m at 0.2 m with 100 particles per voxel after resampling
Config resample_config() {
  Config c;
  c.map.map_size = {2, 2, 2};
  c.map.voxel_edge = 0.2;
  c.filter.L_max = 1e5;
  return c;
}

// ungated update over survived particles, straight from the update equations
std::map<std::pair<std::uint32_t, std::uint32_t>, double> oracle_update(const MapState& s,
                                                                        const PreprocessedFrame& pre) {
  const auto& f = s.cfg.filter;
  std::vector<std::pair<SlotRef, int>> indexed;
  for (int p = 0; p < s.layout.pyramids.count(); ++p)
    for (auto e = s.index.begin(p); e != s.index.end(p); ++e) indexed.push_back({*e, p});
  std::vector<Eigen::Vector3d> z;
  for (std::size_t p = 0; p < pre.num_pyramids(); ++p)
    for (std::uint32_t j = 0; j < pre.bin_counts[p]; ++j) z.push_back(pre.bin(int(p))[j].position.cast<double>());
  auto g = [&](const Eigen::Vector3d& zz, const Particle& q) {
    Eigen::Vector3d x = q.position.cast<double>();
    return likelihood(zz, x, (x - s.center).norm(), s.cfg.map.noise);
  };
  std::vector<double> D(z.size(), f.kappa + s.newborn_mass);
  for (std::size_t j = 0; j < z.size(); ++j)
    for (auto [r, p] : indexed) D[j] += f.P_d * s.arena.at(r).weight * g(z[j], s.arena.at(r));
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> out;
  for (auto [r, p] : indexed) {
    const Particle& q = s.arena.at(r);
    double r2 = (q.position.cast<double>() - s.center).squaredNorm();
    double w = q.weight;
    if (pre.visible_length[p] > 0 && r2 <= pre.visible_length[p]) {
      double acc = 0;
      for (std::size_t j = 0; j < z.size(); ++j) acc += f.P_d * g(z[j], q) / D[j];
      w *= (1 - f.P_d) + acc;
    }
    out[{r.voxel, r.slot}] = w;
  }
  return out;
}

}  // namespace

TEST_SUITE("phd_filter") {

TEST_CASE("noiseless constant velocity prediction") {
  Config c = testutil::small_config();
  c.filter.q_pos_std = 0;
  c.filter.q_vel_std = 0;
  MapState s(c);
  put(s, {0.05, 0.05, 0.05}, {1, 0, 0}, 0.5);
  put(s, {-0.5, 0.5, 0.3}, {0, 0, 0}, 0.2);
  predict(s, 0.1, Exec::Serial);
  auto ps = live_particles(s);
  REQUIRE(ps.size() == 2);
  std::sort(ps.begin(), ps.end(), [](auto& a, auto& b) { return a.weight > b.weight; });
  CHECK(ps[0].position.x() == Approx(0.15).epsilon(1e-6));
  CHECK(ps[0].position.y() == Approx(0.05).epsilon(1e-6));
  CHECK(ps[0].weight == Approx(0.5 * c.filter.P_s));
  CHECK(ps[1].position == Eigen::Vector3f(-0.5f, 0.5f, 0.3f));
  CHECK(ps[1].weight == Approx(0.2 * c.filter.P_s));
}

TEST_CASE("newborns are not discounted by survival") {
  Config c = testutil::small_config();
  MapState s(c);
  put(s, {0, 0, 0}, {0, 0, 0}, 0.5, ParticleFlag::Newborn);
  predict(s, 0.1);
  CHECK(live_particles(s)[0].weight == 0.5);
}

TEST_CASE("process noise has the configured spread") {
  Config c = testutil::small_config();
  c.mode = MapMode::Random;
  c.filter.q_pos_std = 0.03;
  c.filter.q_vel_std = 0.1;
  MapState s(c);
  testutil::Gen gen(17);
  const int n = 10000;
  std::vector<Eigen::Vector3d> start(n);
  for (int i = 0; i < n; ++i) {
    start[i] = gen.in_box({-1.5, -1.5, -0.7}, {1.5, 1.5, 0.7});
    put(s, start[i], {1, 0, 0}, (i + 1) * 1e-4);
  }
  const double dt = 0.1;
  predict(s, dt);
  auto ps = live_particles(s);
  REQUIRE(ps.size() == static_cast<std::size_t>(n));
  double sp = 0, sv = 0;
  for (const auto& p : ps) {
    long id = std::lround(p.weight / c.filter.P_s / 1e-4) - 1;
    REQUIRE(id >= 0);
    REQUIRE(id < n);
    Eigen::Vector3d dp = p.position.cast<double>() - start[id] - Eigen::Vector3d(dt, 0, 0);
    Eigen::Vector3d dv = p.velocity.cast<double>() - Eigen::Vector3d(1, 0, 0);
    sp += dp.squaredNorm();
    sv += dv.squaredNorm();
  }
  CHECK(std::sqrt(sp / (3.0 * n)) == Approx(0.03).epsilon(0.05));
  CHECK(std::sqrt(sv / (3.0 * n)) == Approx(0.1).epsilon(0.05));
}

TEST_CASE("static mode never moves particles by velocity") {
  Config c = testutil::small_config();
  c.mode = MapMode::Static;
  c.filter.q_pos_std = 0;
  MapState s(c);
  put(s, {0.1, 0.1, 0.1}, {2, 0, 0}, 0.3);
  predict(s, 0.5);
  CHECK(live_particles(s)[0].position == Eigen::Vector3f(0.1f, 0.1f, 0.1f));
}

TEST_CASE("likelihood values") {
  NoiseModel n;
  n.kind = NoiseModel::Kind::Constant;
  n.sigma = 1.0;
  CHECK(likelihood({0, 0, 0}, {0, 0, 0}, 5.0, n) == Approx(0.0634936359342410));
  CHECK(likelihood({1, 1, 1}, {0, 0, 0}, 5.0, n) == Approx(0.01417).epsilon(1e-3));
  n.kind = NoiseModel::Kind::Linear;
  n.sigma = 0.5;
  CHECK(likelihood({0, 0, 0}, {0, 0, 0}, 2.0, n) == Approx(0.0634936359342410));
}

TEST_CASE("missed detection only") {
  Config c = testutil::small_config();
  c.filter.empty_pyramid_visible = true;
  MapState s(c);
  auto pre = prepare(s, {{1.5, -1.2, 0.0}});
  auto r = put(s, {1.0, 0.5, 0.0}, {0, 0, 0}, 0.1);
  rebuild_pyramid_index(s);
  update_serial(s, pre);
  CHECK(s.arena.at(r).weight == Approx(0.01).epsilon(1e-12));
}

TEST_CASE("single particle on its measurement") {
  Config c = testutil::small_config();
  c.filter.kappa = 0;
  MapState s(c);
  Eigen::Vector3d z(1.5, 0.1, 0.05);
  auto pre = prepare(s, {z});
  auto r = put(s, z, {0, 0, 0}, 0.1);
  rebuild_pyramid_index(s);
  CHECK(s.newborn_mass == 0.0);
  update_serial(s, pre);
  CHECK(s.arena.at(r).weight == Approx((1 - c.filter.P_d) * 0.1 + 1.0).epsilon(1e-12));
}

TEST_CASE("particles behind the visible length are left alone") {
  Config c;
  c.filter.L_max = 1e5;
  MapState s(c);
  auto pre = prepare(s, {{3, 0.001, 0.001}});
  auto pid = s.layout.pyramids.index_sensor({1, 0.001, 0.001});
  REQUIRE(pre.visible_length[*pid] == Approx(9.0).epsilon(1e-6));
  Eigen::Vector3d x = Eigen::Vector3d(1, 0.001, 0.001).normalized() * std::sqrt(10.0);
  auto r = put(s, x, {0, 0, 0}, 0.1);
  rebuild_pyramid_index(s);
  update(s, pre, Exec::Serial);
  CHECK(s.arena.at(r).weight == 0.1);
  update(s, pre, Exec::Parallel);
  CHECK(s.arena.at(r).weight == 0.1);
}

TEST_CASE("no measurements scales visible particles by the miss probability") {
  Config c = testutil::small_config();
  c.filter.empty_pyramid_visible = true;
  for (Exec e : {Exec::Serial, Exec::Parallel}) {
    MapState s(c);
    auto pre = prepare(s, {});
    testutil::Gen gen(4);
    std::vector<std::pair<SlotRef, double>> refs;
    for (int i = 0; i < 300; ++i) {
      double w = gen.uniform(0.01, 1);
      refs.push_back({put(s, gen.in_box({0.3, -1.5, -0.5}, {1.9, 1.5, 0.5}), {0, 0, 0}, w), w});
    }
    rebuild_pyramid_index(s);
    update(s, pre, e);
    for (auto [r, w] : refs) {
      Eigen::Vector3d d = s.arena.at(r).position.cast<double>();
      bool visible = d.norm() >= c.map.robot_radius && s.layout.pyramids.index_sensor(d).has_value();
      CHECK(s.arena.at(r).weight == (visible ? w * (1.0 - c.filter.P_d) : w));
    }
  }
}

TEST_CASE("gated update matches the ungated equations") {
  Config c = testutil::small_config();
  c.filter.L_max = 2e5;
  testutil::Gen gen(31);
  for (int trial = 0; trial < 10; ++trial) {
    MapState s(c);
    std::vector<Eigen::Vector3d> z;
    int m = gen.integer(1, 20);
    for (int j = 0; j < m; ++j) z.push_back(gen.in_box({0.5, -1.5, -0.6}, {1.9, 1.5, 0.6}));
    auto pre = prepare(s, z);
    int n = gen.integer(1, 200);
    for (int i = 0; i < n; ++i) {
      Eigen::Vector3d p = gen.coin() ? z[gen.integer(0, m - 1)] + 0.03 * Eigen::Vector3d(gen.normal(), gen.normal(), gen.normal())
                                     : gen.in_box({0.3, -1.8, -0.8}, {1.9, 1.8, 0.8});
      put(s, p, {0, 0, 0}, gen.uniform(0.001, 0.2));
    }
    rebuild_pyramid_index(s);
    auto want = oracle_update(s, pre);
    const double bound = double(pre.num_binned()) * c.filter.P_d * c.map.epsilon / c.filter.kappa;
    for (Exec e : {Exec::Serial, Exec::Parallel}) {
      MapState t = s;
      update(t, pre, e);
      double worst = 0;
      for (auto [k, w] : want) {
        double d = std::abs(t.arena.at({k.first, k.second}).weight - w);
        CHECK(d <= bound);
        worst = std::max(worst, d);
      }
      CHECK(worst < 1e-9);
    }
  }
}

TEST_CASE("serial and parallel update agree") {
  Config c = testutil::small_config();
  c.filter.L_max = 2e5;
  MapState s(c);
  testutil::Gen gen(9);
  std::vector<Eigen::Vector3d> z;
  for (int j = 0; j < 80; ++j) z.push_back(gen.in_box({0.5, -1.5, -0.6}, {1.9, 1.5, 0.6}));
  auto pre = prepare(s, z);
  for (int i = 0; i < 2000; ++i)
    put(s, gen.in_box({0.2, -1.9, -0.9}, {1.9, 1.9, 0.9}), {0, 0, 0}, gen.uniform(0.001, 0.05),
        gen.integer(0, 4) == 0 ? ParticleFlag::Newborn : ParticleFlag::Survived);
  rebuild_pyramid_index(s);
  MapState a = s, b = s;
  update_serial(a, pre);
  update_parallel(b, pre);
  for (std::uint32_t v = 0; v < a.arena.num_voxels(); ++v)
    for (std::size_t i = 0; i < a.arena.slots_per_voxel(); ++i) {
      const Particle& p = a.arena.voxel_slots(v)[i];
      const Particle& q = b.arena.voxel_slots(v)[i];
      REQUIRE(p.flag == q.flag);
      if (p.flag != ParticleFlag::Vacant) CHECK(q.weight == Approx(p.weight).epsilon(1e-12));
    }
}

TEST_CASE("birth count and prior weight") {
  Config c = testutil::small_config();
  c.filter.L_max = 2e5;
  c.filter.v_b = 0.1;
  MapState s(c);
  std::vector<Eigen::Vector3d> z;
  for (int j = 0; j < 10; ++j) z.emplace_back(1.2, -1.0 + 0.22 * j, 0.4);
  auto pre = prepare(s, z);
  REQUIRE(pre.num_binned() == 10);
  std::vector<VelocityLabel> labels(pre.points.size());
  auto st = birth(s, pre, labels);
  CHECK(st.born == 200);
  CHECK(st.dropped == 0);
  CHECK(st.prior_weight == Approx(5e-4));
  double sum = 0;
  for (const auto& p : live_particles(s)) {
    CHECK(p.flag == ParticleFlag::Newborn);
    CHECK(p.weight == Approx(5e-4));
    sum += p.weight;
  }
  CHECK(sum == Approx(0.1).epsilon(1e-12));
}

TEST_CASE("birth without a cohort mass uses the initial weight") {
  Config c = testutil::small_config();
  MapState s(c);
  auto pre = prepare(s, {{1.2, 0.3, 0.4}});
  auto st = birth(s, pre, std::vector<VelocityLabel>(1));
  CHECK(st.prior_weight == Approx(c.filter.w_init));
  CHECK(birth(s, prepare(s, {}), {}).born == 0);
}

TEST_CASE("ground point births static particles") {
  Config c = testutil::small_config();
  MapState s(c);
  auto pre = prepare(s, {{1.2, 0.3, -0.5}});
  std::vector<VelocityLabel> labels(1);
  labels[0].kind = LabelKind::Static;
  birth(s, pre, labels);
  auto ps = live_particles(s);
  CHECK(ps.size() == 20);
  for (const auto& p : ps) CHECK(p.velocity == Eigen::Vector3f::Zero());
}

TEST_CASE("birth splits by the dynamic coefficient") {
  Config c = testutil::small_config();
  Eigen::Vector3d z(1.25, 0.33, 0.45);
  auto count_moving = [&](MapMode mode, LabelKind kind, double l1) {
    c.mode = mode;
    MapState s(c);
    auto pre = prepare(s, {z});
    s.lambda_dyn[*s.layout.voxels.index(z, s.center)] = l1;
    std::vector<VelocityLabel> labels(1);
    labels[0].kind = kind;
    labels[0].velocity = {1, 0, 0};
    birth(s, pre, labels);
    int moving = 0;
    for (const auto& p : live_particles(s)) moving += p.velocity.norm() > 0;
    return moving;
  };
  CHECK(count_moving(MapMode::Dynamic, LabelKind::Unknown, 0.4) == 8);
  CHECK(count_moving(MapMode::Dynamic, LabelKind::Estimated, 0.4) == 8);
  CHECK(count_moving(MapMode::Dynamic, LabelKind::Unknown, 0.0) == 0);
  CHECK(count_moving(MapMode::Dynamic, LabelKind::Unknown, 1.0) == 20);
  CHECK(count_moving(MapMode::Random, LabelKind::Static, 0.0) == 20);
  CHECK(count_moving(MapMode::Static, LabelKind::Unknown, 1.0) == 0);
}

TEST_CASE("estimated label centres the gaussian share") {
  Config c = testutil::small_config();
  c.filter.sigma_vb = 0.01;
  c.filter.v_max = 0.1;
  MapState s(c);
  Eigen::Vector3d z(1.25, 0.33, 0.45);
  auto pre = prepare(s, {z});
  s.lambda_dyn[*s.layout.voxels.index(z, s.center)] = 0.4;
  std::vector<VelocityLabel> labels(1);
  labels[0].kind = LabelKind::Estimated;
  labels[0].velocity = {2, 0, 0};
  birth(s, pre, labels);
  int near = 0;
  for (const auto& p : live_particles(s)) near += (p.velocity.cast<double>() - labels[0].velocity).norm() < 0.1;
  CHECK(near == 4);
}

TEST_CASE("newborn cohort mass equals the configured mass") {
  Config c = testutil::small_config();
  c.filter.L_max = 2e5;
  testutil::Gen gen(12);
  for (int trial = 0; trial < 20; ++trial) {
    c.filter.v_b = gen.uniform(0.01, 2.0);
    c.filter.L_b = gen.integer(1, 30);
    MapState s(c);
    std::vector<Eigen::Vector3d> z;
    int m = gen.integer(1, 30);
    for (int j = 0; j < m; ++j) z.push_back(gen.in_box({0.5, -1.5, -0.6}, {1.9, 1.5, 0.6}));
    auto pre = prepare(s, z);
    auto st = birth(s, pre, std::vector<VelocityLabel>(pre.points.size()));
    CHECK(st.dropped == 0);
    double sum = 0;
    for (const auto& p : live_particles(s)) sum += p.weight;
    CHECK(sum == Approx(c.filter.v_b).epsilon(1e-12));
  }
}

TEST_CASE("resampling two particles keeps both at the mean weight") {
  MapState s(resample_config());
  auto a = put(s, {0.05, 0.05, 0.05}, {0, 0, 0}, 0.3);
  auto b = put(s, {0.06, 0.05, 0.05}, {0, 0, 0}, 0.2);
  resample(s, Exec::Serial);
  CHECK(s.arena.at(a).weight == Approx(0.25));
  CHECK(s.arena.at(b).weight == Approx(0.25));
  CHECK(s.live() == 2);
}

TEST_CASE("resampling caps a crowded voxel") {
  MapState s(resample_config());
  REQUIRE(s.layout.resample_cap == 100);
  testutil::Gen gen(2);
  double E = 0;
  for (int i = 0; i < 300; ++i) {
    double w = gen.uniform(0, 0.01);
    E += w;
    put(s, {0.05, 0.05, 0.05}, {0, 0, 0}, w);
  }
  const auto v = *s.layout.voxels.index({0.05, 0.05, 0.05}, s.center);
  for (Exec e : {Exec::Serial, Exec::Parallel}) {
    MapState t = s;
    resample(t, e);
    CHECK(t.arena.live_count(v) == 100);
    CHECK(t.arena.counters_consistent());
    for (const auto& p : live_particles(t)) CHECK(p.weight == Approx(E / 100));
  }
}

TEST_CASE("resampling leaves empty voxels and drops weightless ones") {
  MapState s(resample_config());
  resample(s);
  CHECK(s.live() == 0);
  put(s, {0.5, 0.5, 0.5}, {0, 0, 0}, 0.0);
  resample(s);
  CHECK(s.live() == 0);
}

TEST_CASE("systematic selection") {
  CHECK(systematic_select({1, 2, 3}, 5, 0.5) == std::vector<std::uint32_t>{0, 1, 2});
  auto k = systematic_select({0, 0, 10, 0, 0}, 2, 0.3);
  CHECK(k == std::vector<std::uint32_t>{2});
  testutil::Gen gen(6);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> w(gen.integer(2, 60));
    for (auto& x : w) x = gen.uniform(0, 1);
    std::size_t cap = gen.integer(1, 40);
    auto sel = systematic_select(w, cap, gen.uniform(0, 1));
    CHECK(sel.size() <= std::min(cap, w.size()));
    CHECK(std::is_sorted(sel.begin(), sel.end()));
    CHECK(std::adjacent_find(sel.begin(), sel.end()) == sel.end());
  }
}

TEST_CASE("evidence coefficient") {
  CHECK(dst_lambda1({0.2, 0.6, 0.2}) == Approx(0.3));
  CHECK(1.0 - dst_lambda1({0.2, 0.6, 0.2}) == Approx(0.7));
  CHECK(dst_lambda1({0, 1, 0}) == 0.0);
  CHECK(dst_lambda1({0, 0, 0}) == 0.5);

  Particle ps[4];
  ps[0] = make_particle({0, 0, 0}, {1, 0, 0}, 0.2);
  ps[1] = make_particle({0, 0, 0}, {0, 0, 0}, 0.6);
  ps[2] = make_particle({0, 0, 0}, {0.1, 0, 0}, 0.2);
  auto m = voxel_dst_masses(ps, 4, 0.2);
  CHECK(m.dynamic == Approx(0.2));
  CHECK(m.stat == Approx(0.6));
  CHECK(m.ambiguous == Approx(0.2));

  MapState s(resample_config());
  put(s, {0.05, 0.05, 0.05}, {0, 0, 0}, 0.4);
  auto d = dst_coefficients(s, 0.2);
  auto v = *s.layout.voxels.index({0.05, 0.05, 0.05}, s.center);
  CHECK(d.lambda1[v] == 0.0);
  CHECK(d.lambda2(v) == 1.0);
  CHECK(d.lambda1[(v + 7) % d.lambda1.size()] == 0.5);
}

TEST_CASE("fused pass records mass and coefficient") {
  MapState s(resample_config());
  put(s, {0.05, 0.05, 0.05}, {1, 0, 0}, 0.2);
  put(s, {0.05, 0.05, 0.05}, {0, 0, 0}, 0.6);
  auto v = *s.layout.voxels.index({0.05, 0.05, 0.05}, s.center);
  resample_fused(s);
  CHECK(s.voxel_mass[v] == Approx(0.8));
  CHECK(s.lambda_dyn[v] == Approx(0.25));
}

}
