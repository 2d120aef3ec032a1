#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "dsp/error.hpp"
#include "dsp/geometry.hpp"
#include "helpers.hpp"

using namespace dsp;
using doctest::Approx;

TEST_SUITE("geometry") {

TEST_CASE("spherical coordinates of axis points") {
  auto a = to_spherical({1, 0, 0});
  CHECK(a.r == Approx(1));
  CHECK(a.alpha == Approx(kPi / 2));
  CHECK(a.beta == Approx(0));

  auto b = to_spherical({0, -1, 0});
  CHECK(b.r == Approx(1));
  CHECK(b.alpha == Approx(kPi / 2));
  CHECK(b.beta == Approx(3 * kPi / 2));

  auto c = to_spherical({0, 0, 2});
  CHECK(c.r == Approx(2));
  CHECK(c.alpha == 0.0);
  CHECK(c.beta == 0.0);
}

TEST_CASE("pose maps sensor to world and back") {
  Pose p;
  p.position = {1, 2, 3};
  p.orientation = Eigen::AngleAxisd(0.7, Eigen::Vector3d(0.2, 0.3, 1).normalized());
  Eigen::Vector3d x(0.4, -1.1, 2.0);
  CHECK((p.to_sensor(p.to_world(x)) - x).norm() < 1e-12);
  CHECK(std::abs(p.orientation.norm() - 1.0) < 1e-9);
}

TEST_CASE("voxel index convention") {
  VoxelGrid g({10, 10, 6}, 0.2);
  Eigen::Vector3d c(1.5, -2.0, 0.7);
  CHECK(g.nx() == 50);
  CHECK(g.ny() == 50);
  CHECK(g.nz() == 30);
  REQUIRE(g.index(c, c));
  CHECK(*g.index(c, c) == 38775u);
  CHECK_FALSE(g.index(c + Eigen::Vector3d(5.1, 0, 0), c));
  const Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  auto corner = g.index(Eigen::Vector3d(-5.0, -5.0, -3.0), origin);
  REQUIRE(corner);
  CHECK(*corner == 0u);
  CHECK_FALSE(g.index(c + Eigen::Vector3d(5.0, 0, 0), c));
}

TEST_CASE("voxel edges round up to whole voxels") {
  VoxelGrid g({1.05, 1.0, 0.5}, 0.2);
  CHECK(g.nx() == 6);
  CHECK(g.ny() == 5);
  CHECK(g.nz() == 3);
  CHECK(g.size().x() == Approx(1.2));
}

TEST_CASE("pyramid index on the full sphere") {
  PyramidGrid g(kPi / 2, 2 * kPi, kPi);
  CHECK(g.n_azimuth() == 4);
  CHECK(g.n_zenith() == 2);
  auto id = g.index_sensor({1, 0, 0});
  REQUIRE(id);
  CHECK(*id == 4);
  CHECK(*g.index_sensor({2, 0, 0}) == *id);
}

TEST_CASE("pyramid index outside a narrow field of view") {
  PyramidGrid g(deg2rad(3), kPi / 2, deg2rad(60));
  CHECK_FALSE(g.index_sensor({-1, 0, 0}));
  CHECK_FALSE(g.index_sensor({0, 0, 1}));
  CHECK_FALSE(g.index_sensor({0, 0, 0}));
  auto a = g.index_sensor({1, 0.2, 0.1});
  REQUIRE(a);
  CHECK(g.index_sensor({3, 0.6, 0.3}) == a);
}

TEST_CASE("neighbourhood sizes") {
  PyramidGrid g(deg2rad(10), 2 * kPi, kPi);
  int interior = 9 * g.n_azimuth() + 5;
  auto n1 = g.neighbors(interior, 1);
  CHECK(n1.size() == 9);
  CHECK(std::count(n1.begin(), n1.end(), interior) == 1);
  CHECK(g.neighbors(interior, 0) == std::vector<int>{interior});
}

TEST_CASE("pole row neighbourhood matches a clamped window enumeration") {
  PyramidGrid g(kPi / 4, 2 * kPi, kPi);
  const int nb = g.n_azimuth(), na = g.n_zenith();
  for (int col = 0; col < nb; ++col) {
    auto got = g.neighbors(col, 1);
    std::vector<int> want;
    for (int a = 0; a < na; ++a)
      for (int b = 0; b < nb; ++b) {
        int db = std::abs(b - col);
        db = std::min(db, nb - db);
        if (a <= 1 && db <= 1) want.push_back(a * nb + b);
      }
    CHECK(got == want);
    CHECK(got.size() == 6);
  }
}

TEST_CASE("neighbour table mirrors the grid") {
  PyramidGrid g(deg2rad(6), kPi / 2, deg2rad(60));
  NeighborTable t(g, 2);
  for (int id = 0; id < g.count(); ++id) {
    auto n = g.neighbors(id, 2);
    REQUIRE(t.size(id) == n.size());
    CHECK(std::equal(t.begin(id), t.end(id), n.begin(),
                     [](std::uint32_t a, int b) { return a == static_cast<std::uint32_t>(b); }));
  }
}

TEST_CASE("activation angle for a range-proportional noise model") {
  MapConfig m;
  m.robot_radius = 0.15;
  m.noise.kind = NoiseModel::Kind::Linear;
  m.noise.sigma = 0.01;
  m.epsilon = 0.01;
  m.fov_v = deg2rad(60);
  double t = theta_prime_max(m);
  CHECK(t == Approx(0.07553522103204695).epsilon(1e-12));
  CHECK(rad2deg(t) >= 2.0);
  CHECK(rad2deg(t) <= 5.0);

  MapConfig m2 = m;
  m2.epsilon = 0.02;
  CHECK(theta_prime_max(m2) < t);
  double prev = t;
  for (double e : {0.05, 0.1, 0.5, 1.0}) {
    m2.epsilon = e;
    double cur = theta_prime_max(m2);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("activation angle for constant noise matches a density threshold search") {
  MapConfig m;
  m.noise.kind = NoiseModel::Kind::Constant;
  m.noise.sigma = 0.05;
  m.robot_radius = 0.5;
  m.fov_v = deg2rad(60);
  m.epsilon = 0.01;

  double lo = 0, hi = 1;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (gaussian_density(mid * mid, 0.05) > m.epsilon)
      lo = mid;
    else
      hi = mid;
  }
  double oracle = std::asin(lo / (m.robot_radius * std::cos(0.5 * m.fov_v)));
  double t = theta_prime_max(m);
  CHECK(t == Approx(oracle).epsilon(1e-9));
  CHECK(t == Approx(0.5675157233023768).epsilon(1e-12));
}

TEST_CASE("activation angle infeasible") {
  MapConfig m;
  m.noise.kind = NoiseModel::Kind::Constant;
  m.noise.sigma = 0.5;
  m.robot_radius = 0.05;
  m.epsilon = 1e-6;
  CHECK_THROWS_AS(theta_prime_max(m), InfeasibleError);
  m.epsilon = 0;
  CHECK_THROWS_AS(theta_prime_max(m), InfeasibleError);
}

TEST_CASE("activation n") {
  CHECK(activation_n_from(deg2rad(4.328), deg2rad(3)) == 2);
  CHECK(activation_n_from(deg2rad(3), deg2rad(3)) == 1);
  CHECK(activation_n_from(0, deg2rad(3)) == 0);
  MapConfig m;
  m.activation_n = 4;
  CHECK(effective_activation_n(m) == 4);
}

TEST_CASE("lower bound distance") {
  CHECK(lower_bound_distance(1, kPi / 2, deg2rad(30)) == Approx(0.5));
  CHECK(lower_bound_distance(2, deg2rad(30), deg2rad(90)) == Approx(1.0));
}

TEST_CASE("gaussian density values") {
  CHECK(gaussian_density(0, 1) == Approx(0.0634936359342410));
  CHECK(gaussian_density(3, 1) == Approx(0.0634936359342410 * std::exp(-1.5)));
  CHECK(gaussian_density(3, 1) == Approx(0.01417).epsilon(1e-3));
}

TEST_CASE("outside the activation cone the density stays below epsilon") {
  MapConfig m;
  m.robot_radius = 0.15;
  m.noise.sigma = 0.01;
  m.epsilon = 0.01;
  m.fov_v = deg2rad(60);
  const double tp = theta_prime_max(m);
  testutil::Gen gen(11);
  for (int i = 0; i < 10000; ++i) {
    double r = gen.uniform(m.robot_radius, 8.0);
    double alpha = gen.uniform(0.5 * (kPi - m.fov_v), 0.5 * (kPi + m.fov_v));
    double d = lower_bound_distance(r, alpha, tp) * gen.uniform(1.0, 3.0);
    CHECK(gaussian_density(d * d, m.noise.rho(r)) <= m.epsilon * (1 + 1e-9));
  }
}

}
