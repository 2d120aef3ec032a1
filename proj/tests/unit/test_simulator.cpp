#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "dsp/dataset_io.hpp"
#include "dsp/error.hpp"
#include "dsp/simulator.hpp"
#include "helpers.hpp"

using namespace dsp;
using doctest::Approx;

namespace {

const char* kWall = R"(
[world]
ground = false
duration = 1
frame_rate = 10
[sensor]
fov_h = 1
fov_v = 1
resolution = 1
max_range = 6
noise_model = linear
sigma = 0.01
[pose]
position = 0, 0, 0
[box]
min = 3, -5, -5
max = 4, 5, 5
)";

WorldSpec clutter() {
  WorldSpec w;
  w.boxes.push_back(Box{{2.1, -1.3, 0}, {2.9, -0.3, 1.2}});
  w.boxes.push_back(Box{{-3, 2, 0}, {-2, 3, 2}});
  w.cylinders.push_back(Cylinder{{1.5, 1.5}, 0.3, 0, 2.5});
  w.cylinders.push_back(Cylinder{{-1.7, -2.2}, 0.4, 0, 1.5});
  w.sensor.noise.sigma = 0;
  w.trajectory.push_back(TimedPose{0, Pose{{0, 0, 1}, Eigen::Quaterniond::Identity()}});
  return w;
}

// march along the ray by the distance field until the surface is reached
std::optional<double> sphere_trace(const WorldSpec& w, const Eigen::Vector3d& o, const Eigen::Vector3d& d, double max) {
  double t = 0;
  for (int i = 0; i < 100000 && t <= max; ++i) {
    double s = surface_distance(w, o + t * d);
    if (s < 1e-10) return t;
    t += s;
  }
  return std::nullopt;
}

std::string world_text(const std::string& extra) {
  return std::string(R"(
[world]
duration = 1
frame_rate = 10
map_size = 8, 8, 3
gt_resolutions = 0.2
[sensor]
fov_h = 90
fov_v = 60
resolution = 2
[pose]
position = 0, 0, 1
)") + extra;
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("wall straight ahead") {
  WorldSpec w = parse_world(kWall);
  w.sensor.noise.sigma = 0;
  auto rays = sensor_rays(w.sensor, w.sensor.resolution);
  REQUIRE(rays.size() == 1);
  CHECK((rays[0] - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
  SplitMix64 rng(1);
  Frame f = raycast_frame(w, pose_at(w, 0), 0, rng);
  REQUIRE(f.points.size() == 1);
  CHECK(f.points[0].x() == Approx(3.0).epsilon(1e-9));
}

TEST_CASE("nothing in range gives an empty frame") {
  WorldSpec w = parse_world(kWall);
  w.boxes.clear();
  SplitMix64 rng(1);
  CHECK(raycast_frame(w, pose_at(w, 0), 0, rng).points.empty());
}

TEST_CASE("range noise has the modelled spread") {
  WorldSpec w = parse_world(kWall);
  const Pose pose = pose_at(w, 0);
  double s = 0, s2 = 0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    auto rng = substream(7, Stream::Sim, k);
    double x = raycast_frame(w, pose, 0, rng).points.at(0).x();
    s += x;
    s2 += x * x;
  }
  double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  CHECK(mean == Approx(3.0).epsilon(1e-3));
  CHECK(sd == Approx(0.03).epsilon(0.05));
}

TEST_CASE("distance functions") {
  Box b{{0, 0, 0}, {1, 1, 1}};
  // unsigned distance to the nearest face, also from inside
  CHECK(box_distance(b, {0.5, 0.5, 0.5}) == Approx(0.5));
  CHECK(box_distance(b, {2, 0.5, 0.5}) == Approx(1.0));
  CHECK(box_distance(b, {2, 2, 0.5}) == Approx(std::sqrt(2.0)));
  Cylinder c{{0, 0}, 0.5, 0, 2};
  CHECK(cylinder_distance(c, {1.5, 0, 1}) == Approx(1.0));
  CHECK(cylinder_distance(c, {0, 0, 3}) == Approx(1.0));
  CHECK(cylinder_distance(c, {0.2, 0, 1}) == Approx(0.3));
}

TEST_CASE("noiseless ranges match a sphere traced oracle") {
  WorldSpec w = clutter();
  testutil::Gen gen(13);
  const Eigen::Vector3d o(0, 0, 1);
  int hits = 0;
  for (int i = 0; i < 2000; ++i) {
    Eigen::Vector3d d = gen.unit();
    auto a = cast_ray(w, o, d, 6.0);
    auto b = sphere_trace(w, o, d, 6.0);
    if (a && b) {
      CHECK(*a == Approx(*b).epsilon(1e-6));
      ++hits;
    } else if (a) {
      CHECK(surface_distance(w, o + *a * d) < 1e-6);
    } else if (b) {
      CHECK(*b > 6.0 - 1e-6);
    }
  }
  CHECK(hits > 500);
}

TEST_CASE("ground truth occupancy and observation") {
  WorldSpec w = parse_world(world_text("[box]\nmin = 2.1, -1, 0\nmax = 2.9, 1, 2\n"));
  w.ground = false;
  const Eigen::Vector3d o(0, 0, 1);
  ObservedAccumulator acc(Eigen::Vector3d(-5, -5, -2), Eigen::Vector3d(5, 5, 4), 0.2);
  for (const auto& d : sensor_rays(w.sensor, w.sensor.resolution / 4)) {
    auto hit = cast_ray(w, o, d, w.sensor.max_range);
    acc.add_ray(o, d, hit ? *hit : w.sensor.max_range);
  }
  auto layer = ground_truth_layer(w, o, 0.2, acc);
  auto id = [&](const Eigen::Vector3d& p) { return static_cast<std::uint32_t>(*layer.lattice.cell_of(p)); };
  auto occ = [&](const Eigen::Vector3d& p) {
    return std::binary_search(layer.occupied.begin(), layer.occupied.end(), id(p));
  };
  CHECK(std::is_sorted(layer.occupied.begin(), layer.occupied.end()));
  CHECK(occ({2.1, 0.1, 1.1}));
  CHECK_FALSE(occ({1.9, 0.1, 1.1}));
  CHECK(layer.observed[id({1.5, 0.1, 1.1})] == 1);
  CHECK(layer.observed[id({3.5, 0.1, 1.1})] == 0);
  CHECK(layer.observed[id({-1.5, 0.1, 1.1})] == 0);
}

TEST_CASE("agent motion") {
  WorldSpec w;
  Agent a;
  a.velocity = {1, 0};
  w.agents.push_back(a);
  step_world(w, 0.5);
  CHECK(w.agents[0].shape.center.x() == Approx(0.5));

  w.agents[0].shape.center = {3.6, 0};
  w.agents[0].bounds_max = {3.7, 10};
  step_world(w, 0.2);
  CHECK(w.agents[0].velocity.x() == Approx(-1));
  CHECK(w.agents[0].shape.center.x() == Approx(3.6));

  Agent b;
  b.motion = Agent::Motion::Waypoints;
  b.waypoints = {{0, 0}, {1, 0}, {1, 1}};
  b.shape.center = {0, 0};
  b.next_waypoint = 1;
  b.speed = 1;
  WorldSpec w2;
  w2.agents.push_back(b);
  step_world(w2, 1.5);
  CHECK((w2.agents[0].shape.center - Eigen::Vector2d(1, 0.5)).norm() < 1e-12);
  CHECK((w2.agents[0].velocity - Eigen::Vector2d(0, 1)).norm() < 1e-12);
}

TEST_CASE("agents stay inside their bounds") {
  WorldSpec w = load_world(testutil::source_path("worlds/square.world"));
  for (int k = 0; k < 2000; ++k) {
    step_world(w, 0.05);
    for (const auto& a : w.agents) {
      CHECK((a.shape.center.array() <= a.bounds_max.array() + 1e-9).all());
      CHECK((a.shape.center.array() >= a.bounds_min.array() - 1e-9).all());
    }
  }
}

TEST_CASE("trajectory interpolation") {
  WorldSpec w = parse_world(world_text("[pose]\nt = 2\nposition = 2, 0, 1\nyaw = 90\n"));
  CHECK((pose_at(w, 1.0).position - Eigen::Vector3d(1, 0, 1)).norm() < 1e-12);
  CHECK((pose_at(w, 5.0).position - Eigen::Vector3d(2, 0, 1)).norm() < 1e-12);
  Eigen::Vector3d fwd = pose_at(w, 2.0).orientation * Eigen::Vector3d::UnitX();
  CHECK((fwd - Eigen::Vector3d(0, 1, 0)).norm() < 1e-9);
  CHECK(frame_count(w) == 10);
}

TEST_CASE("world parse errors carry line numbers") {
  auto msg = [](const std::string& text) {
    try {
      parse_world(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(msg("[world]\nbogus = 1\n").find("line 2") != std::string::npos);
  CHECK(msg("\n\n[planet]\n").find("line 3") != std::string::npos);
  CHECK(msg("duration = 1\n").find("line 1") != std::string::npos);
  CHECK(msg("[world]\nduration = abc\n").find("line 2") != std::string::npos);
  CHECK(msg("[world]\nframe_rate = 0\n").find("frame_rate") != std::string::npos);
  CHECK_THROWS_AS(load_world("/nonexistent/x.world"), ConfigError);
}

TEST_CASE("zero duration simulates nothing") {
  WorldSpec w = parse_world(world_text(""));
  w.duration = 0;
  auto r = simulate(w);
  CHECK(r.frames.empty());
  CHECK(r.truth.steps.empty());
}

TEST_CASE("simulation is deterministic") {
  WorldSpec w = load_world(testutil::source_path("worlds/square.world"));
  w.duration = 0.5;
  w.gt_resolutions = {0.2};
  auto a = simulate(w), b = simulate(w);
  REQUIRE(a.frames.size() == b.frames.size());
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    REQUIRE(a.frames[k].points.size() == b.frames[k].points.size());
    CHECK(std::memcmp(a.frames[k].points.data(), b.frames[k].points.data(),
                      a.frames[k].points.size() * sizeof(Eigen::Vector3f)) == 0);
  }
  REQUIRE(a.truth.steps.size() == b.truth.steps.size());
  for (std::size_t k = 0; k < a.truth.steps.size(); ++k) {
    CHECK(a.truth.steps[k].layers[0].occupied == b.truth.steps[k].layers[0].occupied);
    CHECK(a.truth.steps[k].layers[0].observed == b.truth.steps[k].layers[0].observed);
  }
}

TEST_CASE("static world truth does not change") {
  WorldSpec w = parse_world(world_text("[box]\nmin = 2, -1, 0\nmax = 3, 1, 1\n[cylinder]\ncenter = 2.5, 2\nradius = 0.3\nz = 0, 2\n"));
  auto r = simulate(w);
  REQUIRE(r.truth.steps.size() == 10);
  for (const auto& s : r.truth.steps) CHECK(s.layers[0].occupied == r.truth.steps[0].layers[0].occupied);
}

TEST_CASE("agents only change cells they sweep") {
  WorldSpec w = load_world(testutil::source_path("worlds/square.world"));
  w.duration = 1;
  w.gt_resolutions = {0.2};
  auto r = simulate(w);
  const double dt = 1.0 / w.frame_rate;
  for (std::size_t k = 1; k < r.truth.steps.size(); ++k) {
    const auto& A = r.truth.steps[k - 1].layers[0];
    const auto& B = r.truth.steps[k].layers[0];
    REQUIRE(A.lattice == B.lattice);
    std::vector<std::uint32_t> diff;
    std::set_symmetric_difference(A.occupied.begin(), A.occupied.end(), B.occupied.begin(), B.occupied.end(),
                                  std::back_inserter(diff));
    for (auto id : diff) {
      Eigen::Vector2d c = A.lattice.cell_center(id).head<2>();
      bool near = false;
      for (std::size_t j = 0; j < w.agents.size(); ++j) {
        Eigen::Vector2d p = r.truth.steps[k].agents[j].position.head<2>();
        double reach = w.agents[j].shape.radius + 0.2 * std::sqrt(0.5) + 2.0 * dt;
        near = near || (c - p).norm() <= reach;
      }
      CHECK(near);
    }
  }
}

TEST_CASE("ground truth file round trip") {
  WorldSpec w = load_world(testutil::source_path("worlds/square.world"));
  w.duration = 0.3;
  auto r = simulate(w);
  auto path = std::filesystem::temp_directory_path() / ("dspmap_gt_" + std::to_string(::getpid()) + ".dspt");
  write_ground_truth(path.string(), r.truth);
  auto g = read_ground_truth(path.string());
  CHECK(g.resolutions == r.truth.resolutions);
  CHECK(g.num_agents == 3);
  REQUIRE(g.steps.size() == r.truth.steps.size());
  for (std::size_t k = 0; k < g.steps.size(); ++k) {
    CHECK(g.steps[k].timestamp == r.truth.steps[k].timestamp);
    CHECK(g.steps[k].agents[1].position == r.truth.steps[k].agents[1].position);
    for (std::size_t l = 0; l < g.steps[k].layers.size(); ++l) {
      CHECK(g.steps[k].layers[l].occupied == r.truth.steps[k].layers[l].occupied);
      CHECK(g.steps[k].layers[l].observed == r.truth.steps[k].layers[l].observed);
    }
  }
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(read_ground_truth(path.string()), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("dataset stream round trip") {
  WorldSpec w = load_world(testutil::source_path("worlds/square.world"));
  w.duration = 0.3;
  auto r = simulate(w);
  auto path = std::filesystem::temp_directory_path() / ("dspmap_ds_" + std::to_string(::getpid()) + ".dspd");
  {
    DatasetWriter out(path.string());
    for (const auto& f : r.frames) out.write(f);
    CHECK(out.frames() == r.frames.size());
  }
  auto back = read_dataset(path.string());
  REQUIRE(back.size() == r.frames.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    CHECK(back[k].timestamp == r.frames[k].timestamp);
    CHECK(back[k].points == r.frames[k].points);
    CHECK(back[k].pose.position == r.frames[k].pose.position);
  }
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  CHECK_THROWS_AS(read_dataset(path.string()), DataError);
  std::filesystem::remove(path);
}

}
