#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dsp/config.hpp"
#include "dsp/frame.hpp"
#include "dsp/geometry.hpp"
#include "dsp/occupancy.hpp"
#include "dsp/rng.hpp"

namespace dsp {

struct Box {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();
};

struct Cylinder {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.3;
  double z0 = 0;
  double z1 = 1.7;
};

struct Agent {
  enum class Motion { ConstantVelocity, Waypoints };
  Motion motion = Motion::ConstantVelocity;
  Cylinder shape;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
  Eigen::Vector2d bounds_min{-1e9, -1e9};
  Eigen::Vector2d bounds_max{1e9, 1e9};
  std::vector<Eigen::Vector2d> waypoints;
  std::size_t next_waypoint = 0;
  double speed = 1.0;

  Eigen::Vector3d position() const { return {shape.center.x(), shape.center.y(), 0.5 * (shape.z0 + shape.z1)}; }
  Eigen::Vector3d velocity3() const { return {velocity.x(), velocity.y(), 0.0}; }
};

struct SensorModel {
  double fov_h = deg2rad(90);
  double fov_v = deg2rad(60);
  double resolution = deg2rad(1);
  double max_range = 6.0;
  NoiseModel noise;
};

struct TimedPose {
  double t = 0;
  Pose pose;
};

struct WorldSpec {
  std::vector<Box> boxes;
  std::vector<Cylinder> cylinders;
  std::vector<Agent> agents;
  bool ground = true;
  bool eval_ignore_ground = false;
  SensorModel sensor;
  std::vector<TimedPose> trajectory;
  double frame_rate = 20;
  double duration = 10;
  std::uint64_t seed = 1;
  Eigen::Vector3d map_size{8, 8, 3};
  std::vector<double> gt_resolutions{0.1, 0.2, 0.3};
  int gt_stride = 1;
  double dense_factor = 4;
};

// flat [section] + key = value text; errors carry line numbers
WorldSpec parse_world(const std::string& text);
WorldSpec load_world(const std::string& path);

void step_world(WorldSpec& w, double dt);
Pose pose_at(const WorldSpec& w, double t);
std::size_t frame_count(const WorldSpec& w);

// nearest hit along a unit direction, nullopt beyond max_range
std::optional<double> cast_ray(const WorldSpec& w, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                               double max_range);
double surface_distance(const WorldSpec& w, const Eigen::Vector3d& p);
double box_distance(const Box& b, const Eigen::Vector3d& p);
double cylinder_distance(const Cylinder& c, const Eigen::Vector3d& p);

// sensor-frame unit ray directions on the (zenith, azimuth) grid of the given step
std::vector<Eigen::Vector3d> sensor_rays(const SensorModel& m, double step);

Frame raycast_frame(const WorldSpec& w, const Pose& pose, double t, SplitMix64& rng);

struct GroundTruthLayer {
  GridLattice lattice;
  std::vector<std::uint32_t> occupied;  // sorted cell ids
  std::vector<std::uint8_t> observed;   // one byte per cell
};

struct AgentTruth {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
};

struct GroundTruthStep {
  std::uint32_t frame = 0;
  double timestamp = 0;
  std::vector<AgentTruth> agents;
  std::vector<GroundTruthLayer> layers;  // one per resolution
};

struct GroundTruth {
  std::vector<double> resolutions;
  std::size_t num_agents = 0;
  std::vector<GroundTruthStep> steps;
};

// observed-voxel accumulator on a world-fixed lattice
class ObservedAccumulator {
 public:
  ObservedAccumulator(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double edge);
  void add_ray(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double length);
  bool observed(std::int64_t ix, std::int64_t iy, std::int64_t iz) const;
  double edge() const { return edge_; }

 private:
  double edge_;
  Eigen::Matrix<std::int64_t, 3, 1> lo_;
  Eigen::Matrix<std::int64_t, 3, 1> n_;
  std::vector<std::uint8_t> bits_;
};

GroundTruthLayer ground_truth_layer(const WorldSpec& w, const Eigen::Vector3d& center, double l_q,
                                    const ObservedAccumulator& acc);

struct SimulationResult {
  std::vector<Frame> frames;
  GroundTruth truth;
};

SimulationResult simulate(const WorldSpec& w);

// "DSPT", u32 version, u32 n_res, f64 res[], u32 n_agents, then per step:
// u32 frame, f64 t, agents (f64 pos xyz, f64 vel xyz), per resolution:
// i64 origin xyz, u32 dims xyz, u32 n_occ, u32 ids[n_occ], mask bitset ceil(count/8) bytes (LSB first)
void write_ground_truth(const std::string& path, const GroundTruth& gt);
GroundTruth read_ground_truth(const std::string& path);

}  // namespace dsp
