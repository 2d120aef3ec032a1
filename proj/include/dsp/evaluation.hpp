#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dsp/config.hpp"
#include "dsp/error.hpp"
#include "dsp/frame.hpp"
#include "dsp/map_state.hpp"
#include "dsp/occupancy.hpp"
#include "dsp/simulator.hpp"

namespace dsp {

class ResolutionMismatch : public DataError {
 public:
  using DataError::DataError;
};
class EmptyOverlap : public Error {
 public:
  using Error::Error;
};
class NoParticles : public Error {
 public:
  using Error::Error;
};

struct PrCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

struct PrPoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  PrCounts counts;
};

struct PrCurve {
  std::vector<PrPoint> points;  // ordered by threshold
  double auc = 0;
  PrPoint best_f1() const;
};

double f1_score(double precision, double recall);
PrPoint pr_point(double threshold, const PrCounts& c);
// 0.05 .. 0.95 step 0.05
std::vector<double> default_thresholds();
// trapezoid over recall, extended flat to recall 0; points with no predictions are skipped
double pr_auc(const std::vector<PrPoint>& points);

// counts over observed cells only; throws ResolutionMismatch on lattice mismatch
std::vector<PrCounts> pr_counts(const OccupancyGrid& grid, const GroundTruthLayer& truth,
                                const std::vector<double>& thresholds);
PrCurve pr_curve(const std::vector<OccupancyGrid>& grids, const std::vector<const GroundTruthLayer*>& truth,
                 const std::vector<double>& thresholds);

struct VelocityGaussian {
  double timestamp = 0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d var = Eigen::Vector3d::Zero();
  bool has_var = true;
};

struct VelocitySample {
  double timestamp = 0;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
};

struct VelocityReport {
  double rmse = 0;
  double var = 0;
  double mbd = 0;
  bool has_var = false;
  std::size_t samples = 0;
};

double bhattacharyya_diag(const Eigen::Vector3d& mu1, const Eigen::Vector3d& var1, const Eigen::Vector3d& mu2,
                          const Eigen::Vector3d& var2);

// nearest-timestamp alignment within tol; var/mbd only over estimates carrying a variance
VelocityReport velocity_report(const std::vector<VelocityGaussian>& estimates,
                               const std::vector<VelocitySample>& truth, double sigma_gt = 0.1,
                               double tol = 1e-3);

// weighted mean/variance of live particle velocities within radius of gt_position
VelocityGaussian map_velocity_estimate(const MapState& s, const Eigen::Vector3d& gt_position, double radius = 0.5);

struct TrackEstimate {
  int id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d var = Eigen::Vector3d::Zero();
  bool has_var = false;
};

struct BaselineStep {
  double timestamp = 0;
  std::vector<TrackEstimate> tracks;
};

struct BaselineParams {
  VelocityParams velocity;
  double filter_resolution = 0.1;
  double v_max = 5.0;
  double accel_std = 1.0;
  double meas_std = 0.05;
  double init_vel_std = 2.0;
};

BaselineParams baseline_params(const Config& cfg);

// constant-velocity Kalman filter, state (p, v)
struct CvKalman {
  Eigen::Matrix<double, 6, 1> x = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 6> P = Eigen::Matrix<double, 6, 6>::Identity();

  void init(const Eigen::Vector3d& p, double pos_var, double vel_var);
  void predict(double dt, double accel_std);
  void update(const Eigen::Vector3d& z, double meas_var);
  Eigen::Vector3d position() const { return x.head<3>(); }
  Eigen::Vector3d velocity() const { return x.tail<3>(); }
  Eigen::Vector3d velocity_var() const { return P.diagonal().tail<3>(); }
};

struct TimedCloud {
  double timestamp = 0;
  std::vector<Eigen::Vector3d> points;  // world frame
};

// filtered world-frame clouds as the map pipeline sees them
std::vector<TimedCloud> world_clouds(const std::vector<Frame>& frames, const Config& cfg);

std::vector<BaselineStep> baseline_km_diff(const std::vector<TimedCloud>& clouds, const BaselineParams& p);
std::vector<BaselineStep> baseline_km_kf(const std::vector<TimedCloud>& clouds, const BaselineParams& p);

// track nearest to the position, nullopt when none lies within radius
std::optional<TrackEstimate> nearest_track(const BaselineStep& step, const Eigen::Vector3d& position, double radius);

}  // namespace dsp
