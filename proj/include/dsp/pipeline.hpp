#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "dsp/frame.hpp"
#include "dsp/map_state.hpp"
#include "dsp/phd_filter.hpp"
#include "dsp/velocity_estimator.hpp"

namespace dsp {

// one centroid per occupied Res cell, ordered by cell
std::vector<Eigen::Vector3d> voxel_filter(const std::vector<Eigen::Vector3d>& points, double res);

// throws NonMonotoneTimestamp when a previous timestamp is given and dt <= 0
PreprocessedFrame preprocess(const Frame& frame, const Config& cfg, const MapLayout& layout,
                             std::optional<double> prev_timestamp);

struct PhaseTimes {
  double preprocess = 0;
  double velocity = 0;
  double predict = 0;
  double update = 0;
  double resample = 0;
  double birth = 0;
  double total = 0;
};

struct FrameReport {
  std::uint64_t frame = 0;
  double timestamp = 0;
  PhaseTimes ms;
  std::size_t points = 0;      // binned measurement points
  std::size_t live = 0;
  std::size_t born = 0;
  std::size_t pruned = 0;
  std::size_t dropped_particles = 0;  // cumulative arena drops
  std::size_t dropped_index = 0;
  std::size_t dropped_points = 0;
  std::size_t not_in_fov = 0;
  std::size_t clusters = 0;
  std::size_t matched = 0;
};

class DspMap {
 public:
  explicit DspMap(const Config& cfg, Exec exec = Exec::Parallel);

  FrameReport step(const Frame& frame);

  MapState& state() { return state_; }
  const MapState& state() const { return state_; }
  const VelocityEstimator& velocity_estimator() const { return estimator_; }
  const std::vector<VelocityLabel>& last_labels() const { return labels_; }

 private:
  MapState state_;
  VelocityEstimator estimator_;
  Exec exec_;
  std::optional<double> last_timestamp_;
  std::vector<VelocityLabel> labels_;
};

}  // namespace dsp
