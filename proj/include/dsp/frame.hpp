#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "dsp/geometry.hpp"

namespace dsp {

struct Frame {
  double timestamp = 0;
  Pose pose;
  std::vector<Eigen::Vector3f> points;  // sensor frame
};

struct MeasurementPoint {
  Eigen::Vector3f position;  // world frame
  float range2 = 0;          // squared distance to the map center
  std::uint32_t source = 0;  // index into PreprocessedFrame::points
};

struct PreprocessedFrame {
  double timestamp = 0;
  double dt = 0;
  Pose pose;
  std::vector<Eigen::Vector3d> points;  // filtered, world frame, inside the map box

  std::size_t bin_capacity = 0;
  std::vector<MeasurementPoint> bins;    // pyramid-major, bin_capacity per pyramid
  std::vector<std::uint32_t> bin_counts;
  std::vector<float> visible_length;     // squared meters, 0 without points

  std::size_t raw_points = 0;
  std::size_t filtered_points = 0;
  std::size_t outside_map = 0;
  std::size_t not_in_fov = 0;
  std::size_t bin_dropped = 0;

  std::size_t num_pyramids() const { return bin_counts.size(); }
  const MeasurementPoint* bin(int p) const { return bins.data() + std::size_t(p) * bin_capacity; }
  std::size_t num_binned() const;
};

}  // namespace dsp
