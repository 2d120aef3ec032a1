#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "dsp/config.hpp"

namespace dsp {

enum class LabelKind : std::uint8_t { Static, Estimated, Unknown };

struct VelocityLabel {
  LabelKind kind = LabelKind::Unknown;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
};

struct Cluster {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  std::size_t point_count = 0;
  std::vector<std::uint32_t> members;
};

struct GroundSplit {
  std::vector<std::uint32_t> ground;
  std::vector<std::uint32_t> rest;
};

GroundSplit segment_ground(const std::vector<Eigen::Vector3d>& points, double thresh);

// connected components of the subset under dist <= cluster_dist, via a hash grid
std::vector<Cluster> extract_clusters(const std::vector<Eigen::Vector3d>& points,
                                      const std::vector<std::uint32_t>& subset, double cluster_dist,
                                      int min_cluster_size);

struct MatchParams {
  double gate_dist = 1.0;
  double w_count = 1.0;
};

double match_cost(const Cluster& a, const Cluster& b, double w_count);

// result[cur] = index into prev, or -1 for a new obstacle
std::vector<int> match_clusters(const std::vector<Cluster>& prev, const std::vector<Cluster>& cur,
                                const MatchParams& params);

class VelocityEstimator {
 public:
  VelocityEstimator(const VelocityParams& params, double filter_resolution, double v_max);

  std::vector<VelocityLabel> estimate(const std::vector<Eigen::Vector3d>& points, double dt);
  void reset() { prev_.clear(); }

  const std::vector<Cluster>& clusters() const { return cur_; }
  const std::vector<Cluster>& previous() const { return prev_before_; }
  const std::vector<int>& matches() const { return match_; }
  double cluster_dist() const { return cluster_dist_; }
  double v_max() const { return v_max_; }
  const VelocityParams& params() const { return params_; }

 private:
  VelocityParams params_;
  double cluster_dist_;
  double v_max_;
  std::vector<Cluster> prev_;
  std::vector<Cluster> prev_before_;
  std::vector<Cluster> cur_;
  std::vector<int> match_;
};

}  // namespace dsp
