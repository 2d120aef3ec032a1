#include "dsp/velocity_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "dsp/hungarian.hpp"

namespace dsp {

GroundSplit segment_ground(const std::vector<Eigen::Vector3d>& points, double thresh) {
  GroundSplit s;
  for (std::uint32_t i = 0; i < points.size(); ++i) (points[i].z() <= thresh ? s.ground : s.rest).push_back(i);
  return s;
}

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

CellKey cell_of(const Eigen::Vector3d& p, double s) {
  return {static_cast<std::int64_t>(std::floor(p.x() / s)), static_cast<std::int64_t>(std::floor(p.y() / s)),
          static_cast<std::int64_t>(std::floor(p.z() / s))};
}

}  // namespace

std::vector<Cluster> extract_clusters(const std::vector<Eigen::Vector3d>& points,
                                      const std::vector<std::uint32_t>& subset, double cluster_dist,
                                      int min_cluster_size) {
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> grid;
  for (std::uint32_t k = 0; k < subset.size(); ++k) grid[cell_of(points[subset[k]], cluster_dist)].push_back(k);

  const double d2 = cluster_dist * cluster_dist;
  std::vector<char> seen(subset.size(), 0);
  std::vector<Cluster> out;
  std::vector<std::uint32_t> queue;
  for (std::uint32_t seed = 0; seed < subset.size(); ++seed) {
    if (seen[seed]) continue;
    seen[seed] = 1;
    queue.assign(1, seed);
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const Eigen::Vector3d& p = points[subset[queue[q]]];
      CellKey c = cell_of(p, cluster_dist);
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz) {
            auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
            if (it == grid.end()) continue;
            for (std::uint32_t k : it->second) {
              if (seen[k]) continue;
              if ((points[subset[k]] - p).squaredNorm() <= d2) {
                seen[k] = 1;
                queue.push_back(k);
              }
            }
          }
    }
    if (static_cast<int>(queue.size()) < min_cluster_size) continue;
    Cluster cl;
    std::sort(queue.begin(), queue.end());
    for (std::uint32_t k : queue) {
      cl.members.push_back(subset[k]);
      cl.centroid += points[subset[k]];
    }
    cl.point_count = cl.members.size();
    cl.centroid /= double(cl.point_count);
    out.push_back(std::move(cl));
  }
  return out;
}

double match_cost(const Cluster& a, const Cluster& b, double w_count) {
  double na = double(a.point_count), nb = double(b.point_count);
  double count_term = std::max(na, nb) > 0 ? std::abs(na - nb) / std::max(na, nb) : 0.0;
  return (a.centroid - b.centroid).norm() + w_count * count_term;
}

std::vector<int> match_clusters(const std::vector<Cluster>& prev, const std::vector<Cluster>& cur,
                                const MatchParams& params) {
  std::vector<int> out(cur.size(), -1);
  if (prev.empty() || cur.empty()) return out;
  constexpr double kForbidden = 1e9;
  Eigen::MatrixXd cost(cur.size(), prev.size());
  bool any = false;
  for (std::size_t i = 0; i < cur.size(); ++i)
    for (std::size_t j = 0; j < prev.size(); ++j) {
      bool ok = (cur[i].centroid - prev[j].centroid).norm() <= params.gate_dist;
      cost(i, j) = ok ? match_cost(cur[i], prev[j], params.w_count) : kForbidden;
      any = any || ok;
    }
  if (!any) return out;
  auto a = solve_assignment(cost);
  for (std::size_t i = 0; i < cur.size(); ++i)
    if (a[i] >= 0 && cost(i, a[i]) < kForbidden) out[i] = a[i];
  return out;
}

VelocityEstimator::VelocityEstimator(const VelocityParams& params, double filter_resolution, double v_max)
    : params_(params),
      cluster_dist_(params.cluster_dist > 0 ? params.cluster_dist : 2 * filter_resolution),
      v_max_(v_max) {}

std::vector<VelocityLabel> VelocityEstimator::estimate(const std::vector<Eigen::Vector3d>& points, double dt) {
  std::vector<VelocityLabel> labels(points.size());
  auto split = segment_ground(points, params_.ground_height_thresh);
  for (auto i : split.ground) labels[i].kind = LabelKind::Static;

  cur_ = extract_clusters(points, split.rest, cluster_dist_, params_.min_cluster_size);
  prev_before_ = prev_;
  match_.assign(cur_.size(), -1);
  if (dt > 0 && !prev_.empty()) {
    match_ = match_clusters(prev_, cur_, MatchParams{v_max_ * dt, params_.w_count});
    for (std::size_t c = 0; c < cur_.size(); ++c) {
      if (match_[c] < 0) continue;
      Eigen::Vector3d v = (cur_[c].centroid - prev_[match_[c]].centroid) / dt;
      for (auto i : cur_[c].members) {
        labels[i].kind = LabelKind::Estimated;
        labels[i].velocity = v;
      }
    }
  }
  prev_ = cur_;
  return labels;
}

}  // namespace dsp
