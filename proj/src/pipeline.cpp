#include "dsp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>
#include <tuple>

#include "dsp/error.hpp"

namespace dsp {

std::size_t PreprocessedFrame::num_binned() const {
  return std::accumulate(bin_counts.begin(), bin_counts.end(), std::size_t{0});
}

std::vector<Eigen::Vector3d> voxel_filter(const std::vector<Eigen::Vector3d>& points, double res) {
  struct Acc {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    std::size_t n = 0;
  };
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, Acc> cells;
  for (const auto& p : points) {
    auto key = std::make_tuple(static_cast<std::int64_t>(std::floor(p.x() / res)),
                               static_cast<std::int64_t>(std::floor(p.y() / res)),
                               static_cast<std::int64_t>(std::floor(p.z() / res)));
    auto& a = cells[key];
    a.sum += p;
    ++a.n;
  }
  std::vector<Eigen::Vector3d> out;
  out.reserve(cells.size());
  for (const auto& [k, a] : cells) out.push_back(a.sum / double(a.n));
  return out;
}

PreprocessedFrame preprocess(const Frame& frame, const Config& cfg, const MapLayout& layout,
                             std::optional<double> prev_timestamp) {
  PreprocessedFrame pre;
  pre.timestamp = frame.timestamp;
  pre.pose = frame.pose;
  if (prev_timestamp) {
    pre.dt = frame.timestamp - *prev_timestamp;
    if (!(pre.dt > 0))
      throw NonMonotoneTimestamp("timestamp " + std::to_string(frame.timestamp) + " does not follow " +
                                 std::to_string(*prev_timestamp));
  }
  pre.raw_points = frame.points.size();

  std::vector<Eigen::Vector3d> sensor_pts;
  sensor_pts.reserve(frame.points.size());
  for (const auto& p : frame.points)
    if (p.allFinite()) sensor_pts.push_back(p.cast<double>());
  auto filtered = voxel_filter(sensor_pts, cfg.map.filter_resolution);
  pre.filtered_points = filtered.size();

  const int np = layout.pyramids.count();
  pre.bin_capacity = layout.point_bin_capacity;
  pre.bins.resize(std::size_t(np) * pre.bin_capacity);
  pre.bin_counts.assign(np, 0);
  pre.visible_length.assign(np, 0.0f);

  const Eigen::Vector3d center = frame.pose.position;
  for (const auto& ps : filtered) {
    Eigen::Vector3d pw = frame.pose.to_world(ps);
    if (!layout.voxels.contains(pw, center)) {
      ++pre.outside_map;
      continue;
    }
    auto pid = layout.pyramids.index_sensor(ps);
    if (!pid) {
      ++pre.not_in_fov;
      continue;
    }
    auto src = static_cast<std::uint32_t>(pre.points.size());
    pre.points.push_back(pw);
    float r2 = static_cast<float>((pw - center).squaredNorm());
    pre.visible_length[*pid] = std::max(pre.visible_length[*pid], r2);
    auto& cnt = pre.bin_counts[*pid];
    if (cnt >= pre.bin_capacity) {
      ++pre.bin_dropped;
      continue;
    }
    pre.bins[std::size_t(*pid) * pre.bin_capacity + cnt] = MeasurementPoint{pw.cast<float>(), r2, src};
    ++cnt;
  }
  return pre;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

DspMap::DspMap(const Config& cfg, Exec exec)
    : state_(cfg),
      estimator_(cfg.velocity, cfg.map.filter_resolution, cfg.filter.v_max),
      exec_(exec) {}

FrameReport DspMap::step(const Frame& frame) {
  FrameReport rep;
  const auto t_start = Clock::now();
  auto t0 = t_start;
  PreprocessedFrame pre = preprocess(frame, state_.cfg, state_.layout, last_timestamp_);
  rep.ms.preprocess = ms_since(t0);

  MapState& s = state_;
  ++s.frame;
  s.set_pose(frame.pose);
  s.time = frame.timestamp;
  rep.frame = s.frame;
  rep.timestamp = frame.timestamp;

  const bool use_velocity = s.cfg.mode == MapMode::Dynamic;
  labels_.assign(pre.points.size(), VelocityLabel{});
  double velocity_ms = 0;
  auto run_velocity = [&] {
    auto tv = Clock::now();
    labels_ = estimator_.estimate(pre.points, pre.dt);
    velocity_ms = ms_since(tv);
  };
  std::thread worker;
  if (use_velocity) {
    if (s.cfg.concurrent_velocity)
      worker = std::thread(run_velocity);
    else
      run_velocity();
  }

  t0 = Clock::now();
  s.last_dt = pre.dt;
  predict(s, pre.dt, exec_);
  rebuild_pyramid_index(s, exec_);
  rep.ms.predict = ms_since(t0);

  t0 = Clock::now();
  update(s, pre, exec_);
  rep.ms.update = ms_since(t0);

  if (worker.joinable()) worker.join();
  rep.ms.velocity = velocity_ms;

  t0 = Clock::now();
  resample_fused(s, exec_);
  rep.ms.resample = ms_since(t0);

  t0 = Clock::now();
  auto bs = birth(s, pre, labels_);
  rep.ms.birth = ms_since(t0);
  rep.ms.total = ms_since(t_start);

  last_timestamp_ = frame.timestamp;
  rep.points = pre.num_binned();
  rep.live = s.live();
  rep.born = bs.born;
  rep.pruned = s.pruned;
  rep.dropped_particles = s.arena.dropped_count;
  rep.dropped_index = s.index.dropped;
  rep.dropped_points = pre.bin_dropped;
  rep.not_in_fov = pre.not_in_fov;
  rep.clusters = use_velocity ? estimator_.clusters().size() : 0;
  if (use_velocity)
    rep.matched = static_cast<std::size_t>(
        std::count_if(estimator_.matches().begin(), estimator_.matches().end(), [](int m) { return m >= 0; }));
  return rep;
}

}  // namespace dsp
