#include "dsp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "dsp/pipeline.hpp"
#include "dsp/velocity_estimator.hpp"

namespace dsp {

double f1_score(double p, double r) {
  if (p + r <= 0) return 0.0;
  return 2 * p * r / (p + r);
}

PrPoint pr_point(double threshold, const PrCounts& c) {
  PrPoint p;
  p.threshold = threshold;
  p.counts = c;
  p.precision = (c.tp + c.fp) ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  p.recall = (c.tp + c.fn) ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  p.f1 = f1_score(p.precision, p.recall);
  return p;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 19; ++i) t.push_back(0.05 * i);
  return t;
}

PrPoint PrCurve::best_f1() const {
  PrPoint best;
  for (const auto& p : points)
    if (p.f1 > best.f1) best = p;
  return best;
}

double pr_auc(const std::vector<PrPoint>& points) {
  std::vector<std::pair<double, double>> rp;
  for (const auto& p : points)
    if (p.counts.tp + p.counts.fp > 0) rp.emplace_back(p.recall, p.precision);
  if (rp.empty()) return 0.0;
  std::stable_sort(rp.begin(), rp.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double auc = rp.front().first * rp.front().second;
  for (std::size_t i = 1; i < rp.size(); ++i)
    auc += (rp[i].first - rp[i - 1].first) * 0.5 * (rp[i].second + rp[i - 1].second);
  return std::clamp(auc, 0.0, 1.0);
}

std::vector<PrCounts> pr_counts(const OccupancyGrid& grid, const GroundTruthLayer& truth,
                                const std::vector<double>& thresholds) {
  if (!(grid.lattice == truth.lattice))
    throw ResolutionMismatch("grid and truth lattices differ (edge " + std::to_string(grid.lattice.edge) +
                             " vs " + std::to_string(truth.lattice.edge) + ")");
  const std::size_t n = grid.lattice.count();
  if (grid.prob.size() != n || truth.observed.size() != n) throw ResolutionMismatch("grid size mismatch");
  std::vector<std::uint8_t> occ(n, 0);
  for (auto id : truth.occupied) occ[id] = 1;
  std::vector<PrCounts> out(thresholds.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!truth.observed[i]) continue;
    const double p = grid.prob[i];
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      const bool pos = p > thresholds[k];
      if (pos && occ[i]) ++out[k].tp;
      else if (pos) ++out[k].fp;
      else if (occ[i]) ++out[k].fn;
    }
  }
  return out;
}

PrCurve pr_curve(const std::vector<OccupancyGrid>& grids, const std::vector<const GroundTruthLayer*>& truth,
                 const std::vector<double>& thresholds) {
  if (grids.size() != truth.size()) throw ResolutionMismatch("grid and truth step counts differ");
  std::vector<std::vector<PrCounts>> per_step(grids.size());
  const long ns = static_cast<long>(grids.size());
  std::string err;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < ns; ++i) {
    try {
      per_step[i] = pr_counts(grids[i], *truth[i], thresholds);
    } catch (const std::exception& e) {
#pragma omp critical
      err = e.what();
    }
  }
  if (!err.empty()) throw ResolutionMismatch(err);
  std::vector<PrCounts> sum(thresholds.size());
  for (const auto& s : per_step)
    for (std::size_t k = 0; k < sum.size(); ++k) {
      sum[k].tp += s[k].tp;
      sum[k].fp += s[k].fp;
      sum[k].fn += s[k].fn;
    }
  PrCurve c;
  for (std::size_t k = 0; k < sum.size(); ++k) c.points.push_back(pr_point(thresholds[k], sum[k]));
  c.auc = pr_auc(c.points);
  return c;
}

double bhattacharyya_diag(const Eigen::Vector3d& mu1, const Eigen::Vector3d& var1, const Eigen::Vector3d& mu2,
                          const Eigen::Vector3d& var2) {
  constexpr double kFloor = 1e-12;
  double d = 0;
  for (int i = 0; i < 3; ++i) {
    const double a = std::max(var1[i], kFloor), b = std::max(var2[i], kFloor);
    const double s = 0.5 * (a + b);
    const double dm = mu1[i] - mu2[i];
    d += 0.125 * dm * dm / s + 0.5 * std::log(s / std::sqrt(a * b));
  }
  return d;
}

VelocityReport velocity_report(const std::vector<VelocityGaussian>& estimates,
                               const std::vector<VelocitySample>& truth, double sigma_gt, double tol) {
  VelocityReport r;
  if (truth.empty()) throw EmptyOverlap("no velocity truth");
  std::vector<VelocitySample> sorted = truth;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const VelocitySample& a, const VelocitySample& b) { return a.timestamp < b.timestamp; });
  const Eigen::Vector3d gt_var = Eigen::Vector3d::Constant(sigma_gt * sigma_gt);
  double se = 0, var = 0, mbd = 0;
  std::size_t nvar = 0;
  for (const auto& e : estimates) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), e.timestamp,
                               [](const VelocitySample& s, double t) { return s.timestamp < t; });
    const VelocitySample* best = nullptr;
    if (it != sorted.end()) best = &*it;
    if (it != sorted.begin()) {
      auto prev = std::prev(it);
      if (!best || std::abs(prev->timestamp - e.timestamp) < std::abs(best->timestamp - e.timestamp)) best = &*prev;
    }
    if (!best || std::abs(best->timestamp - e.timestamp) > tol) continue;
    se += (e.mean - best->velocity).squaredNorm();
    ++r.samples;
    if (e.has_var) {
      var += e.var.mean();
      mbd += bhattacharyya_diag(e.mean, e.var, best->velocity, gt_var);
      ++nvar;
    }
  }
  if (r.samples == 0) throw EmptyOverlap("no estimate aligns with the truth stream");
  r.rmse = std::sqrt(se / double(r.samples));
  if (nvar) {
    r.has_var = true;
    r.var = var / double(nvar);
    r.mbd = mbd / double(nvar);
  }
  return r;
}

VelocityGaussian map_velocity_estimate(const MapState& s, const Eigen::Vector3d& gt_position, double radius) {
  if (!(radius > 0)) throw ConfigError("radius must be positive");
  const double r2 = radius * radius;
  double wsum = 0;
  Eigen::Vector3d m = Eigen::Vector3d::Zero(), m2 = Eigen::Vector3d::Zero();
  const auto& arena = s.arena;
  const std::size_t per = arena.slots_per_voxel();
  for (std::uint32_t v = 0; v < arena.num_voxels(); ++v) {
    if (arena.live_count(v) == 0) continue;
    const Particle* p = arena.voxel_slots(v);
    for (std::size_t i = 0; i < per; ++i) {
      if (p[i].flag != ParticleFlag::Survived && p[i].flag != ParticleFlag::Newborn) continue;
      if ((p[i].position.cast<double>() - gt_position).squaredNorm() > r2) continue;
      const Eigen::Vector3d vel = p[i].velocity.cast<double>();
      wsum += p[i].weight;
      m += p[i].weight * vel;
      m2 += p[i].weight * vel.cwiseProduct(vel);
    }
  }
  if (!(wsum > 0)) throw NoParticles("no particles near the query position");
  VelocityGaussian g;
  g.timestamp = s.time;
  g.mean = m / wsum;
  g.var = (m2 / wsum - g.mean.cwiseProduct(g.mean)).cwiseMax(0.0);
  return g;
}

BaselineParams baseline_params(const Config& cfg) {
  BaselineParams p;
  p.velocity = cfg.velocity;
  p.filter_resolution = cfg.map.filter_resolution;
  p.v_max = cfg.filter.v_max;
  return p;
}

void CvKalman::init(const Eigen::Vector3d& p, double pos_var, double vel_var) {
  x.setZero();
  x.head<3>() = p;
  P.setZero();
  P.diagonal().head<3>().setConstant(pos_var);
  P.diagonal().tail<3>().setConstant(vel_var);
}

void CvKalman::predict(double dt, double accel_std) {
  Eigen::Matrix<double, 6, 6> F = Eigen::Matrix<double, 6, 6>::Identity();
  F.topRightCorner<3, 3>() = dt * Eigen::Matrix3d::Identity();
  const double q = accel_std * accel_std;
  Eigen::Matrix<double, 6, 6> Q = Eigen::Matrix<double, 6, 6>::Zero();
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  Q.topLeftCorner<3, 3>() = q * dt * dt * dt * dt / 4 * I;
  Q.topRightCorner<3, 3>() = q * dt * dt * dt / 2 * I;
  Q.bottomLeftCorner<3, 3>() = q * dt * dt * dt / 2 * I;
  Q.bottomRightCorner<3, 3>() = q * dt * dt * I;
  x = F * x;
  P = F * P * F.transpose() + Q;
}

void CvKalman::update(const Eigen::Vector3d& z, double meas_var) {
  const Eigen::Matrix3d S = P.topLeftCorner<3, 3>() + meas_var * Eigen::Matrix3d::Identity();
  const Eigen::Matrix<double, 6, 3> K = P.leftCols<3>() * S.inverse();
  x += K * (z - x.head<3>());
  Eigen::Matrix<double, 6, 6> IKH = Eigen::Matrix<double, 6, 6>::Identity();
  IKH.leftCols<3>() -= K;
  P = IKH * P * IKH.transpose() + meas_var * K * K.transpose();
}

std::vector<TimedCloud> world_clouds(const std::vector<Frame>& frames, const Config& cfg) {
  const MapLayout layout = MapLayout::from(cfg);
  std::vector<TimedCloud> out;
  std::optional<double> prev;
  for (const auto& f : frames) {
    auto pre = preprocess(f, cfg, layout, prev);
    prev = f.timestamp;
    out.push_back(TimedCloud{f.timestamp, std::move(pre.points)});
  }
  return out;
}

namespace {

struct ClusterStep {
  std::vector<Cluster> clusters;
  std::vector<int> match;
  double dt = 0;
};

template <class OnStep>
void run_tracker(const std::vector<TimedCloud>& clouds, const BaselineParams& p, OnStep&& on_step) {
  const double cd = p.velocity.cluster_dist > 0 ? p.velocity.cluster_dist : 2 * p.filter_resolution;
  std::vector<Cluster> prev;
  std::optional<double> prev_t;
  for (const auto& c : clouds) {
    ClusterStep st;
    auto split = segment_ground(c.points, p.velocity.ground_height_thresh);
    st.clusters = extract_clusters(c.points, split.rest, cd, p.velocity.min_cluster_size);
    st.match.assign(st.clusters.size(), -1);
    st.dt = prev_t ? c.timestamp - *prev_t : 0.0;
    if (st.dt > 0 && !prev.empty())
      st.match = match_clusters(prev, st.clusters, MatchParams{p.v_max * st.dt, p.velocity.w_count});
    on_step(c.timestamp, prev, st);
    prev = st.clusters;
    prev_t = c.timestamp;
  }
}

}  // namespace

std::vector<BaselineStep> baseline_km_diff(const std::vector<TimedCloud>& clouds, const BaselineParams& p) {
  std::vector<BaselineStep> out;
  run_tracker(clouds, p, [&](double t, const std::vector<Cluster>& prev, const ClusterStep& st) {
    BaselineStep bs;
    bs.timestamp = t;
    for (std::size_t i = 0; i < st.clusters.size(); ++i) {
      if (st.match[i] < 0) continue;
      TrackEstimate e;
      e.id = static_cast<int>(i);
      e.position = st.clusters[i].centroid;
      e.velocity = (st.clusters[i].centroid - prev[st.match[i]].centroid) / st.dt;
      bs.tracks.push_back(e);
    }
    out.push_back(std::move(bs));
  });
  return out;
}

std::vector<BaselineStep> baseline_km_kf(const std::vector<TimedCloud>& clouds, const BaselineParams& p) {
  struct Track {
    int id;
    CvKalman kf;
  };
  std::vector<BaselineStep> out;
  std::vector<Track> prev_tracks;
  int next_id = 0;
  const double mv = p.meas_std * p.meas_std;
  run_tracker(clouds, p, [&](double t, const std::vector<Cluster>&, const ClusterStep& st) {
    std::vector<Track> tracks;
    BaselineStep bs;
    bs.timestamp = t;
    for (std::size_t i = 0; i < st.clusters.size(); ++i) {
      Track tr;
      if (st.match[i] >= 0) {
        tr = prev_tracks[st.match[i]];
        tr.kf.predict(st.dt, p.accel_std);
        tr.kf.update(st.clusters[i].centroid, mv);
        TrackEstimate e;
        e.id = tr.id;
        e.position = tr.kf.position();
        e.velocity = tr.kf.velocity();
        e.var = tr.kf.velocity_var();
        e.has_var = true;
        bs.tracks.push_back(e);
      } else {
        tr.id = next_id++;
        tr.kf.init(st.clusters[i].centroid, mv, p.init_vel_std * p.init_vel_std);
      }
      tracks.push_back(tr);
    }
    prev_tracks = std::move(tracks);
    out.push_back(std::move(bs));
  });
  return out;
}

std::optional<TrackEstimate> nearest_track(const BaselineStep& step, const Eigen::Vector3d& position, double radius) {
  std::optional<TrackEstimate> best;
  double bd = radius * radius;
  for (const auto& t : step.tracks) {
    Eigen::Vector3d d = t.position - position;
    d.z() = 0;
    double d2 = d.squaredNorm();
    if (d2 <= bd) {
      bd = d2;
      best = t;
    }
  }
  return best;
}

}  // namespace dsp
