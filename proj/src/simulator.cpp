#include "dsp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "dsp/binary_io.hpp"
#include "dsp/error.hpp"

namespace dsp {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<double> numbers(const std::string& v) {
  std::string s = v;
  for (char& c : s)
    if (c == ',' || c == ';') c = ' ';
  std::istringstream is(s);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    std::size_t used = 0;
    double d = 0;
    try {
      d = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ConfigError("expected a number, got '" + tok + "'");
    out.push_back(d);
  }
  return out;
}

double number(const std::string& v) {
  auto n = numbers(v);
  if (n.size() != 1) throw ConfigError("expected one number, got '" + v + "'");
  return n[0];
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const std::string& v) {
  auto n = numbers(v);
  if (n.size() != N) throw ConfigError("expected " + std::to_string(N) + " numbers, got '" + v + "'");
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out[i] = n[i];
  return out;
}

bool boolean(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

struct PoseDraft {
  double t = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0, pitch = 0, roll = 0;
};

Eigen::Quaterniond ypr(double yaw, double pitch, double roll) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                            Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                            Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()));
}

}  // namespace

WorldSpec parse_world(const std::string& text) {
  WorldSpec w;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  std::vector<PoseDraft> poses;
  bool agents_bounded = false;
  Eigen::Vector2d bmin(-1e9, -1e9), bmax(1e9, 1e9);
  try {
    while (std::getline(is, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section == "pose")
          poses.emplace_back();
        else if (section == "box")
          w.boxes.emplace_back();
        else if (section == "cylinder")
          w.cylinders.emplace_back();
        else if (section == "agent")
          w.agents.emplace_back();
        else if (section != "world" && section != "sensor")
          throw ConfigError("unknown section [" + section + "]");
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key = value");
      std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
      auto unknown = [&] { throw ConfigError("unknown key '" + key + "' in [" + section + "]"); };

      if (section == "world") {
        if (key == "duration") w.duration = number(val);
        else if (key == "frame_rate") w.frame_rate = number(val);
        else if (key == "seed") w.seed = static_cast<std::uint64_t>(number(val));
        else if (key == "ground") w.ground = boolean(val);
        else if (key == "eval_ignore_ground") w.eval_ignore_ground = boolean(val);
        else if (key == "map_size") w.map_size = vec<3>(val);
        else if (key == "gt_resolutions") w.gt_resolutions = numbers(val);
        else if (key == "gt_stride") w.gt_stride = static_cast<int>(number(val));
        else if (key == "dense_factor") w.dense_factor = number(val);
        else if (key == "bounds_min") { bmin = vec<2>(val); agents_bounded = true; }
        else if (key == "bounds_max") { bmax = vec<2>(val); agents_bounded = true; }
        else unknown();
      } else if (section == "sensor") {
        auto& s = w.sensor;
        if (key == "fov_h") s.fov_h = deg2rad(number(val));
        else if (key == "fov_v") s.fov_v = deg2rad(number(val));
        else if (key == "resolution") s.resolution = deg2rad(number(val));
        else if (key == "max_range") s.max_range = number(val);
        else if (key == "sigma") s.noise.sigma = number(val);
        else if (key == "noise_model") {
          if (val == "linear") s.noise.kind = NoiseModel::Kind::Linear;
          else if (val == "constant") s.noise.kind = NoiseModel::Kind::Constant;
          else throw ConfigError("noise_model must be linear or constant");
        } else unknown();
      } else if (section == "pose") {
        auto& p = poses.back();
        if (key == "t") p.t = number(val);
        else if (key == "position") p.position = vec<3>(val);
        else if (key == "yaw") p.yaw = deg2rad(number(val));
        else if (key == "pitch") p.pitch = deg2rad(number(val));
        else if (key == "roll") p.roll = deg2rad(number(val));
        else unknown();
      } else if (section == "box") {
        auto& b = w.boxes.back();
        if (key == "min") b.min = vec<3>(val);
        else if (key == "max") b.max = vec<3>(val);
        else unknown();
      } else if (section == "cylinder") {
        auto& c = w.cylinders.back();
        if (key == "center") c.center = vec<2>(val);
        else if (key == "radius") c.radius = number(val);
        else if (key == "z") { auto z = vec<2>(val); c.z0 = z[0]; c.z1 = z[1]; }
        else unknown();
      } else if (section == "agent") {
        auto& a = w.agents.back();
        if (key == "center") a.shape.center = vec<2>(val);
        else if (key == "radius") a.shape.radius = number(val);
        else if (key == "height") { a.shape.z0 = 0; a.shape.z1 = number(val); }
        else if (key == "velocity") a.velocity = vec<2>(val);
        else if (key == "bounds_min") a.bounds_min = vec<2>(val);
        else if (key == "bounds_max") a.bounds_max = vec<2>(val);
        else if (key == "speed") a.speed = number(val);
        else if (key == "motion") {
          if (val == "constant_velocity") a.motion = Agent::Motion::ConstantVelocity;
          else if (val == "waypoints") a.motion = Agent::Motion::Waypoints;
          else throw ConfigError("motion must be constant_velocity or waypoints");
        } else if (key == "waypoints") {
          auto n = numbers(val);
          if (n.size() < 4 || n.size() % 2) throw ConfigError("waypoints need at least two x,y pairs");
          a.waypoints.clear();
          for (std::size_t i = 0; i < n.size(); i += 2) a.waypoints.emplace_back(n[i], n[i + 1]);
        } else unknown();
      } else {
        throw ConfigError("key outside of a section");
      }
    }
  } catch (const ConfigError& e) {
    throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
  }

  if (!(w.frame_rate > 0)) throw ConfigError("frame_rate must be positive");
  if (w.duration < 0) throw ConfigError("duration must be >= 0");
  if (w.gt_stride < 1) throw ConfigError("gt_stride must be >= 1");
  if (!(w.dense_factor >= 1)) throw ConfigError("dense_factor must be >= 1");
  if (!(w.sensor.resolution > 0 && w.sensor.max_range > 0)) throw ConfigError("bad sensor model");
  if (poses.empty()) poses.push_back(PoseDraft{0, Eigen::Vector3d(0, 0, 1), 0, 0, 0});
  std::stable_sort(poses.begin(), poses.end(), [](const PoseDraft& a, const PoseDraft& b) { return a.t < b.t; });
  for (const auto& p : poses) w.trajectory.push_back(TimedPose{p.t, Pose{p.position, ypr(p.yaw, p.pitch, p.roll)}});
  for (auto& a : w.agents) {
    if (agents_bounded) {
      a.bounds_min = a.bounds_min.cwiseMax(bmin);
      a.bounds_max = a.bounds_max.cwiseMin(bmax);
    }
    if (a.motion == Agent::Motion::Waypoints) {
      if (a.waypoints.size() < 2) throw ConfigError("waypoint agent needs waypoints");
      a.shape.center = a.waypoints[0];
      a.next_waypoint = 1;
      Eigen::Vector2d d = a.waypoints[1] - a.waypoints[0];
      a.velocity = d.norm() > 0 ? Eigen::Vector2d(d.normalized() * a.speed) : Eigen::Vector2d::Zero();
    }
  }
  return w;
}

WorldSpec load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open world file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_world(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void step_world(WorldSpec& w, double dt) {
  for (auto& a : w.agents) {
    if (a.motion == Agent::Motion::ConstantVelocity) {
      a.shape.center += a.velocity * dt;
      for (int k = 0; k < 2; ++k) {
        if (a.shape.center[k] > a.bounds_max[k]) {
          a.shape.center[k] = 2 * a.bounds_max[k] - a.shape.center[k];
          a.velocity[k] = -std::abs(a.velocity[k]);
        } else if (a.shape.center[k] < a.bounds_min[k]) {
          a.shape.center[k] = 2 * a.bounds_min[k] - a.shape.center[k];
          a.velocity[k] = std::abs(a.velocity[k]);
        }
      }
    } else {
      double left = a.speed * dt;
      for (int guard = 0; left > 1e-12 && guard < 1000; ++guard) {
        const Eigen::Vector2d target = a.waypoints[a.next_waypoint];
        Eigen::Vector2d d = target - a.shape.center;
        double dist = d.norm();
        if (dist <= left) {
          a.shape.center = target;
          left -= dist;
          a.next_waypoint = (a.next_waypoint + 1) % a.waypoints.size();
        } else {
          a.shape.center += d / dist * left;
          left = 0;
        }
        Eigen::Vector2d nd = a.waypoints[a.next_waypoint] - a.shape.center;
        a.velocity = nd.norm() > 1e-12 ? Eigen::Vector2d(nd.normalized() * a.speed) : Eigen::Vector2d::Zero();
      }
    }
  }
}

Pose pose_at(const WorldSpec& w, double t) {
  const auto& tr = w.trajectory;
  if (tr.size() == 1 || t <= tr.front().t) return tr.front().pose;
  if (t >= tr.back().t) return tr.back().pose;
  std::size_t k = 1;
  while (tr[k].t < t) ++k;
  const auto& a = tr[k - 1];
  const auto& b = tr[k];
  double s = (b.t > a.t) ? (t - a.t) / (b.t - a.t) : 1.0;
  Pose p;
  p.position = (1 - s) * a.pose.position + s * b.pose.position;
  p.orientation = a.pose.orientation.slerp(s, b.pose.orientation).normalized();
  return p;
}

std::size_t frame_count(const WorldSpec& w) {
  return static_cast<std::size_t>(std::floor(w.duration * w.frame_rate + 1e-9));
}

namespace {

constexpr double kEps = 1e-9;

std::optional<double> ray_box(const Box& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  double t0 = -1e300, t1 = 1e300;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return std::nullopt;
      continue;
    }
    double ta = (b.min[a] - o[a]) / d[a], tb = (b.max[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (t0 > kEps) return t0;
  return std::nullopt;
}

std::optional<double> ray_cylinder(const Cylinder& c, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  double best = 1e300;
  const double ox = o.x() - c.center.x(), oy = o.y() - c.center.y();
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    const double b = 2 * (ox * d.x() + oy * d.y());
    const double cc = ox * ox + oy * oy - c.radius * c.radius;
    const double disc = b * b - 4 * a * cc;
    if (disc >= 0) {
      double t = (-b - std::sqrt(disc)) / (2 * a);
      if (t > kEps) {
        double z = o.z() + t * d.z();
        if (z >= c.z0 && z <= c.z1) best = t;
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (double zc : {c.z0, c.z1}) {
      double t = (zc - o.z()) / d.z();
      if (t <= kEps || t >= best) continue;
      double x = ox + t * d.x(), y = oy + t * d.y();
      if (x * x + y * y <= c.radius * c.radius) best = t;
    }
  }
  if (best < 1e300) return best;
  return std::nullopt;
}

}  // namespace

std::optional<double> cast_ray(const WorldSpec& w, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                               double max_range) {
  double best = max_range;
  bool hit = false;
  auto consider = [&](std::optional<double> t) {
    if (t && *t <= best) {
      best = *t;
      hit = true;
    }
  };
  if (w.ground && d.z() < -1e-15 && o.z() > 0) consider(-o.z() / d.z());
  for (const auto& b : w.boxes) consider(ray_box(b, o, d));
  for (const auto& c : w.cylinders) consider(ray_cylinder(c, o, d));
  for (const auto& a : w.agents) consider(ray_cylinder(a.shape, o, d));
  if (hit) return best;
  return std::nullopt;
}

double box_distance(const Box& b, const Eigen::Vector3d& p) {
  Eigen::Vector3d c = 0.5 * (b.min + b.max), h = 0.5 * (b.max - b.min);
  Eigen::Vector3d q = (p - c).cwiseAbs() - h;
  double outside = q.cwiseMax(0.0).norm();
  if (outside > 0) return outside;
  return -q.maxCoeff();
}

double cylinder_distance(const Cylinder& c, const Eigen::Vector3d& p) {
  double dr = std::hypot(p.x() - c.center.x(), p.y() - c.center.y()) - c.radius;
  double dz = std::max(c.z0 - p.z(), p.z() - c.z1);
  if (dr > 0 || dz > 0) return std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
  return std::min(-dr, -dz);
}

double surface_distance(const WorldSpec& w, const Eigen::Vector3d& p) {
  double d = 1e300;
  if (w.ground) d = std::abs(p.z());
  for (const auto& b : w.boxes) d = std::min(d, box_distance(b, p));
  for (const auto& c : w.cylinders) d = std::min(d, cylinder_distance(c, p));
  for (const auto& a : w.agents) d = std::min(d, cylinder_distance(a.shape, p));
  return d;
}

std::vector<Eigen::Vector3d> sensor_rays(const SensorModel& m, double step) {
  const int nb = std::max(1, static_cast<int>(std::lround(m.fov_h / step)));
  const int na = std::max(1, static_cast<int>(std::lround(m.fov_v / step)));
  std::vector<Eigen::Vector3d> out;
  out.reserve(std::size_t(na) * nb);
  const double a0 = 0.5 * (kPi - m.fov_v);
  const double b0 = -0.5 * m.fov_h;
  for (int ia = 0; ia < na; ++ia) {
    double alpha = a0 + (ia + 0.5) * m.fov_v / na;
    for (int ib = 0; ib < nb; ++ib) {
      double beta = b0 + (ib + 0.5) * m.fov_h / nb;
      out.emplace_back(std::sin(alpha) * std::cos(beta), std::sin(alpha) * std::sin(beta), std::cos(alpha));
    }
  }
  return out;
}

Frame raycast_frame(const WorldSpec& w, const Pose& pose, double t, SplitMix64& rng) {
  Frame f;
  f.timestamp = t;
  f.pose = pose;
  std::normal_distribution<double> nd(0.0, 1.0);
  const Eigen::Matrix3d R = pose.orientation.toRotationMatrix();
  for (const auto& d : sensor_rays(w.sensor, w.sensor.resolution)) {
    auto hit = cast_ray(w, pose.position, R * d, w.sensor.max_range);
    if (!hit) continue;
    double r = *hit + w.sensor.noise.rho(*hit) * nd(rng);
    f.points.push_back((d * std::max(r, 0.0)).cast<float>());
  }
  return f;
}

ObservedAccumulator::ObservedAccumulator(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double edge)
    : edge_(edge) {
  for (int a = 0; a < 3; ++a) {
    lo_[a] = static_cast<std::int64_t>(std::floor(lo[a] / edge));
    n_[a] = static_cast<std::int64_t>(std::floor(hi[a] / edge)) - lo_[a] + 1;
  }
  bits_.assign(std::size_t(n_[0] * n_[1] * n_[2]), 0);
}

bool ObservedAccumulator::observed(std::int64_t ix, std::int64_t iy, std::int64_t iz) const {
  ix -= lo_[0];
  iy -= lo_[1];
  iz -= lo_[2];
  if (ix < 0 || iy < 0 || iz < 0 || ix >= n_[0] || iy >= n_[1] || iz >= n_[2]) return false;
  return bits_[std::size_t(ix + n_[0] * (iy + n_[1] * iz))] != 0;
}

void ObservedAccumulator::add_ray(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double length) {
  std::int64_t c[3], step[3];
  double tmax[3], tdelta[3];
  for (int a = 0; a < 3; ++a) {
    c[a] = static_cast<std::int64_t>(std::floor(o[a] / edge_));
    if (d[a] > 0) {
      step[a] = 1;
      tmax[a] = ((double(c[a]) + 1) * edge_ - o[a]) / d[a];
      tdelta[a] = edge_ / d[a];
    } else if (d[a] < 0) {
      step[a] = -1;
      tmax[a] = (double(c[a]) * edge_ - o[a]) / d[a];
      tdelta[a] = -edge_ / d[a];
    } else {
      step[a] = 0;
      tmax[a] = 1e300;
      tdelta[a] = 1e300;
    }
  }
  for (int guard = 0; guard < 1000000; ++guard) {
    std::int64_t ix = c[0] - lo_[0], iy = c[1] - lo_[1], iz = c[2] - lo_[2];
    if (ix >= 0 && iy >= 0 && iz >= 0 && ix < n_[0] && iy < n_[1] && iz < n_[2])
      bits_[std::size_t(ix + n_[0] * (iy + n_[1] * iz))] = 1;
    int a = tmax[0] < tmax[1] ? (tmax[0] < tmax[2] ? 0 : 2) : (tmax[1] < tmax[2] ? 1 : 2);
    if (tmax[a] > length) break;
    c[a] += step[a];
    tmax[a] += tdelta[a];
  }
}

GroundTruthLayer ground_truth_layer(const WorldSpec& w, const Eigen::Vector3d& center, double l_q,
                                    const ObservedAccumulator& acc) {
  GroundTruthLayer layer;
  layer.lattice = GridLattice::around(center, w.map_size, l_q);
  const auto& L = layer.lattice;
  const double half = 0.5 * l_q;
  std::vector<std::uint8_t> occ(L.count(), 0);

  auto scan = [&](Eigen::Vector3d lo, Eigen::Vector3d hi, auto&& dist) {
    int i0[3], i1[3];
    for (int a = 0; a < 3; ++a) {
      i0[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((lo[a] - half) / l_q)) - L.origin[a]);
      i1[a] = std::min<std::int64_t>(L.dims[a] - 1,
                                     static_cast<std::int64_t>(std::floor((hi[a] + half) / l_q)) - L.origin[a]);
    }
    for (int z = i0[2]; z <= i1[2]; ++z)
      for (int y = i0[1]; y <= i1[1]; ++y)
        for (int x = i0[0]; x <= i1[0]; ++x) {
          std::size_t id = L.id(x, y, z);
          if (occ[id]) continue;
          if (dist(L.cell_center(id)) <= half + 1e-12) occ[id] = 1;
        }
  };
  const bool ground = w.ground && !w.eval_ignore_ground;
  if (ground) {
    Eigen::Vector3d lo = L.min_corner(), hi = lo + L.dims.cast<double>() * l_q;
    lo.z() = 0;
    hi.z() = 0;
    scan(lo, hi, [](const Eigen::Vector3d& p) { return std::abs(p.z()); });
  }
  for (const auto& b : w.boxes) scan(b.min, b.max, [&](const Eigen::Vector3d& p) { return box_distance(b, p); });
  auto cyl = [&](const Cylinder& c) {
    Eigen::Vector3d lo(c.center.x() - c.radius, c.center.y() - c.radius, c.z0);
    Eigen::Vector3d hi(c.center.x() + c.radius, c.center.y() + c.radius, c.z1);
    scan(lo, hi, [&](const Eigen::Vector3d& p) { return cylinder_distance(c, p); });
  };
  for (const auto& c : w.cylinders) cyl(c);
  for (const auto& a : w.agents) cyl(a.shape);

  layer.observed.assign(L.count(), 0);
  for (int z = 0; z < L.dims.z(); ++z)
    for (int y = 0; y < L.dims.y(); ++y)
      for (int x = 0; x < L.dims.x(); ++x) {
        std::size_t id = L.id(x, y, z);
        if (w.eval_ignore_ground && double(L.origin.z() + z) * l_q < half) continue;
        if (acc.observed(L.origin.x() + x, L.origin.y() + y, L.origin.z() + z)) layer.observed[id] = 1;
      }
  for (std::size_t i = 0; i < occ.size(); ++i)
    if (occ[i]) layer.occupied.push_back(static_cast<std::uint32_t>(i));
  return layer;
}

namespace {

// volatile: gcc -O3 folds the double->float->double round trip after inlining
double to_float_precision(double d) {
  volatile float f = static_cast<float>(d);
  return f;
}

Pose float_rounded(const Pose& p) {
  Pose q;
  for (int i = 0; i < 3; ++i) q.position[i] = to_float_precision(p.position[i]);
  Eigen::Quaterniond o(to_float_precision(p.orientation.w()), to_float_precision(p.orientation.x()),
                       to_float_precision(p.orientation.y()), to_float_precision(p.orientation.z()));
  o.normalize();
  q.orientation = o;
  return q;
}

}  // namespace

SimulationResult simulate(const WorldSpec& spec) {
  SimulationResult res;
  WorldSpec w = spec;
  const std::size_t n = frame_count(w);
  const double dt = 1.0 / w.frame_rate;
  res.truth.resolutions = w.gt_resolutions;
  res.truth.num_agents = w.agents.size();

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e300), hi = Eigen::Vector3d::Constant(-1e300);
  for (std::size_t k = 0; k < std::max<std::size_t>(n, 1); ++k) {
    Eigen::Vector3d p = pose_at(w, double(k) * dt).position;
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  std::vector<ObservedAccumulator> accs;
  for (double r : w.gt_resolutions) {
    Eigen::Vector3d m = 0.5 * w.map_size + Eigen::Vector3d::Constant(2 * r);
    accs.emplace_back(lo - m, hi + m, r);
  }
  const auto dense = sensor_rays(w.sensor, w.sensor.resolution / w.dense_factor);
  std::vector<double> last_len(dense.size(), -1.0);
  Pose last_pose;

  for (std::size_t k = 0; k < n; ++k) {
    const double t = double(k) * dt;
    if (k > 0) step_world(w, dt);
    Pose pose = float_rounded(pose_at(w, t));
    auto rng = substream(w.seed, Stream::Sim, k);
    res.frames.push_back(raycast_frame(w, pose, t, rng));

    const Eigen::Matrix3d R = pose.orientation.toRotationMatrix();
    const bool same_pose = k > 0 && pose.position == last_pose.position &&
                           pose.orientation.coeffs() == last_pose.orientation.coeffs();
    for (std::size_t i = 0; i < dense.size(); ++i) {
      Eigen::Vector3d dw = R * dense[i];
      auto hit = cast_ray(w, pose.position, dw, w.sensor.max_range);
      double len = hit ? *hit : w.sensor.max_range;
      // observed cells only accumulate, an identical ray adds nothing
      if (same_pose && len == last_len[i]) continue;
      last_len[i] = len;
      for (auto& acc : accs) acc.add_ray(pose.position, dw, len);
    }
    last_pose = pose;

    if (k % static_cast<std::size_t>(w.gt_stride) != 0) continue;
    GroundTruthStep step;
    step.frame = static_cast<std::uint32_t>(k);
    step.timestamp = t;
    for (const auto& a : w.agents) step.agents.push_back(AgentTruth{a.position(), a.velocity3()});
    for (std::size_t r = 0; r < accs.size(); ++r)
      step.layers.push_back(ground_truth_layer(w, pose.position, w.gt_resolutions[r], accs[r]));
    res.truth.steps.push_back(std::move(step));
  }
  return res;
}

void write_ground_truth(const std::string& path, const GroundTruth& gt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write ground truth '" + path + "'");
  bin::put_magic(os, "DSPT");
  bin::put<std::uint32_t>(os, 1);
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(gt.resolutions.size()));
  for (double r : gt.resolutions) bin::put<double>(os, r);
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(gt.num_agents));
  for (const auto& s : gt.steps) {
    bin::put<std::uint32_t>(os, s.frame);
    bin::put<double>(os, s.timestamp);
    for (const auto& a : s.agents) {
      for (int i = 0; i < 3; ++i) bin::put<double>(os, a.position[i]);
      for (int i = 0; i < 3; ++i) bin::put<double>(os, a.velocity[i]);
    }
    for (const auto& l : s.layers) {
      for (int i = 0; i < 3; ++i) bin::put<std::int64_t>(os, l.lattice.origin[i]);
      for (int i = 0; i < 3; ++i) bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(l.lattice.dims[i]));
      bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(l.occupied.size()));
      for (auto id : l.occupied) bin::put<std::uint32_t>(os, id);
      std::vector<std::uint8_t> bits((l.observed.size() + 7) / 8, 0);
      for (std::size_t i = 0; i < l.observed.size(); ++i)
        if (l.observed[i]) bits[i / 8] |= std::uint8_t(1u << (i % 8));
      os.write(reinterpret_cast<const char*>(bits.data()), std::streamsize(bits.size()));
    }
  }
  if (!os) throw DataError("failed writing ground truth '" + path + "'");
}

GroundTruth read_ground_truth(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open ground truth '" + path + "'");
  bin::expect_magic(is, "DSPT", path);
  GroundTruth gt;
  try {
    auto version = bin::get<std::uint32_t>(is, "version");
    if (version != 1) throw DataError("unsupported version " + std::to_string(version));
    auto nres = bin::get<std::uint32_t>(is, "resolution count");
    for (std::uint32_t i = 0; i < nres; ++i) gt.resolutions.push_back(bin::get<double>(is, "resolution"));
    gt.num_agents = bin::get<std::uint32_t>(is, "agent count");
    while (true) {
      std::uint32_t frame;
      if (!bin::try_get(is, frame)) break;
      GroundTruthStep s;
      s.frame = frame;
      s.timestamp = bin::get<double>(is, "timestamp");
      for (std::size_t a = 0; a < gt.num_agents; ++a) {
        AgentTruth t;
        for (int i = 0; i < 3; ++i) t.position[i] = bin::get<double>(is, "agent");
        for (int i = 0; i < 3; ++i) t.velocity[i] = bin::get<double>(is, "agent");
        s.agents.push_back(t);
      }
      for (std::uint32_t r = 0; r < nres; ++r) {
        GroundTruthLayer l;
        l.lattice.edge = gt.resolutions[r];
        for (int i = 0; i < 3; ++i) l.lattice.origin[i] = bin::get<std::int64_t>(is, "origin");
        for (int i = 0; i < 3; ++i) l.lattice.dims[i] = static_cast<int>(bin::get<std::uint32_t>(is, "dims"));
        auto nocc = bin::get<std::uint32_t>(is, "occupied count");
        l.occupied.resize(nocc);
        for (auto& id : l.occupied) {
          id = bin::get<std::uint32_t>(is, "occupied id");
          if (id >= l.lattice.count()) throw DataError("occupied id out of range");
        }
        std::vector<std::uint8_t> bits((l.lattice.count() + 7) / 8);
        is.read(reinterpret_cast<char*>(bits.data()), std::streamsize(bits.size()));
        if (static_cast<std::size_t>(is.gcount()) != bits.size()) throw DataError("truncated mask");
        l.observed.resize(l.lattice.count());
        for (std::size_t i = 0; i < l.observed.size(); ++i) l.observed[i] = (bits[i / 8] >> (i % 8)) & 1u;
        s.layers.push_back(std::move(l));
      }
      gt.steps.push_back(std::move(s));
    }
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
  return gt;
}

}  // namespace dsp
