#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsp/config.hpp"
#include "dsp/dataset_io.hpp"
#include "dsp/error.hpp"
#include "dsp/evaluation.hpp"
#include "dsp/occupancy.hpp"
#include "dsp/pipeline.hpp"
#include "dsp/simulator.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string res_tag(double r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << r;
  return os.str();
}

std::string num(double d, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << d;
  return os.str();
}

void write_manifest(const fs::path& dir, json m) {
  m["build"] = DSP_BUILD_ID;
  std::ofstream os(dir / "manifest.json");
  os << m.dump(2) << "\n";
  if (!os) throw dsp::DataError("cannot write manifest in " + dir.string());
}

json read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw dsp::DataError("no manifest.json in " + dir.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw dsp::DataError((dir / "manifest.json").string() + ": " + e.what());
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw dsp::DataError("cannot create " + dir.string() + ": " + ec.message());
}

struct ConfigOptions {
  std::string path;
  std::string profile;
  std::vector<std::string> sets;
  std::string mode;
  std::int64_t seed = -1;
  std::vector<double> resolutions;
};

dsp::Config build_config(const ConfigOptions& o) {
  dsp::Config base;
  if (o.profile == "desk")
    base = dsp::desk_profile();
  else if (!o.profile.empty())
    throw dsp::ConfigError("unknown profile '" + o.profile + "'");
  dsp::Config cfg = o.path.empty() ? base : dsp::load_config(o.path, base);
  for (const auto& kv : o.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw dsp::ConfigError("--set expects key=value, got '" + kv + "'");
    dsp::set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.mode.empty()) cfg.mode = dsp::parse_mode(o.mode);
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (!o.resolutions.empty()) cfg.output_resolutions = o.resolutions;
  dsp::validate(cfg);
  return cfg;
}

void add_config_options(CLI::App* app, ConfigOptions& o) {
  app->add_option("--config", o.path, "config file (key = value)");
  app->add_option("--profile", o.profile, "parameter profile (desk)");
  app->add_option("--set", o.sets, "override a config key, key=value");
  app->add_option("--mode", o.mode, "dynamic | random | static");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--resolutions", o.resolutions, "output resolutions in meters")->delimiter(',');
}

// simulate

int cmd_simulate(const std::string& world_path, const fs::path& out, std::int64_t seed) {
  dsp::WorldSpec w = dsp::load_world(world_path);
  if (seed >= 0) w.seed = static_cast<std::uint64_t>(seed);
  make_dir(out);
  auto sim = dsp::simulate(w);
  dsp::DatasetWriter writer((out / "data.dspd").string());
  for (const auto& f : sim.frames) writer.write(f);
  dsp::write_ground_truth((out / "truth.dspt").string(), sim.truth);
  json m;
  m["command"] = "simulate";
  m["inputs"] = {{"world", world_path}};
  m["seed"] = w.seed;
  m["frames"] = sim.frames.size();
  m["outputs"] = {{"dataset", "data.dspd"}, {"truth", "truth.dspt"}};
  write_manifest(out, m);
  std::cout << "simulated " << sim.frames.size() << " frames into " << out.string() << "\n";
  return 0;
}

// map

struct MapOptions {
  ConfigOptions cfg;
  int snapshot_every = 10;
  std::string truth;
  bool dump_particles = false;
  bool slices = false;
  double velocity_radius = 0.5;
};

int cmd_map(const std::string& dataset, const fs::path& out, const MapOptions& o) {
  dsp::Config cfg = build_config(o.cfg);
  std::optional<dsp::GroundTruth> truth;
  std::map<std::uint32_t, std::size_t> truth_by_frame;
  if (!o.truth.empty()) {
    truth = dsp::read_ground_truth(o.truth);
    for (std::size_t i = 0; i < truth->steps.size(); ++i) truth_by_frame[truth->steps[i].frame] = i;
  }
  make_dir(out);
  make_dir(out / "grids");
  dsp::DatasetReader reader(dataset);
  dsp::DspMap map(cfg);

  std::ofstream timing(out / "timing.tsv");
  timing << "frame\ttimestamp\tpreprocess_ms\tvelocity_ms\tpredict_ms\tupdate_ms\tresample_ms\tbirth_ms\ttotal_ms"
            "\tpoints\tlive\tborn\n";
  std::ofstream vel;
  if (truth) {
    vel.open(out / "velocity.tsv");
    vel << "frame\ttimestamp\tagent\tmean_x\tmean_y\tmean_z\tvar_x\tvar_y\tvar_z\n";
  }
  json snaps = json::array();
  std::size_t k = 0;
  while (auto frame = reader.next()) {
    auto rep = map.step(*frame);
    const auto& s = map.state();
    timing << k << '\t' << num(frame->timestamp, 10) << '\t' << num(rep.ms.preprocess) << '\t' << num(rep.ms.velocity)
           << '\t' << num(rep.ms.predict) << '\t' << num(rep.ms.update) << '\t' << num(rep.ms.resample) << '\t'
           << num(rep.ms.birth) << '\t' << num(rep.ms.total) << '\t' << rep.points << '\t' << rep.live << '\t'
           << rep.born << '\n';
    if (truth) {
      auto it = truth_by_frame.find(static_cast<std::uint32_t>(k));
      if (it != truth_by_frame.end()) {
        const auto& step = truth->steps[it->second];
        for (std::size_t a = 0; a < step.agents.size(); ++a) {
          try {
            auto g = dsp::map_velocity_estimate(s, step.agents[a].position, o.velocity_radius);
            vel << k << '\t' << num(frame->timestamp, 10) << '\t' << a;
            for (int i = 0; i < 3; ++i) vel << '\t' << num(g.mean[i], 9);
            for (int i = 0; i < 3; ++i) vel << '\t' << num(g.var[i], 9);
            vel << '\n';
          } catch (const dsp::NoParticles&) {
          }
        }
      }
    }
    if (o.snapshot_every > 0 && (k + 1) % std::size_t(o.snapshot_every) == 0) {
      json files = json::object();
      for (double r : cfg.output_resolutions) {
        auto g = dsp::occupancy_grid(s, r);
        std::ostringstream name;
        name << "grids/f" << std::setw(6) << std::setfill('0') << k << "_r" << res_tag(r) << ".dspg";
        dsp::write_grid((out / name.str()).string(), g);
        files[res_tag(r)] = name.str();
        if (o.slices) {
          auto pgm = name.str();
          pgm.replace(pgm.size() - 5, 5, ".pgm");
          dsp::write_pgm_slice((out / pgm).string(), g, s.center.z());
        }
      }
      snaps.push_back({{"frame", k}, {"timestamp", frame->timestamp}, {"grids", files}});
    }
    ++k;
  }
  if (o.dump_particles) {
    std::ofstream dump(out / "particles.tsv");
    dsp::write_particle_dump(dump, map.state().arena);
  }
  json m;
  m["command"] = "map";
  m["inputs"] = {{"dataset", dataset}, {"config", o.cfg.path}, {"truth", o.truth}};
  m["seed"] = cfg.seed;
  m["mode"] = dsp::to_string(cfg.mode);
  m["config"] = dsp::dump_config(cfg, false);
  m["frames"] = k;
  m["snapshots"] = snaps;
  m["outputs"] = {{"timing", "timing.tsv"}};
  if (truth) m["outputs"]["velocity"] = "velocity.tsv";
  if (o.dump_particles) m["outputs"]["particles"] = "particles.tsv";
  write_manifest(out, m);
  std::cout << "mapped " << k << " frames, " << snaps.size() << " snapshots into " << out.string() << "\n";
  return 0;
}

// evaluate

struct EvalOptions {
  std::vector<double> resolutions;
  double warmup = 2.0;
  double sigma_gt = 0.1;
  std::string dataset;
  std::string config;
  std::string profile;
};

std::vector<dsp::VelocityGaussian> read_velocity_table(const fs::path& path, std::size_t agent) {
  std::ifstream is(path);
  if (!is) throw dsp::DataError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<dsp::VelocityGaussian> out;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::size_t frame, a;
    dsp::VelocityGaussian g;
    ls >> frame >> g.timestamp >> a >> g.mean.x() >> g.mean.y() >> g.mean.z() >> g.var.x() >> g.var.y() >> g.var.z();
    if (!ls) throw dsp::DataError(path.string() + ": malformed row '" + line + "'");
    if (a == agent) out.push_back(g);
  }
  return out;
}

int cmd_evaluate(const fs::path& run, const std::string& truth_path, const EvalOptions& o) {
  json man = read_manifest(run);
  auto truth = dsp::read_ground_truth(truth_path);
  std::vector<double> res = o.resolutions.empty() ? truth.resolutions : o.resolutions;
  std::map<std::uint32_t, std::size_t> by_frame;
  for (std::size_t i = 0; i < truth.steps.size(); ++i) by_frame[truth.steps[i].frame] = i;

  json outputs = json::object();
  std::ofstream summary(run / "summary.tsv");
  summary << "resolution\tsteps\tauc\tbest_f1\tbest_threshold\tprecision\trecall\n";
  for (double r : res) {
    auto rit = std::find_if(truth.resolutions.begin(), truth.resolutions.end(),
                            [&](double t) { return std::abs(t - r) < 1e-9; });
    if (rit == truth.resolutions.end())
      throw dsp::ResolutionMismatch("truth has no layer at resolution " + res_tag(r));
    const std::size_t layer = std::size_t(rit - truth.resolutions.begin());
    std::vector<dsp::OccupancyGrid> grids;
    std::vector<const dsp::GroundTruthLayer*> layers;
    for (const auto& snap : man["snapshots"]) {
      auto f = snap["frame"].get<std::uint32_t>();
      auto it = by_frame.find(f);
      if (it == by_frame.end()) continue;
      if (!snap["grids"].contains(res_tag(r)))
        throw dsp::ResolutionMismatch("run has no grids at resolution " + res_tag(r));
      grids.push_back(dsp::read_grid((run / snap["grids"][res_tag(r)].get<std::string>()).string()));
      const auto& L = truth.steps[it->second].layers[layer];
      if (!(grids.back().lattice == L.lattice))
        throw dsp::ResolutionMismatch("map center or lattice differs from truth at frame " + std::to_string(f));
      layers.push_back(&L);
    }
    if (grids.empty()) throw dsp::DataError("no snapshot aligns with a truth step");
    auto curve = dsp::pr_curve(grids, layers, dsp::default_thresholds());
    const std::string name = "pr_r" + res_tag(r) + ".tsv";
    std::ofstream t(run / name);
    t << "threshold\tprecision\trecall\tf1\ttp\tfp\tfn\n";
    for (const auto& p : curve.points)
      t << num(p.threshold, 3) << '\t' << num(p.precision) << '\t' << num(p.recall) << '\t' << num(p.f1) << '\t'
        << p.counts.tp << '\t' << p.counts.fp << '\t' << p.counts.fn << '\n';
    auto b = curve.best_f1();
    summary << res_tag(r) << '\t' << grids.size() << '\t' << num(curve.auc) << '\t' << num(b.f1) << '\t'
            << num(b.threshold, 3) << '\t' << num(b.precision) << '\t' << num(b.recall) << '\n';
    outputs["pr"][res_tag(r)] = name;
  }
  outputs["summary"] = "summary.tsv";

  const bool has_vel = man.contains("outputs") && man["outputs"].contains("velocity") && truth.num_agents > 0;
  if (has_vel || !o.dataset.empty()) {
    std::ofstream v(run / "velocity_report.tsv");
    v << "method\tagent\trmse\tvar\tmbd\tsamples\n";
    for (std::size_t a = 0; a < truth.num_agents; ++a) {
      std::vector<dsp::VelocitySample> gt;
      for (const auto& s : truth.steps)
        if (s.timestamp >= o.warmup) gt.push_back({s.timestamp, s.agents[a].velocity});
      auto row = [&](const std::string& method, const std::vector<dsp::VelocityGaussian>& est) {
        std::vector<dsp::VelocityGaussian> kept;
        for (const auto& e : est)
          if (e.timestamp >= o.warmup) kept.push_back(e);
        try {
          auto rep = dsp::velocity_report(kept, gt, o.sigma_gt);
          v << method << '\t' << a << '\t' << num(rep.rmse) << '\t';
          if (rep.has_var)
            v << num(rep.var) << '\t' << num(rep.mbd);
          else
            v << "-\t-";
          v << '\t' << rep.samples << '\n';
        } catch (const dsp::EmptyOverlap&) {
          v << method << '\t' << a << "\t-\t-\t-\t0\n";
        }
      };
      if (has_vel) row("dsp-" + man.value("mode", std::string("dynamic")), read_velocity_table(run / "velocity.tsv", a));
      if (!o.dataset.empty()) {
        ConfigOptions co;
        co.path = o.config;
        co.profile = o.profile;
        auto cfg = build_config(co);
        auto clouds = dsp::world_clouds(dsp::read_dataset(o.dataset), cfg);
        auto bp = dsp::baseline_params(cfg);
        std::map<std::uint32_t, std::size_t> idx = by_frame;
        auto collect = [&](const std::vector<dsp::BaselineStep>& steps) {
          std::vector<dsp::VelocityGaussian> est;
          for (std::size_t k = 0; k < steps.size(); ++k) {
            auto it = idx.find(static_cast<std::uint32_t>(k));
            if (it == idx.end()) continue;
            auto tr = dsp::nearest_track(steps[k], truth.steps[it->second].agents[a].position, 0.5);
            if (!tr) continue;
            est.push_back({steps[k].timestamp, tr->velocity, tr->var, tr->has_var});
          }
          return est;
        };
        row("km-diff", collect(dsp::baseline_km_diff(clouds, bp)));
        row("km-kf", collect(dsp::baseline_km_kf(clouds, bp)));
      }
    }
    outputs["velocity"] = "velocity_report.tsv";
  }

  man["evaluation"] = {{"truth", truth_path}, {"warmup", o.warmup}, {"sigma_gt", o.sigma_gt}, {"outputs", outputs}};
  write_manifest(run, man);
  std::cout << "evaluated " << run.string() << "\n";
  return 0;
}

// bench

struct BenchOptions {
  ConfigOptions cfg;
  std::vector<std::string> sweeps;
  int frames = 0;
  int skip = 2;
};

int cmd_bench(const std::string& dataset, const fs::path& out, const BenchOptions& o) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& s : o.sweeps) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw dsp::ConfigError("--sweep expects key=v1,v2, got '" + s + "'");
    std::string key = s.substr(0, eq);
    if (!dsp::has_config_key(key)) throw dsp::ConfigError("unknown sweep key '" + key + "'");
    std::vector<std::string> vals;
    std::stringstream ss(s.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ',')) vals.push_back(v);
    if (vals.empty()) throw dsp::ConfigError("--sweep " + key + " has no values");
    axes.emplace_back(key, vals);
  }
  auto frames = dsp::read_dataset(dataset);
  if (o.frames > 0 && frames.size() > std::size_t(o.frames)) frames.resize(std::size_t(o.frames));
  make_dir(out);
  std::ofstream t(out / "bench.tsv");
  for (const auto& a : axes) t << a.first << '\t';
  t << "frames\tpreprocess_ms\tvelocity_ms\tpredict_ms\tupdate_ms\tresample_ms\tbirth_ms\ttotal_ms\tlive\n";

  std::vector<std::size_t> idx(axes.size(), 0);
  json runs = json::array();
  while (true) {
    ConfigOptions co = o.cfg;
    for (std::size_t i = 0; i < axes.size(); ++i) co.sets.push_back(axes[i].first + "=" + axes[i].second[idx[i]]);
    auto cfg = build_config(co);
    dsp::DspMap map(cfg);
    dsp::PhaseTimes sum;
    std::size_t n = 0, live = 0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
      auto rep = map.step(frames[k]);
      live = rep.live;
      if (k < std::size_t(o.skip)) continue;
      sum.preprocess += rep.ms.preprocess;
      sum.velocity += rep.ms.velocity;
      sum.predict += rep.ms.predict;
      sum.update += rep.ms.update;
      sum.resample += rep.ms.resample;
      sum.birth += rep.ms.birth;
      sum.total += rep.ms.total;
      ++n;
    }
    const double d = n ? double(n) : 1.0;
    for (std::size_t i = 0; i < axes.size(); ++i) t << axes[i].second[idx[i]] << '\t';
    t << n << '\t' << num(sum.preprocess / d) << '\t' << num(sum.velocity / d) << '\t' << num(sum.predict / d)
      << '\t' << num(sum.update / d) << '\t' << num(sum.resample / d) << '\t' << num(sum.birth / d) << '\t'
      << num(sum.total / d) << '\t' << live << '\n';
    runs.push_back(co.sets);

    std::size_t i = 0;
    for (; i < axes.size(); ++i) {
      if (++idx[i] < axes[i].second.size()) break;
      idx[i] = 0;
    }
    if (i == axes.size()) break;
  }
  json m;
  m["command"] = "bench";
  m["inputs"] = {{"dataset", dataset}, {"config", o.cfg.path}};
  m["sweeps"] = o.sweeps;
  m["runs"] = runs;
  m["threads"] = omp_get_max_threads();
  m["outputs"] = {{"bench", "bench.tsv"}};
  write_manifest(out, m);
  std::cout << "bench: " << runs.size() << " runs into " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("DSP_THREADS")) {
    int n = std::atoi(t);
    if (n > 0) omp_set_num_threads(n);
  }

  CLI::App app{"DSP map: particle-based dynamic occupancy mapping"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(DSP_BUILD_ID));

  std::string world, out, dataset, run, truth;
  std::int64_t sim_seed = -1;
  auto* sim = app.add_subcommand("simulate", "ray-cast a world file into a dataset and ground truth");
  sim->add_option("world", world, "world file")->required();
  sim->add_option("out_dir", out, "output directory")->required();
  sim->add_option("--seed", sim_seed, "override the world seed");

  MapOptions mo;
  auto* mapc = app.add_subcommand("map", "run the map over a dataset");
  mapc->add_option("dataset", dataset, "DSPD dataset")->required();
  mapc->add_option("out_dir", out, "output directory")->required();
  add_config_options(mapc, mo.cfg);
  mapc->add_option("--snapshot-every", mo.snapshot_every, "write occupancy grids every N frames (0 = never)");
  mapc->add_option("--truth", mo.truth, "ground truth; enables velocity estimates at agent positions");
  mapc->add_option("--velocity-radius", mo.velocity_radius, "particle ball radius for velocity estimates");
  mapc->add_flag("--dump-particles", mo.dump_particles, "write the final particle set");
  mapc->add_flag("--slices", mo.slices, "write a PGM slice at sensor height per grid");

  EvalOptions eo;
  auto* ev = app.add_subcommand("evaluate", "score a map run against ground truth");
  ev->add_option("run_dir", run, "map output directory")->required();
  ev->add_option("truth", truth, "ground truth file")->required();
  ev->add_option("--resolutions", eo.resolutions, "resolutions to score")->delimiter(',');
  ev->add_option("--warmup", eo.warmup, "seconds excluded from velocity metrics");
  ev->add_option("--sigma-gt", eo.sigma_gt, "std of the ground-truth velocity Gaussian");
  ev->add_option("--baselines", eo.dataset, "dataset for the KM-Diff and KM-KF baselines");
  ev->add_option("--config", eo.config, "config used by the baselines");
  ev->add_option("--profile", eo.profile, "profile used by the baselines");

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "timing over a factorial parameter sweep");
  bench->add_option("dataset", dataset, "DSPD dataset")->required();
  bench->add_option("out_dir", out, "output directory")->required();
  add_config_options(bench, bo.cfg);
  bench->add_option("--sweep", bo.sweeps, "key=v1,v2,... (repeatable)");
  bench->add_option("--frames", bo.frames, "limit the number of frames");
  bench->add_option("--skip", bo.skip, "warm-up frames excluded from timing");

  std::string dump_profile;
  auto* dc = app.add_subcommand("dump-config", "print every config key with its default");
  dc->add_option("--profile", dump_profile, "profile (desk)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sim) return cmd_simulate(world, out, sim_seed);
    if (*mapc) return cmd_map(dataset, out, mo);
    if (*ev) return cmd_evaluate(run, truth, eo);
    if (*bench) return cmd_bench(dataset, out, bo);
    if (*dc) {
      ConfigOptions co;
      co.profile = dump_profile;
      std::cout << dsp::dump_config(build_config(co));
      return 0;
    }
  } catch (const dsp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dsp::InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dsp::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dsp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
