#pragma once

#include <vector>

#include <Eigen/Core>

#include "dsp/frame.hpp"
#include "dsp/map_state.hpp"
#include "dsp/velocity_estimator.hpp"

namespace dsp {

// Serial is the plain reference path; Parallel runs the OpenMP kernels
enum class Exec { Serial, Parallel };

double likelihood(const Eigen::Vector3d& z, const Eigen::Vector3d& x, double r, const NoiseModel& noise);

enum class MotionClass { Static, Dynamic };

// advance every live particle by dt with the mode's motion model, relocate, apply survival
void predict(MapState& s, double dt, Exec exec = Exec::Parallel);

// particles in the field of view and outside r_min, per pyramid; also refreshes newborn_mass
void rebuild_pyramid_index(MapState& s, Exec exec = Exec::Parallel);

void update(MapState& s, const PreprocessedFrame& pre, Exec exec = Exec::Parallel);
void update_serial(MapState& s, const PreprocessedFrame& pre);
void update_parallel(MapState& s, const PreprocessedFrame& pre);

struct BirthStats {
  std::size_t born = 0;
  std::size_t dropped = 0;
  double prior_weight = 0;  // per newborn
};

BirthStats birth(MapState& s, const PreprocessedFrame& pre, const std::vector<VelocityLabel>& labels);

struct DstMasses {
  double dynamic = 0;
  double stat = 0;
  double ambiguous = 0;
};

double dst_lambda1(const DstMasses& m);
DstMasses voxel_dst_masses(const Particle* slots, std::size_t n, double v_hat);

struct DstCoefficients {
  std::vector<double> lambda1;
  double lambda2(std::size_t v) const { return 1.0 - lambda1[v]; }
};

DstCoefficients dst_coefficients(const MapState& s, double v_hat);

// per-voxel resampling only
void resample(MapState& s, Exec exec = Exec::Parallel);

// resampling fused with the DST and voxel-mass sweep; fills s.lambda_dyn and s.voxel_mass
void resample_fused(MapState& s, Exec exec = Exec::Parallel);

// systematic selection of at most cap distinct slots by weight; returns kept slot indices
std::vector<std::uint32_t> systematic_select(const std::vector<double>& weights, std::size_t cap, double u0);

}  // namespace dsp
