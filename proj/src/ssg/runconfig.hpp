#pragma once

#include <string>

#include "ssg/train.hpp"
#include "ssg/voxgrid.hpp"

namespace ssg {

// Merged settings for one training run, read from a flat key=value file.
// `#` starts a comment, blank lines are ignored, every key may appear at
// most once, and unknown keys are rejected outright. Recognized keys:
//
//   pyramid.ratio          per-level downscale factor in (0,1)
//   pyramid.min_dim        floor for the smallest coarsest-level axis
//   pyramid.blur_sigma     Gaussian blur applied to downsampled levels
//   pyramid.num_scales     level count above the base (-1 = pick from ratio)
//   train.alpha            reconstruction weight in the generator loss
//   train.gp_weight        gradient-penalty weight in the critic loss
//   train.iters_per_scale  iterations per pyramid level
//   train.d_steps          critic updates per iteration
//   train.g_steps          generator updates per iteration
//   train.lr               Adam learning rate
//   train.adam_beta1       Adam first-moment decay
//   train.adam_beta2       Adam second-moment decay
//   train.sigma_hat        noise-std scale relative to reconstruction error
//   train.seed             master seed for the whole run
//   train.channels         tri-plane feature width
//   train.hidden           occupancy-decoder hidden width
//   train.critic_width     critic conv channels
//   train.pool_bins        projection pooling slabs
//   input.resolution       largest-dim voxel resolution when input is a mesh
struct RunConfig {
  PyramidConfig pyramid;
  TrainConfig train;
  int input_resolution = 128;

  void validate() const;  // config_error on any out-of-domain value
};

// Parse from file contents / a file on disk. Reports the offending key in
// every rejection message.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Canonical serialization: fixed key order, exact round-trip for every
// field (parse_run_config(write_run_config(c)) reproduces c bit-for-bit).
std::string write_run_config(const RunConfig& config);

}  // namespace ssg
