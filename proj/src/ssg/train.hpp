#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "ssg/autograd.hpp"
#include "ssg/nets.hpp"
#include "ssg/rng.hpp"
#include "ssg/triplane.hpp"
#include "ssg/voxgrid.hpp"

namespace ssg {

// Knobs of the progressive adversarial fit. Defaults are the production
// settings; tests shrink the architecture fields to keep runtimes small.
struct TrainConfig {
  double alpha = 10.0;        // reconstruction weight in the generator loss
  double gp_weight = 0.1;     // gradient-penalty weight in the critic loss
  int iters_per_scale = 2000;
  int d_steps = 3;            // critic updates per iteration
  int g_steps = 3;            // generator updates per iteration
  double lr = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double sigma_hat = 0.1;     // noise-std scale relative to reconstruction error
  uint64_t seed = 0;

  int64_t channels = 32;      // tri-plane feature width
  int64_t hidden = 32;        // occupancy-decoder hidden width
  int64_t critic_width = 32;  // critic conv channels
  int64_t pool_bins = 8;      // projection pooling slabs

  void validate() const;  // config_error on out-of-range fields
};

// Everything synthesis needs, immutable once training completes: the
// projection net, one generator + occupancy decoder per level, the
// per-level noise stds, the fixed base noise that reproduces the training
// shape, and the pyramid extents the stack was fit to.
struct ModelStack {
  ProjectionNet p;
  std::vector<GeneratorLevel> generators;
  std::vector<OccupancyDecoder> decoders;
  std::vector<double> sigmas;  // sigmas[0] == 1
  Tensor z0_star;              // {D0, H0, W0}
  std::vector<Dims3> level_dims;
  TrainConfig config;

  int num_scales() const { return static_cast<int>(generators.size()) - 1; }
  void validate() const;  // cross-field consistency, invalid_state on breach
};

// ----- losses --------------------------------------------------------------

// A critic as a function from a {1,D,H,W} grid to a score map (any shape);
// the scalar score is always the mean of that map. Generalizing over the
// callable keeps the loss contracts testable with closed-form critics.
using CriticFn = std::function<Var(const Var&)>;

Var critic_score(const CriticFn& critic, const Var& grid);

// WGAN gradient penalty for one real/fake pair: blend them at a uniform
// random epsilon, differentiate the critic score at the blend, and return
// (|grad| - 1)^2 as a recorded scalar (differentiable again w.r.t. the
// critic parameters). A critic with no input dependence yields exactly 1.
Var gradient_penalty(const CriticFn& critic, const VoxelGrid& real, const VoxelGrid& fake,
                     Rng& rng);

struct AdvLosses {
  Var d_loss;   // s(fake) - s(real) + gp_weight * penalty
  Var g_loss;   // -s(fake)
  Var penalty;  // unweighted gradient penalty
};

// `fake` is the decoded generator output shaped {1,D,H,W}; pass it recorded
// when generator gradients are wanted, constant for critic updates.
AdvLosses adversarial_losses(const CriticFn& critic, const VoxelGrid& real, const Var& fake,
                             double gp_weight, Rng& rng);

// sigma_hat * RMSE(rec_prev - x_i); the caller upsamples the previous
// level's reconstruction to x_i's dims first. Dim mismatch is an error.
double compute_sigma(const VoxelGrid& rec_prev, const VoxelGrid& x_i, double sigma_hat);

// ----- optimizer ------------------------------------------------------------

// Standard Adam with bias correction. Parameters that carry no gradient in
// a given step are skipped entirely (their moments and step counts hold).
class Adam {
public:
  Adam(std::vector<Var> params, double lr, double beta1, double beta2, double eps = 1e-8);

  void zero_grad();
  void step();

private:
  struct Slot {
    Var param;
    Tensor m, v;
    int64_t t = 0;
  };
  std::vector<Slot> slots_;
  double lr_, b1_, b2_, eps_;
};

// ----- orchestration --------------------------------------------------------

// Mutable training-in-progress view: the pyramid being fit, the stack built
// so far (levels 0..completed_scales-1 frozen), and the carried critic.
struct TrainState {
  VoxelPyramid pyramid;
  TrainConfig config;
  ModelStack stack;
  DiscriminatorNet critic;
  int completed_scales = 0;
};

// The fixed noise that reproduces the training shape: the stored base draw
// plus zero plane noise at every trained level's extents.
NoiseSpec reconstruction_noise(const ModelStack& stack);

// Run the frozen stack through level `upto` (inclusive) at the extents
// implied by noise.z0's dims. Pure inference; records no graph.
TriPlane cascade_planes(const ModelStack& stack, const NoiseSpec& noise, int upto);

// Seed the run: snapshot config + pyramid geometry and draw the base
// reconstruction noise. Scales then train strictly in order.
TrainState init_training(VoxelPyramid pyramid, TrainConfig config);

// Fit one level (must equal the number of completed scales). Writes one
// log line per 100 iterations to `log` when given. Aborts with
// training_diverged if any loss turns non-finite.
void train_scale(TrainState& st, int level, std::ostream* log = nullptr);

// Full progressive run. `scale_done` fires after each completed level
// (checkpointing hook); the finished stack is returned.
ModelStack train_all(const VoxelPyramid& pyramid, const TrainConfig& config,
                     std::ostream* log = nullptr,
                     const std::function<void(const TrainState&, int)>& scale_done = {});

}  // namespace ssg
