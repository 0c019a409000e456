#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ssg/autograd.hpp"
#include "ssg/common.hpp"
#include "ssg/rng.hpp"
#include "ssg/tensor.hpp"
#include "ssg/triplane.hpp"

namespace ssg {

// Network building blocks for the multi-scale stack. Parameters are held as
// leaf Vars so one struct serves both training (optimizer steps write
// through, gradients accumulate on the leaves) and inference (forwards run
// under NoGradGuard and record nothing). All convolutions use zero padding;
// hidden activations are LeakyReLU(0.2); instance norm uses eps 1e-5 with
// trainable scale/shift started at identity.

// One convolution block: kernel + bias, optionally followed by instance
// norm + LeakyReLU. The same struct covers 2D and 3D blocks; the kernel's
// rank decides which convolution applies. `gamma`/`beta` stay undefined for
// plain (un-normalized, un-activated) blocks.
struct ConvBlock {
  Var w;            // {co, ci, k, k} or {co, ci, k, k, k}
  Var b;            // {co}
  Var gamma, beta;  // {co} when normalized, undefined otherwise

  bool normalized() const { return gamma.defined(); }
  void collect(std::vector<Var>& out) const;
  ConvBlock clone() const;
};

// Four-block 2D conv net operating on one feature plane: three
// Conv3x3 + IN + LReLU blocks and a plain Conv3x3, all stride 1, padding 1,
// constant channel width. Extent-preserving by construction.
struct PlaneNet {
  std::array<ConvBlock, 4> blocks;

  Var forward(const Var& x) const;  // {C,A,B} -> {C,A,B}
  void collect(std::vector<Var>& out) const;
};

// One level of the generator hierarchy: an independent PlaneNet per plane.
// Levels above the base combine their input as out = T_in + psi(z + T_in);
// the base level has no skip and takes no noise: out = psi(T_in).
struct GeneratorLevel {
  PlaneNet xy, xz, yz;
  bool has_skip_and_noise = true;

  std::vector<Var> params() const;
};

// Turns the base-level 3D noise volume into a correlated tri-plane map:
// for each plane, the volume is adaptively mean-pooled along the orthogonal
// axis into `pool_bins` slabs (treated as channels) and then mixed by a 1x1
// convolution up to the feature width. Output extents always equal the
// volume's face extents, whatever the input size.
struct ProjectionNet {
  ConvBlock xy, xz, yz;  // plain 1x1 conv blocks, {C, pool_bins, 1, 1}
  int64_t pool_bins = 8;

  std::vector<Var> params() const;
};

// Patch critic: three 3x3x3 conv blocks, the first with stride 2 (halving
// every axis), the rest stride 1; padding 1 throughout. Each element of the
// resulting score map rates one 11x11x11 patch of the input grid; the
// training loss averages the map into a scalar score.
struct DiscriminatorNet {
  std::array<ConvBlock, 3> blocks;

  std::vector<Var> params() const;
  DiscriminatorNet clone() const;
};

// Per-level plane-noise triple. Maps are single-channel; the generator
// broadcasts them across feature channels when adding to the input planes.
struct PlaneNoise {
  Tensor xy;  // {D, H}
  Tensor xz;  // {D, W}
  Tensor yz;  // {H, W}
};

// The complete noise input of one synthesis pass: a base 3D volume plus one
// plane-noise triple per upper level. `planes[i-1]` feeds level i.
struct NoiseSpec {
  Tensor z0;                       // {D0, H0, W0}
  std::vector<PlaneNoise> planes;  // levels 1..N

  int num_scales() const { return static_cast<int>(planes.size()); }
};

// ----- construction ------------------------------------------------------

// Conv kernels are drawn from Normal(0, 0.02); biases start at zero, norm
// scale/shift at identity. Each factory consumes the rng in a fixed
// documented order (blocks in sequence, xy/xz/yz in that order), so a seeded
// stream reproduces parameters exactly.
PlaneNet make_plane_net(int64_t channels, Rng& rng);
GeneratorLevel make_generator(int64_t channels, bool has_skip_and_noise, Rng& rng);
ProjectionNet make_projection(int64_t channels, int64_t pool_bins, Rng& rng);
DiscriminatorNet make_discriminator(int64_t in_channels, int64_t width, Rng& rng);
// Occupancy head over `channels`-wide planes with one hidden layer.
OccupancyDecoder make_decoder(int64_t channels, int64_t hidden, Rng& rng);

// ----- forwards -----------------------------------------------------------

// Project a noise volume {D,H,W} onto the three planes.
TriPlaneVar project(const ProjectionNet& p, const Tensor& z0);

// Apply one generator level. `z` may be null (equivalent to zero noise);
// passing noise to a level without the noise path is an error, as is any
// extent mismatch between `z` and `t_in`.
TriPlaneVar generator_forward(const GeneratorLevel& g, const TriPlaneVar& t_in,
                              const PlaneNoise* z);

// Score a voxel grid shaped {1,D,H,W}; result is {width, ceil(D/2),
// ceil(H/2), ceil(W/2)}. Every grid axis must cover at least one full
// receptive field (11 voxels).
Var discriminator_forward(const DiscriminatorNet& d, const Var& grid);

// ----- noise --------------------------------------------------------------

// Per-level extents when the base level is regenerated at `target_coarse`:
// along each axis, level i gets max(1, round(target * level_i / level_0)).
// The trained coarsest dims reproduce `level_dims` exactly, and integer
// stretches of the target scale every level by the same factor.
std::vector<Dims3> scaled_level_dims(const std::vector<Dims3>& level_dims, Dims3 target_coarse);

// Draw the full noise stack: z0 ~ Normal(0, sigmas[0]^2) at target_coarse,
// and per level i >= 1 a plane triple ~ Normal(0, sigmas[i]^2) at that
// level's scaled extents. Every component gets its own derived stream keyed
// by (level, plane), so draws are independent of each other's sizes and the
// whole spec is deterministic in `seed`.
NoiseSpec sample_noise(const std::vector<Dims3>& level_dims, Dims3 target_coarse,
                       const std::vector<double>& sigmas, uint64_t seed);

}  // namespace ssg
