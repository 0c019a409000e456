#pragma once

// Inference-time synthesis on a trained stack: random generation at
// user-chosen sizes and resolutions, the fixed reconstruction, and latent
// interpolation between two base-noise draws (extrapolation included).
//
// Everything here is a pure function of (stack, request): all randomness
// comes from seeds inside the request, and the stack is never mutated, so
// concurrent calls with independent requests are safe.

#include <cstdint>

#include "ssg/common.hpp"
#include "ssg/train.hpp"
#include "ssg/triplane.hpp"
#include "ssg/voxgrid.hpp"

namespace ssg {

enum class GenMode {
  random,       // fresh noise from `seed`
  reconstruct,  // the stored base noise with zero plane noise
  interpolate,  // blend two base-noise draws, plane noise held fixed
};

// Interpolation holds z_1..z_N fixed across the alpha sweep: either all
// zeros (the reconstruction convention) or one sample drawn from `seed`.
enum class FixedPlaneNoise { zeros, sample };

struct GenerationRequest {
  // Base-noise extents; {0,0,0} means the trained coarsest dims. Changing
  // them resizes the whole output (every level's extents follow by ratio).
  Dims3 coarse_dims{0, 0, 0};

  // Decode resolution: explicit dims win; otherwise the finest-level extents
  // (scaled when coarse_dims are) times `multiplier`.
  Dims3 output_dims{0, 0, 0};
  double multiplier = 1.0;  // >= 1

  uint64_t seed = 0;
  GenMode mode = GenMode::random;

  // interpolate-mode fields
  double alpha = 0.0;
  uint64_t seed_a = 0;
  uint64_t seed_b = 0;
  FixedPlaneNoise fixed_planes = FixedPlaneNoise::zeros;

  // Raw occupancies are the default output (meshing consumes raw values);
  // binarization at > 0.5 is opt-in.
  bool binarize = false;

  void validate() const;  // throws invalid_input on a bad field
};

// Draw a full noise stack for `stack` at the given base extents, using the
// stack's own per-level noise stds.
NoiseSpec draw_noise(const ModelStack& stack, Dims3 coarse_dims, uint64_t seed);

// Run the whole generator hierarchy on `noise`: T_0 = G_0(P(Z_0)), then
// T_{i+1} = G_{i+1}(upsample(T_i), z_{i+1}); returns the finest-level planes.
TriPlane cascade(const ModelStack& stack, const NoiseSpec& noise);

// Synthesize one grid per `request`; dispatches on request.mode.
VoxelGrid generate(const ModelStack& stack, const GenerationRequest& request);

// The training-time reconstruction {Z_0*, 0, ..., 0}, decoded at
// `output_dims` ({0,0,0} means the finest trained extents). Deterministic.
VoxelGrid reconstruct(const ModelStack& stack, Dims3 output_dims = {0, 0, 0});

// Z_0^alpha = (1-alpha)*Z_0^a + alpha*Z_0^b under fixed plane noise; alpha
// outside [0,1] extrapolates. At alpha 0 or 1 the result is bitwise equal to
// the corresponding endpoint's cascade.
VoxelGrid interpolate(const ModelStack& stack, const GenerationRequest& request);

// Threshold a raw occupancy grid at > 0.5 into {0,1} values (the same
// convention as VoxelGrid::occupied_fraction).
VoxelGrid binarize_grid(const VoxelGrid& grid);

}  // namespace ssg
