#pragma once

#include <array>
#include <vector>

#include "ssg/autograd.hpp"
#include "ssg/common.hpp"
#include "ssg/tensor.hpp"
#include "ssg/voxgrid.hpp"

namespace ssg {

// Hybrid volume representation: three axis-aligned 2D feature maps instead
// of a dense C x D x H x W grid. A point's feature vector is the
// concatenation of bilinear lookups in the three planes, so storage grows
// with the square of the resolution rather than the cube.
//
// Axis naming: component 0 of a normalized position runs along D, component
// 1 along H, component 2 along W. The "xy" plane spans (D, H), "xz" spans
// (D, W), "yz" spans (H, W).
struct TriPlane {
  Tensor f_xy;  // {C, D, H}
  Tensor f_xz;  // {C, D, W}
  Tensor f_yz;  // {C, H, W}

  TriPlane() = default;
  TriPlane(Tensor xy, Tensor xz, Tensor yz);  // validates shape agreement

  int64_t channels() const { return f_xy.dim(0); }
  Dims3 dims() const { return {f_xy.dim(1), f_xy.dim(2), f_xz.dim(2)}; }
  // Stored element count: C * (D*H + D*W + H*W), versus C*D*H*W dense.
  int64_t numel() const { return f_xy.numel() + f_xz.numel() + f_yz.numel(); }
};

// Two-layer occupancy head: affine(3C -> hidden) + ReLU, then
// affine(hidden -> 1) + Sigmoid. The first affine is stored split into one
// block per source plane so grid decoding can project each plane once and
// share the result across a whole axis of query points. The input is the
// feature vector alone; the query position itself is deliberately not an
// input, which is what lets one decoder serve every scale.
struct OccupancyDecoder {
  Tensor w_xy, w_xz, w_yz;  // {hidden, C} each
  Tensor b1;                // {hidden}
  Tensor w2;                // {1, hidden}
  Tensor b2;                // {1}

  OccupancyDecoder() = default;
  OccupancyDecoder(Tensor wxy, Tensor wxz, Tensor wyz, Tensor bias1, Tensor wout, Tensor bout);

  int64_t hidden() const { return w_xy.dim(0); }
  int64_t channels() const { return w_xy.dim(1); }
  OccupancyDecoder clone() const;
};

// Bilinear feature lookup at p = (pd, ph, pw), each in [0,1] (cell-center
// convention; out-of-range components clamp to the border). `out` receives
// 3C values ordered [xy-part, xz-part, yz-part].
void query_features(const TriPlane& t, std::array<float, 3> p, float* out);
std::vector<float> query_features(const TriPlane& t, std::array<float, 3> p);

// Occupancy at a single continuous position, strictly inside (0,1).
float decode_point(const TriPlane& t, const OccupancyDecoder& m, std::array<float, 3> p);

// Occupancy sampled at every cell center of a (D',H',W') grid. The grid may
// be finer or coarser than the plane extents -- this is the querying path
// that renders a trained representation at arbitrary output resolution.
// Bit-identical to calling decode_point at each cell center.
VoxelGrid decode_grid(const TriPlane& t, const OccupancyDecoder& m, Dims3 dims);

// Bilinearly enlarge every plane so the joint extents become target_dims.
// Shrinking any axis is an error.
TriPlane upsample_triplane(const TriPlane& t, Dims3 target_dims);

// Graph-side mirror of the tri-plane + decoder pair, for training. Tensors
// are shared with whatever the Vars were built from.
struct TriPlaneVar {
  Var f_xy, f_xz, f_yz;
  Dims3 dims() const { return {f_xy.shape()[1], f_xy.shape()[2], f_xz.shape()[2]}; }
};

struct DecoderVars {
  Var w_xy, w_xz, w_yz, b1, w2, b2;
  std::vector<Var> params() const { return {w_xy, w_xz, w_yz, b1, w2, b2}; }
};

// Conversions between the two forms, both sharing storage: the plain view
// feeds tensor-side consumers (decode_grid, upsample_triplane), the constant
// view re-enters a graph without recording anything upstream.
TriPlane triplane_value(const TriPlaneVar& t);
TriPlaneVar triplane_constant(const TriPlane& t);

// Leaf Vars sharing storage with `m` (optimizer steps write through).
DecoderVars decoder_vars(const OccupancyDecoder& m);
// Detached copy of the current parameter values.
OccupancyDecoder decoder_snapshot(const DecoderVars& v);

// Differentiable decode of the full volume at the planes' native extents:
// sigmoid(w2 . relu(merge of per-plane projections + b1) + b2), shape
// {1, D, H, W}. Gradients flow to the planes and the decoder parameters.
Var decode_volume(const TriPlaneVar& t, const DecoderVars& m);

}  // namespace ssg
