#pragma once

#include <array>

#include "ssg/autograd.hpp"
#include "ssg/common.hpp"
#include "ssg/kernels.hpp"

namespace ssg::ops {

// Differentiable op set. Every op's backward is itself expressed through ops
// in this header, so gradients of gradients (needed by the critic's gradient
// penalty) come out of the same machinery with no special cases.

Var ones_like(const Var& v);
Var zeros_like(const Var& v);

// Elementwise; shapes must match exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, float c);
Var add_scalar(const Var& a, float c);
Var sqrt_v(const Var& a);
Var sigmoid_v(const Var& a);
Var relu_v(const Var& a);
Var leaky_relu_v(const Var& a, float slope);

// Reductions / broadcasts.
Var sum_all(const Var& a);                                   // -> rank-0
Var mean_all(const Var& a);                                  // -> rank-0
Var broadcast_scalar(const Var& s, std::vector<int64_t> shape);
Var channel_sum(const Var& a);                               // {C,...} -> {C}
Var channel_broadcast(const Var& v, std::vector<int64_t> shape);  // {C} -> {C,...}

Var reshape(const Var& a, std::vector<int64_t> shape);

// c = op(a) * op(b); 2-D row-major operands. transa && transb unsupported.
Var matmul(const Var& a, const Var& b, bool transa = false, bool transb = false);

// x {ci,h,w}, w {co,ci,kh,kw}, bias {co} (pass undefined Var for none).
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
Var conv2d_input_grad_op(const Var& g, const Var& w, int stride, int pad,
                         std::array<int64_t, 2> in_hw);
Var conv2d_weight_grad_op(const Var& x, const Var& g, int stride, int pad,
                          std::array<int64_t, 2> k_hw);

// x {ci,d,h,w}, w {co,ci,kd,kh,kw}, bias {co}.
Var conv3d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
Var conv3d_input_grad_op(const Var& g, const Var& w, int stride, int pad,
                         std::array<int64_t, 3> in_dhw);
Var conv3d_weight_grad_op(const Var& x, const Var& g, int stride, int pad,
                          std::array<int64_t, 3> k_dhw);

// out[c,i,j,k] = pxy[c,i,j] + pxz[c,i,k] + pyz[c,j,k] + bias[c]; the fused
// broadcast-sum the per-plane occupancy decode is built on.
Var plane_merge(const Var& pxy, const Var& pxz, const Var& pyz, const Var& bias, int64_t d,
                int64_t h, int64_t w);
Var volume_plane_sum(const Var& x, kernels::Plane plane);
Var plane_to_volume(const Var& p, kernels::Plane plane, int64_t d, int64_t h, int64_t w);

// Per-channel normalization over all trailing axes, with affine parameters.
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);

Var mse(const Var& a, const Var& b);

}  // namespace ssg::ops
