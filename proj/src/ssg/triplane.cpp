#include "ssg/triplane.hpp"

#include <cmath>

#include "ssg/kernels.hpp"
#include "ssg/ops.hpp"

namespace ssg {

namespace {

using kernels::LerpTap;

// One bilinear lookup in channel `c` of a {C, A, B} plane. Both decode paths
// funnel through this and through dot_channels/head below, which is what
// makes decode_grid bit-identical to a decode_point loop.
inline float interp_at(const float* plane, int64_t a, int64_t b, int64_t c, const LerpTap& ta,
                       const LerpTap& tb) {
  const float* p = plane + c * a * b;
  const float v00 = p[int64_t(ta.i0) * b + tb.i0];
  const float v01 = p[int64_t(ta.i0) * b + tb.i1];
  const float v10 = p[int64_t(ta.i1) * b + tb.i0];
  const float v11 = p[int64_t(ta.i1) * b + tb.i1];
  const float lo = v00 + tb.t * (v01 - v00);
  const float hi = v10 + tb.t * (v11 - v10);
  return lo + ta.t * (hi - lo);
}

// hidden-vector projection of one interpolated feature column.
inline void project(const float* w, int64_t hidden, int64_t c_count, const float* f, float* out) {
  for (int64_t h = 0; h < hidden; ++h) {
    const float* row = w + h * c_count;
    double acc = 0.0;
    for (int64_t c = 0; c < c_count; ++c) acc += double(row[c]) * double(f[c]);
    out[h] = float(acc);
  }
}

// Shared second half of the decode: merge the three projected columns,
// ReLU, output affine, sigmoid.
inline float head(const OccupancyDecoder& m, const float* sxy, const float* sxz,
                  const float* syz) {
  const int64_t hidden = m.hidden();
  const float* b1 = m.b1.data();
  const float* w2 = m.w2.data();
  double acc = double(m.b2.data()[0]);
  for (int64_t h = 0; h < hidden; ++h) {
    const float pre = ((sxy[h] + sxz[h]) + syz[h]) + b1[h];
    if (pre > 0.0f) acc += double(w2[h]) * double(pre);
  }
  return float(1.0 / (1.0 + std::exp(-acc)));
}

void check_plane(const Tensor& t, const char* name) {
  SSG_CHECK(t.defined() && t.ndim() == 3, invalid_input,
            std::string("tri-plane map ") + name + " must be a rank-3 tensor");
  SSG_CHECK(t.dim(0) >= 1 && t.dim(1) >= 1 && t.dim(2) >= 1, invalid_input,
            std::string("tri-plane map ") + name + " has an empty extent");
}

}  // namespace

TriPlane::TriPlane(Tensor xy, Tensor xz, Tensor yz)
    : f_xy(std::move(xy)), f_xz(std::move(xz)), f_yz(std::move(yz)) {
  check_plane(f_xy, "xy");
  check_plane(f_xz, "xz");
  check_plane(f_yz, "yz");
  SSG_CHECK(f_xy.dim(0) == f_xz.dim(0) && f_xy.dim(0) == f_yz.dim(0), invalid_input,
            "tri-plane maps disagree on channel count");
  SSG_CHECK(f_xy.dim(1) == f_xz.dim(1), invalid_input,
            "xy and xz maps disagree on the D extent");
  SSG_CHECK(f_xy.dim(2) == f_yz.dim(1), invalid_input,
            "xy and yz maps disagree on the H extent");
  SSG_CHECK(f_xz.dim(2) == f_yz.dim(2), invalid_input,
            "xz and yz maps disagree on the W extent");
}

OccupancyDecoder::OccupancyDecoder(Tensor wxy, Tensor wxz, Tensor wyz, Tensor bias1, Tensor wout,
                                   Tensor bout)
    : w_xy(std::move(wxy)),
      w_xz(std::move(wxz)),
      w_yz(std::move(wyz)),
      b1(std::move(bias1)),
      w2(std::move(wout)),
      b2(std::move(bout)) {
  SSG_CHECK(w_xy.defined() && w_xy.ndim() == 2, invalid_input, "decoder w_xy must be rank-2");
  SSG_CHECK(w_xz.same_shape(w_xy) && w_yz.same_shape(w_xy), invalid_input,
            "decoder first-layer blocks must share one {hidden, C} shape");
  const int64_t h = w_xy.dim(0);
  SSG_CHECK(b1.defined() && b1.ndim() == 1 && b1.dim(0) == h, invalid_input,
            "decoder b1 must have shape {hidden}");
  SSG_CHECK(w2.defined() && w2.ndim() == 2 && w2.dim(0) == 1 && w2.dim(1) == h, invalid_input,
            "decoder w2 must have shape {1, hidden}");
  SSG_CHECK(b2.defined() && b2.numel() == 1, invalid_input, "decoder b2 must hold one value");
}

OccupancyDecoder OccupancyDecoder::clone() const {
  return OccupancyDecoder(w_xy.clone(), w_xz.clone(), w_yz.clone(), b1.clone(), w2.clone(),
                          b2.clone());
}

void query_features(const TriPlane& t, std::array<float, 3> p, float* out) {
  const Dims3 d = t.dims();
  const int64_t c_count = t.channels();
  const LerpTap td = kernels::lerp_tap(p[0], int(d.d));
  const LerpTap th = kernels::lerp_tap(p[1], int(d.h));
  const LerpTap tw = kernels::lerp_tap(p[2], int(d.w));
  for (int64_t c = 0; c < c_count; ++c) {
    out[c] = interp_at(t.f_xy.data(), d.d, d.h, c, td, th);
    out[c_count + c] = interp_at(t.f_xz.data(), d.d, d.w, c, td, tw);
    out[2 * c_count + c] = interp_at(t.f_yz.data(), d.h, d.w, c, th, tw);
  }
}

std::vector<float> query_features(const TriPlane& t, std::array<float, 3> p) {
  std::vector<float> out(size_t(3 * t.channels()));
  query_features(t, p, out.data());
  return out;
}

float decode_point(const TriPlane& t, const OccupancyDecoder& m, std::array<float, 3> p) {
  SSG_CHECK(m.channels() == t.channels(), invalid_input,
            "decoder channel count does not match the tri-plane");
  const int64_t c_count = t.channels();
  const int64_t hidden = m.hidden();
  std::vector<float> f(static_cast<size_t>(3 * c_count));
  query_features(t, p, f.data());
  std::vector<float> sxy(static_cast<size_t>(hidden)), sxz(static_cast<size_t>(hidden)), syz(static_cast<size_t>(hidden));
  project(m.w_xy.data(), hidden, c_count, f.data(), sxy.data());
  project(m.w_xz.data(), hidden, c_count, f.data() + c_count, sxz.data());
  project(m.w_yz.data(), hidden, c_count, f.data() + 2 * c_count, syz.data());
  return head(m, sxy.data(), sxz.data(), syz.data());
}

VoxelGrid decode_grid(const TriPlane& t, const OccupancyDecoder& m, Dims3 dims) {
  SSG_CHECK(dims.d >= 1 && dims.h >= 1 && dims.w >= 1, invalid_input,
            "decode_grid needs at least one cell per axis");
  SSG_CHECK(m.channels() == t.channels(), invalid_input,
            "decoder channel count does not match the tri-plane");
  const Dims3 nd = t.dims();
  const int64_t c_count = t.channels();
  const int64_t hidden = m.hidden();

  const auto taps_d = kernels::axis_resize_table(int(nd.d), int(dims.d));
  const auto taps_h = kernels::axis_resize_table(int(nd.h), int(dims.h));
  const auto taps_w = kernels::axis_resize_table(int(nd.w), int(dims.w));

  // Project each plane once at the query resolution; layout {A, B, hidden}
  // so the merge loop reads contiguous columns.
  auto projected = [&](const Tensor& plane, const Tensor& w, int64_t a, int64_t b,
                       const std::vector<LerpTap>& ta, const std::vector<LerpTap>& tb) {
    Tensor out({a, b, hidden});
    std::vector<float> f(static_cast<size_t>(c_count));
    for (int64_t i = 0; i < a; ++i)
      for (int64_t j = 0; j < b; ++j) {
        for (int64_t c = 0; c < c_count; ++c)
          f[size_t(c)] = interp_at(plane.data(), plane.dim(1), plane.dim(2), c, ta[size_t(i)],
                                   tb[size_t(j)]);
        project(w.data(), hidden, c_count, f.data(), out.data() + (i * b + j) * hidden);
      }
    return out;
  };
  const Tensor sxy = projected(t.f_xy, m.w_xy, dims.d, dims.h, taps_d, taps_h);
  const Tensor sxz = projected(t.f_xz, m.w_xz, dims.d, dims.w, taps_d, taps_w);
  const Tensor syz = projected(t.f_yz, m.w_yz, dims.h, dims.w, taps_h, taps_w);

  VoxelGrid grid({dims.d, dims.h, dims.w});
  float* out = grid.data.data();
  for (int64_t i = 0; i < dims.d; ++i)
    for (int64_t j = 0; j < dims.h; ++j) {
      const float* pxy = sxy.data() + (i * dims.h + j) * hidden;
      for (int64_t k = 0; k < dims.w; ++k)
        *out++ = head(m, pxy, sxz.data() + (i * dims.w + k) * hidden,
                      syz.data() + (j * dims.w + k) * hidden);
    }
  return grid;
}

TriPlane upsample_triplane(const TriPlane& t, Dims3 target_dims) {
  const Dims3 cur = t.dims();
  SSG_CHECK(target_dims.d >= cur.d && target_dims.h >= cur.h && target_dims.w >= cur.w,
            invalid_input,
            "tri-plane upsample cannot shrink " + dims_str(cur) + " to " + dims_str(target_dims));
  if (target_dims == cur) return t;
  const int64_t c_count = t.channels();
  auto resize = [&](const Tensor& plane, int64_t a2, int64_t b2) {
    if (plane.dim(1) == a2 && plane.dim(2) == b2) return plane;
    Tensor out({c_count, a2, b2});
    kernels::resize_plane_bilinear(plane.data(), int(c_count), int(plane.dim(1)),
                                   int(plane.dim(2)), out.data(), int(a2), int(b2));
    return out;
  };
  return TriPlane(resize(t.f_xy, target_dims.d, target_dims.h),
                  resize(t.f_xz, target_dims.d, target_dims.w),
                  resize(t.f_yz, target_dims.h, target_dims.w));
}

TriPlane triplane_value(const TriPlaneVar& t) {
  return TriPlane(t.f_xy.val(), t.f_xz.val(), t.f_yz.val());
}

TriPlaneVar triplane_constant(const TriPlane& t) {
  return {Var::constant(t.f_xy), Var::constant(t.f_xz), Var::constant(t.f_yz)};
}

DecoderVars decoder_vars(const OccupancyDecoder& m) {
  return DecoderVars{Var::leaf(m.w_xy), Var::leaf(m.w_xz), Var::leaf(m.w_yz),
                     Var::leaf(m.b1),   Var::leaf(m.w2),   Var::leaf(m.b2)};
}

OccupancyDecoder decoder_snapshot(const DecoderVars& v) {
  return OccupancyDecoder(v.w_xy.val().clone(), v.w_xz.val().clone(), v.w_yz.val().clone(),
                          v.b1.val().clone(), v.w2.val().clone(), v.b2.val().clone());
}

Var decode_volume(const TriPlaneVar& t, const DecoderVars& m) {
  const Dims3 d = t.dims();
  const int64_t c_count = t.f_xy.shape()[0];
  const int64_t hidden = m.w_xy.shape()[0];
  SSG_CHECK(m.w_xy.shape()[1] == c_count, invalid_input,
            "decoder channel count does not match the tri-plane");

  auto proj = [&](const Var& w, const Var& plane, int64_t a, int64_t b) {
    Var flat = ops::matmul(w, ops::reshape(plane, {c_count, a * b}));
    return ops::reshape(flat, {hidden, a, b});
  };
  Var sxy = proj(m.w_xy, t.f_xy, d.d, d.h);
  Var sxz = proj(m.w_xz, t.f_xz, d.d, d.w);
  Var syz = proj(m.w_yz, t.f_yz, d.h, d.w);

  Var vol = ops::relu_v(ops::plane_merge(sxy, sxz, syz, m.b1, d.d, d.h, d.w));
  Var o = ops::matmul(m.w2, ops::reshape(vol, {hidden, d.volume()}));
  o = ops::add(o, ops::channel_broadcast(m.b2, {1, d.volume()}));
  return ops::reshape(ops::sigmoid_v(o), {1, d.d, d.h, d.w});
}

}  // namespace ssg
