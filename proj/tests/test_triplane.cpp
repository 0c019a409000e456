#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "ssg/autograd.hpp"
#include "ssg/ops.hpp"
#include "ssg/rng.hpp"
#include "ssg/triplane.hpp"

using namespace ssg;
namespace ag = ssg::autograd;

namespace {

TriPlane random_triplane(Rng& rng, int64_t c, Dims3 d, float stddev = 1.0f) {
  Tensor xy({c, d.d, d.h}), xz({c, d.d, d.w}), yz({c, d.h, d.w});
  rng.fill_normal(xy.data(), xy.numel(), stddev);
  rng.fill_normal(xz.data(), xz.numel(), stddev);
  rng.fill_normal(yz.data(), yz.numel(), stddev);
  return TriPlane(std::move(xy), std::move(xz), std::move(yz));
}

OccupancyDecoder random_decoder(Rng& rng, int64_t c, int64_t hidden, float stddev = 0.3f) {
  Tensor wxy({hidden, c}), wxz({hidden, c}), wyz({hidden, c}), b1({hidden}), w2({1, hidden}),
      b2({1});
  rng.fill_normal(wxy.data(), wxy.numel(), stddev);
  rng.fill_normal(wxz.data(), wxz.numel(), stddev);
  rng.fill_normal(wyz.data(), wyz.numel(), stddev);
  rng.fill_normal(b1.data(), b1.numel(), stddev);
  rng.fill_normal(w2.data(), w2.numel(), stddev);
  rng.fill_normal(b2.data(), b2.numel(), stddev);
  return OccupancyDecoder(std::move(wxy), std::move(wxz), std::move(wyz), std::move(b1),
                          std::move(w2), std::move(b2));
}

// Independent scalar re-implementation of the whole decode in double
// precision: clamped cell-center bilinear lookups, one concatenated affine,
// ReLU, output affine, sigmoid.
double ref_decode(const TriPlane& t, const OccupancyDecoder& m, std::array<float, 3> p) {
  auto bilin = [](const Tensor& plane, int64_t c, double u, double v) {
    int64_t a = plane.dim(1), b = plane.dim(2);
    auto tap = [](double x, int64_t n) {
      double s = x * double(n) - 0.5;
      if (s < 0) s = 0;
      if (s > double(n - 1)) s = double(n - 1);
      int64_t i0 = int64_t(std::floor(s));
      if (i0 > n - 1) i0 = n - 1;
      int64_t i1 = std::min(i0 + 1, n - 1);
      return std::tuple<int64_t, int64_t, double>(i0, i1, s - double(i0));
    };
    auto [a0, a1, ta] = tap(u, a);
    auto [b0, b1t, tb] = tap(v, b);
    const float* q = plane.data() + c * a * b;
    double lo = double(q[a0 * b + b0]) * (1 - tb) + double(q[a0 * b + b1t]) * tb;
    double hi = double(q[a1 * b + b0]) * (1 - tb) + double(q[a1 * b + b1t]) * tb;
    return lo * (1 - ta) + hi * ta;
  };
  int64_t c_count = t.channels(), hidden = m.hidden();
  double acc_out = double(m.b2.data()[0]);
  for (int64_t h = 0; h < hidden; ++h) {
    double pre = double(m.b1.data()[h]);
    for (int64_t c = 0; c < c_count; ++c) {
      pre += double(m.w_xy.data()[h * c_count + c]) * bilin(t.f_xy, c, p[0], p[1]);
      pre += double(m.w_xz.data()[h * c_count + c]) * bilin(t.f_xz, c, p[0], p[2]);
      pre += double(m.w_yz.data()[h * c_count + c]) * bilin(t.f_yz, c, p[1], p[2]);
    }
    if (pre > 0) acc_out += double(m.w2.data()[h]) * pre;
  }
  return 1.0 / (1.0 + std::exp(-acc_out));
}

}  // namespace

TEST_CASE("feature lookup: constants, node exactness, closed-form midpoint") {
  // constant planes -> the 3C-vector of the constant everywhere
  Tensor xy({2, 3, 4}), xz({2, 3, 5}), yz({2, 4, 5});
  xy.fill(1.25f);
  xz.fill(1.25f);
  yz.fill(1.25f);
  TriPlane tc(xy, xz, yz);
  for (float u : {0.0f, 0.31f, 0.77f, 1.0f}) {
    auto f = query_features(tc, {u, 1.0f - u, 0.5f * u});
    REQUIRE(f.size() == 6);
    for (float v : f) CHECK(v == 1.25f);
  }

  // queries at cell centers return stored features exactly
  Rng rng(21);
  TriPlane t = random_triplane(rng, 3, {4, 5, 6});
  for (int64_t i : {int64_t(0), int64_t(2), int64_t(3)})
    for (int64_t j : {int64_t(1), int64_t(4)})
      for (int64_t k : {int64_t(0), int64_t(5)}) {
        std::array<float, 3> p = {(float(i) + 0.5f) / 4.0f, (float(j) + 0.5f) / 5.0f,
                                  (float(k) + 0.5f) / 6.0f};
        auto f = query_features(t, p);
        for (int64_t c = 0; c < 3; ++c) {
          CHECK(f[size_t(c)] == t.f_xy.data()[(c * 4 + i) * 5 + j]);
          CHECK(f[size_t(3 + c)] == t.f_xz.data()[(c * 4 + i) * 6 + k]);
          CHECK(f[size_t(6 + c)] == t.f_yz.data()[(c * 5 + j) * 6 + k]);
        }
      }

  // 2x2 plane {0,1,2,3}: the patch midpoint averages all four values
  Tensor q_xy = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
  Tensor q_xz = Tensor::zeros({1, 2, 2});
  Tensor q_yz = Tensor::zeros({1, 2, 2});
  TriPlane tq(q_xy, q_xz, q_yz);
  auto f = query_features(tq, {0.5f, 0.5f, 0.5f});
  CHECK(f[0] == doctest::Approx(1.5f));

  // out-of-range components clamp to the border
  auto lo = query_features(t, {-0.4f, 0.37f, 1.9f});
  auto cl = query_features(t, {0.0f, 0.37f, 1.0f});
  for (size_t i = 0; i < lo.size(); ++i) CHECK(lo[i] == cl[i]);
}

TEST_CASE("feature lookup is linear in the planes") {
  Rng rng(22);
  TriPlane t1 = random_triplane(rng, 4, {5, 6, 7});
  TriPlane t2 = random_triplane(rng, 4, {5, 6, 7});
  const float a = 0.7f, b = -1.3f;
  Tensor cxy({4, 5, 6}), cxz({4, 5, 7}), cyz({4, 6, 7});
  for (int64_t i = 0; i < cxy.numel(); ++i)
    cxy.data()[i] = a * t1.f_xy.data()[i] + b * t2.f_xy.data()[i];
  for (int64_t i = 0; i < cxz.numel(); ++i)
    cxz.data()[i] = a * t1.f_xz.data()[i] + b * t2.f_xz.data()[i];
  for (int64_t i = 0; i < cyz.numel(); ++i)
    cyz.data()[i] = a * t1.f_yz.data()[i] + b * t2.f_yz.data()[i];
  TriPlane tc(cxy, cxz, cyz);
  for (auto p : std::vector<std::array<float, 3>>{{0.1f, 0.9f, 0.4f}, {0.66f, 0.33f, 0.5f}}) {
    auto fc = query_features(tc, p);
    auto f1 = query_features(t1, p);
    auto f2 = query_features(t2, p);
    for (size_t i = 0; i < fc.size(); ++i)
      CHECK(fc[i] == doctest::Approx(a * f1[i] + b * f2[i]).epsilon(1e-4));
  }
}

TEST_CASE("point decode matches an independent scalar re-implementation") {
  Rng rng(23);
  TriPlane t = random_triplane(rng, 5, {4, 6, 5});
  OccupancyDecoder m = random_decoder(rng, 5, 8);
  for (auto p : std::vector<std::array<float, 3>>{
           {0.5f, 0.5f, 0.5f}, {0.125f, 0.875f, 0.3f}, {0.0f, 1.0f, 0.71f}, {0.9f, 0.04f, 0.62f}}) {
    float got = decode_point(t, m, p);
    CHECK(got > 0.0f);
    CHECK(got < 1.0f);
    CHECK(got == doctest::Approx(float(ref_decode(t, m, p))).epsilon(1e-5));
  }
}

TEST_CASE("zeroed decoder collapses to its output bias") {
  Rng rng(24);
  TriPlane t = random_triplane(rng, 3, {4, 4, 4});
  Tensor z({2, 3}), b1 = Tensor::zeros({2}), w2 = Tensor::zeros({1, 2});
  z.fill(0.0f);
  SUBCASE("zero everything -> exactly one half") {
    OccupancyDecoder m(z, z, z, b1, w2, Tensor::zeros({1}));
    CHECK(decode_point(t, m, {0.3f, 0.6f, 0.9f}) == 0.5f);
  }
  SUBCASE("zero weights -> sigmoid of the output bias") {
    OccupancyDecoder m(z, z, z, b1, w2, Tensor::full({1}, -1.2f));
    float want = 1.0f / (1.0f + std::exp(1.2f));
    CHECK(decode_point(t, m, {0.3f, 0.6f, 0.9f}) == doctest::Approx(want));
  }
}

TEST_CASE("grid decode is bit-identical to a per-point loop") {
  Rng rng(25);
  TriPlane t = random_triplane(rng, 4, {5, 4, 6});
  OccupancyDecoder m = random_decoder(rng, 4, 8);
  // native extents, a coarser grid, and a finer one
  for (Dims3 dims : {Dims3{5, 4, 6}, Dims3{3, 2, 4}, Dims3{11, 9, 14}}) {
    VoxelGrid g = decode_grid(t, m, dims);
    REQUIRE(g.dims() == dims);
    for (int64_t i = 0; i < dims.d; ++i)
      for (int64_t j = 0; j < dims.h; ++j)
        for (int64_t k = 0; k < dims.w; ++k) {
          std::array<float, 3> p = {(float(i) + 0.5f) / float(dims.d),
                                    (float(j) + 0.5f) / float(dims.h),
                                    (float(k) + 0.5f) / float(dims.w)};
          CHECK(g.at(i, j, k) == decode_point(t, m, p));
        }
  }

  // single-cell grid samples the volume center
  VoxelGrid one = decode_grid(t, m, {1, 1, 1});
  CHECK(one.at(0, 0, 0) == decode_point(t, m, {0.5f, 0.5f, 0.5f}));
}

TEST_CASE("grid decode renders far above the stored resolution") {
  Rng rng(26);
  TriPlane t = random_triplane(rng, 4, {6, 6, 6});
  OccupancyDecoder m = random_decoder(rng, 4, 8);
  VoxelGrid g = decode_grid(t, m, {48, 48, 48});  // 8x per axis, 512x the cells
  CHECK(g.volume() == 48 * 48 * 48);
  for (int64_t i = 0; i < g.volume(); ++i) {
    CHECK(g.data.data()[i] > 0.0f);
    CHECK(g.data.data()[i] < 1.0f);
  }
}

TEST_CASE("tri-plane storage stays quadratic in resolution") {
  for (Dims3 d : {Dims3{4, 4, 4}, Dims3{15, 15, 15}, Dims3{64, 48, 96}}) {
    int64_t c = 32;
    int64_t planes = c * (d.d * d.h + d.d * d.w + d.h * d.w);
    CHECK(planes < c * d.volume());
  }
}

TEST_CASE("tri-plane upsampling") {
  Rng rng(27);
  TriPlane t = random_triplane(rng, 3, {4, 5, 6});

  SUBCASE("identity at current dims") {
    TriPlane u = upsample_triplane(t, {4, 5, 6});
    for (int64_t i = 0; i < t.f_xy.numel(); ++i) CHECK(u.f_xy.data()[i] == t.f_xy.data()[i]);
  }
  SUBCASE("constants stay constant at any size") {
    Tensor xy({2, 2, 2}), xz({2, 2, 2}), yz({2, 2, 2});
    xy.fill(0.4f);
    xz.fill(0.4f);
    yz.fill(0.4f);
    TriPlane u = upsample_triplane(TriPlane(xy, xz, yz), {7, 5, 9});
    CHECK(u.dims() == (Dims3{7, 5, 9}));
    CHECK(u.channels() == 2);
    for (int64_t i = 0; i < u.f_xy.numel(); ++i) CHECK(u.f_xy.data()[i] == doctest::Approx(0.4f));
    for (int64_t i = 0; i < u.f_yz.numel(); ++i) CHECK(u.f_yz.data()[i] == doctest::Approx(0.4f));
  }
  SUBCASE("2x2 -> 3x3 center averages the four corners") {
    Tensor xy = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
    Tensor xz = Tensor::zeros({1, 2, 2});
    Tensor yz = Tensor::zeros({1, 2, 2});
    TriPlane u = upsample_triplane(TriPlane(xy, xz, yz), {3, 3, 2});
    CHECK(u.f_xy.data()[1 * 3 + 1] == doctest::Approx(1.5f));
  }
  SUBCASE("shrinking is rejected") {
    CHECK_THROWS_AS(upsample_triplane(t, {4, 4, 6}), Error);
  }
}

TEST_CASE("graph decode agrees with the plain decode and is differentiable") {
  Rng rng(28);
  TriPlane t = random_triplane(rng, 4, {5, 4, 6}, 0.5f);
  OccupancyDecoder m = random_decoder(rng, 4, 8);

  TriPlaneVar tv{Var::leaf(t.f_xy.clone()), Var::leaf(t.f_xz.clone()), Var::leaf(t.f_yz.clone())};
  DecoderVars mv = decoder_vars(m);
  Var vol = decode_volume(tv, mv);
  REQUIRE(vol.shape() == std::vector<int64_t>({1, 5, 4, 6}));

  VoxelGrid plain = decode_grid(t, m, {5, 4, 6});
  for (int64_t i = 0; i < plain.volume(); ++i)
    CHECK(vol.val().data()[i] == doctest::Approx(plain.data.data()[i]).epsilon(1e-5));

  // analytic gradient of the mean occupancy w.r.t. every input, checked
  // against central differences. The FD check needs a kink-free function:
  // with random parameters some ReLU pre-activations sit within the FD step
  // of zero and their gates flip, so bias the gates safely on instead
  // (the mixed-gate case is covered by the value comparison above).
  TriPlane ts = random_triplane(rng, 4, {5, 4, 6}, 0.2f);
  OccupancyDecoder ms = random_decoder(rng, 4, 8, 0.2f);
  ms.b1.fill(0.75f);
  tv = TriPlaneVar{Var::leaf(ts.f_xy), Var::leaf(ts.f_xz), Var::leaf(ts.f_yz)};
  mv = decoder_vars(ms);
  auto loss_fn = [&] { return ops::mean_all(decode_volume(tv, mv)); };
  Var loss = loss_fn();
  std::vector<Var> wrt = {tv.f_xy, tv.f_xz, tv.f_yz, mv.w_xy, mv.b1, mv.w2, mv.b2};
  for (auto& v : wrt) v.zero_grad();
  ag::backward(loss, wrt);
  double worst = 0;
  for (Var& v : wrt) {
    REQUIRE(v.has_grad());
    for (int64_t i = 0; i < std::min<int64_t>(v.numel(), 6); ++i) {
      float orig = v.mutable_val().data()[i];
      const float h = 1e-2f;
      v.mutable_val().data()[i] = orig + h;
      double fp = loss_fn().val().item();
      v.mutable_val().data()[i] = orig - h;
      double fm = loss_fn().val().item();
      v.mutable_val().data()[i] = orig;
      double want = (fp - fm) / (2.0 * double(h));
      double got = v.grad().data()[i];
      worst = std::max(worst, std::abs(want - got) / std::max(1e-3, std::abs(want) + std::abs(got)));
    }
  }
  CHECK(worst < 2e-2);
}

TEST_CASE("point-decode gradients w.r.t. plane features are exact") {
  // analytic chain (test-side, double precision):
  // d o / d f_xy[c, n0, n1] = o(1-o) * sum_h w2[h] [pre_h>0] w_xy[h,c] * bw
  // where bw is the bilinear weight of node (n0, n1) at the query point.
  Rng rng(29);
  TriPlane t = random_triplane(rng, 3, {4, 5, 6}, 0.5f);
  OccupancyDecoder m = random_decoder(rng, 3, 8);
  std::array<float, 3> p = {0.37f, 0.81f, 0.22f};

  // recompute the forward pieces in double to get the gate states
  int64_t c_count = 3, hidden = 8;
  std::vector<float> f(static_cast<size_t>(3 * c_count));
  query_features(t, p, f.data());
  std::vector<double> pre(static_cast<size_t>(hidden));
  double o = 0;
  {
    double acc = double(m.b2.data()[0]);
    for (int64_t h = 0; h < hidden; ++h) {
      double s = double(m.b1.data()[h]);
      for (int64_t c = 0; c < c_count; ++c) {
        s += double(m.w_xy.data()[h * c_count + c]) * f[size_t(c)];
        s += double(m.w_xz.data()[h * c_count + c]) * f[size_t(c_count + c)];
        s += double(m.w_yz.data()[h * c_count + c]) * f[size_t(2 * c_count + c)];
      }
      pre[size_t(h)] = s;
      if (s > 0) acc += double(m.w2.data()[h]) * s;
    }
    o = 1.0 / (1.0 + std::exp(-acc));
  }

  // bilinear weights of the xy-plane nodes touched by p
  auto tap = [](double x, int64_t n) {
    double s = x * double(n) - 0.5;
    s = std::min(std::max(s, 0.0), double(n - 1));
    int64_t i0 = int64_t(std::floor(s));
    return std::pair<int64_t, double>(std::min(i0, n - 1), s - std::floor(s));
  };
  auto [i0, ta] = tap(p[0], 4);
  auto [j0, tb] = tap(p[1], 5);
  struct Node {
    int64_t i, j;
    double w;
  };
  Node nodes[4] = {{i0, j0, (1 - ta) * (1 - tb)},
                   {i0, std::min(j0 + 1, int64_t(4)), (1 - ta) * tb},
                   {std::min(i0 + 1, int64_t(3)), j0, ta * (1 - tb)},
                   {std::min(i0 + 1, int64_t(3)), std::min(j0 + 1, int64_t(4)), ta * tb}};

  double worst = 0;
  for (int64_t c = 0; c < c_count; ++c) {
    double chain = 0;
    for (int64_t h = 0; h < hidden; ++h)
      if (pre[size_t(h)] > 0) chain += double(m.w2.data()[h]) * double(m.w_xy.data()[h * c_count + c]);
    for (const Node& nd : nodes) {
      double analytic = o * (1 - o) * chain * nd.w;
      // central differences on the double-precision reference path (the
      // float path is tied to it at float precision elsewhere)
      float* cell = t.f_xy.data() + (c * 4 + nd.i) * 5 + nd.j;
      const float h = 1e-3f;
      float orig = *cell;
      *cell = orig + h;
      double fp = ref_decode(t, m, p);
      *cell = orig - h;
      double fm = ref_decode(t, m, p);
      *cell = orig;
      double fd = (fp - fm) / (double(orig + h) - double(orig - h));
      worst = std::max(worst, std::abs(fd - analytic) / std::max(1e-6, std::abs(analytic)));
    }
  }
  CHECK(worst < 1e-4);
}
