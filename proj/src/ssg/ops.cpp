#include "ssg/ops.hpp"

#include <cmath>
#include <cstring>

namespace ssg::ops {
namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  SSG_CHECK(a.val().same_shape(b.val()), invalid_input,
            std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
}

template <typename F>
Tensor map1(const Tensor& a, F f) {
  Tensor out(a.shape());
  const float* pa = a.data();
  float* po = out.data();
  const int64_t n = std::max<int64_t>(a.numel(), 1);
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  return out;
}

template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  const int64_t n = std::max<int64_t>(a.numel(), 1);
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  return out;
}

}  // namespace

Var ones_like(const Var& v) { return Var::constant(Tensor::full(v.shape(), 1.f)); }
Var zeros_like(const Var& v) { return Var::constant(Tensor::zeros(v.shape())); }

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op(map2(a.val(), b.val(), [](float x, float y) { return x + y; }), {a, b},
                 [](const Var& g, const Var&, const std::vector<Var>&,
                    const std::vector<char>& needed, std::vector<Var>& out) {
                   if (needed[0]) out[0] = g;
                   if (needed[1]) out[1] = g;
                 });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op(map2(a.val(), b.val(), [](float x, float y) { return x - y; }), {a, b},
                 [](const Var& g, const Var&, const std::vector<Var>&,
                    const std::vector<char>& needed, std::vector<Var>& out) {
                   if (needed[0]) out[0] = g;
                   if (needed[1]) out[1] = neg(g);
                 });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make_op(map2(a.val(), b.val(), [](float x, float y) { return x * y; }), {a, b},
                 [](const Var& g, const Var&, const std::vector<Var>& ps,
                    const std::vector<char>& needed, std::vector<Var>& out) {
                   if (needed[0]) out[0] = mul(g, ps[1]);
                   if (needed[1]) out[1] = mul(g, ps[0]);
                 });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  return make_op(map2(a.val(), b.val(), [](float x, float y) { return x / y; }), {a, b},
                 [](const Var& g, const Var& self, const std::vector<Var>& ps,
                    const std::vector<char>& needed, std::vector<Var>& out) {
                   if (needed[0]) out[0] = div(g, ps[1]);
                   if (needed[1]) out[1] = neg(mul(g, div(self, ps[1])));
                 });
}

Var neg(const Var& a) {
  return make_op(map1(a.val(), [](float x) { return -x; }), {a},
                 [](const Var& g, const Var&, const std::vector<Var>&, const std::vector<char>&,
                    std::vector<Var>& out) { out[0] = neg(g); });
}

Var scale(const Var& a, float c) {
  return make_op(map1(a.val(), [c](float x) { return x * c; }), {a},
                 [c](const Var& g, const Var&, const std::vector<Var>&, const std::vector<char>&,
                     std::vector<Var>& out) { out[0] = scale(g, c); });
}

Var add_scalar(const Var& a, float c) {
  return make_op(map1(a.val(), [c](float x) { return x + c; }), {a},
                 [](const Var& g, const Var&, const std::vector<Var>&, const std::vector<char>&,
                    std::vector<Var>& out) { out[0] = g; });
}

Var sqrt_v(const Var& a) {
  return make_op(map1(a.val(), [](float x) { return std::sqrt(x); }), {a},
                 [](const Var& g, const Var& self, const std::vector<Var>&,
                    const std::vector<char>&, std::vector<Var>& out) {
                   out[0] = scale(div(g, self), 0.5f);
                 });
}

Var sigmoid_v(const Var& a) {
  return make_op(map1(a.val(),
                      [](float x) {
                        // Evaluate through exp(-|x|) so both tails are stable.
                        if (x >= 0.f) {
                          float e = std::exp(-x);
                          return 1.f / (1.f + e);
                        }
                        float e = std::exp(x);
                        return e / (1.f + e);
                      }),
                 {a},
                 [](const Var& g, const Var& self, const std::vector<Var>&,
                    const std::vector<char>&, std::vector<Var>& out) {
                   out[0] = mul(g, mul(self, add_scalar(neg(self), 1.f)));
                 });
}

Var relu_v(const Var& a) {
  return make_op(map1(a.val(), [](float x) { return x > 0.f ? x : 0.f; }), {a},
                 [](const Var& g, const Var&, const std::vector<Var>& ps,
                    const std::vector<char>&, std::vector<Var>& out) {
                   Var mask = Var::constant(
                       map1(ps[0].val(), [](float x) { return x > 0.f ? 1.f : 0.f; }));
                   out[0] = mul(g, mask);
                 });
}

Var leaky_relu_v(const Var& a, float slope) {
  return make_op(map1(a.val(), [slope](float x) { return x > 0.f ? x : slope * x; }), {a},
                 [slope](const Var& g, const Var&, const std::vector<Var>& ps,
                         const std::vector<char>&, std::vector<Var>& out) {
                   Var mask = Var::constant(
                       map1(ps[0].val(), [slope](float x) { return x > 0.f ? 1.f : slope; }));
                   out[0] = mul(g, mask);
                 });
}

Var sum_all(const Var& a) {
  const float* p = a.val().data();
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += double(p[i]);
  return make_op(Tensor::scalar(float(acc)), {a},
                 [](const Var& g, const Var&, const std::vector<Var>& ps,
                    const std::vector<char>&, std::vector<Var>& out) {
                   out[0] = broadcast_scalar(g, ps[0].shape());
                 });
}

Var mean_all(const Var& a) {
  SSG_CHECK(a.numel() > 0, invalid_input, "mean of empty tensor");
  return scale(sum_all(a), 1.f / float(a.numel()));
}

Var broadcast_scalar(const Var& s, std::vector<int64_t> shape) {
  SSG_CHECK(s.numel() <= 1, invalid_input, "broadcast_scalar needs a scalar");
  return make_op(Tensor::full(shape, s.val().item()), {s},
                 [](const Var& g, const Var&, const std::vector<Var>&, const std::vector<char>&,
                    std::vector<Var>& out) { out[0] = sum_all(g); });
}

Var channel_sum(const Var& a) {
  SSG_CHECK(a.val().ndim() >= 1, invalid_input, "channel_sum needs rank >= 1");
  const int64_t c = a.val().dim(0);
  const int64_t inner = a.numel() / std::max<int64_t>(c, 1);
  Tensor out({c});
  const float* p = a.val().data();
  for (int64_t cc = 0; cc < c; ++cc) {
    double acc = 0.0;
    const float* row = p + cc * inner;
    for (int64_t i = 0; i < inner; ++i) acc += double(row[i]);
    out.data()[cc] = float(acc);
  }
  return make_op(std::move(out), {a},
                 [](const Var& g, const Var&, const std::vector<Var>& ps,
                    const std::vector<char>&, std::vector<Var>& out) {
                   out[0] = channel_broadcast(g, ps[0].shape());
                 });
}

Var channel_broadcast(const Var& v, std::vector<int64_t> shape) {
  SSG_CHECK(v.val().ndim() == 1 && !shape.empty() && shape[0] == v.val().dim(0), invalid_input,
            "channel_broadcast: first axis must equal channel count");
  Tensor out(shape);
  const int64_t c = shape[0];
  const int64_t inner = out.numel() / std::max<int64_t>(c, 1);
  for (int64_t cc = 0; cc < c; ++cc) {
    float* row = out.data() + cc * inner;
    const float val = v.val().data()[cc];
    for (int64_t i = 0; i < inner; ++i) row[i] = val;
  }
  return make_op(std::move(out), {v},
                 [](const Var& g, const Var&, const std::vector<Var>&, const std::vector<char>&,
                    std::vector<Var>& out) { out[0] = channel_sum(g); });
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
  return make_op(a.val().reshaped(shape), {a},
                 [](const Var& g, const Var&, const std::vector<Var>& ps,
                    const std::vector<char>&, std::vector<Var>& out) {
                   out[0] = reshape(g, ps[0].shape());
                 });
}

Var matmul(const Var& a, const Var& b, bool transa, bool transb) {
  SSG_CHECK(!(transa && transb), invalid_input, "matmul: double transpose unsupported");
  SSG_CHECK(a.val().ndim() == 2 && b.val().ndim() == 2, invalid_input, "matmul needs rank-2");
  const int64_t m = transa ? a.val().dim(1) : a.val().dim(0);
  const int64_t k = transa ? a.val().dim(0) : a.val().dim(1);
  const int64_t kb = transb ? b.val().dim(1) : b.val().dim(0);
  const int64_t n = transb ? b.val().dim(0) : b.val().dim(1);
  SSG_CHECK(k == kb, invalid_input,
            "matmul inner dim mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out({m, n});
  kernels::gemm(transa, transb, int(m), int(n), int(k), a.val().data(), b.val().data(),
                out.data());
  return make_op(std::move(out), {a, b},
                 [transa, transb](const Var& g, const Var&, const std::vector<Var>& ps,
                                  const std::vector<char>& needed, std::vector<Var>& out) {
                   const Var& a = ps[0];
                   const Var& b = ps[1];
                   if (!transa && !transb) {
                     if (needed[0]) out[0] = matmul(g, b, false, true);
                     if (needed[1]) out[1] = matmul(a, g, true, false);
                   } else if (transa) {  // y = a^T b
                     if (needed[0]) out[0] = matmul(b, g, false, true);
                     if (needed[1]) out[1] = matmul(a, g, false, false);
                   } else {  // y = a b^T
                     if (needed[0]) out[0] = matmul(g, b, false, false);
                     if (needed[1]) out[1] = matmul(g, a, true, false);
                   }
                 });
}

namespace {

Var conv2d_impl(const Var& x, const Var& w, const Var& bias, int stride, int pad);
Var conv3d_impl(const Var& x, const Var& w, const Var& bias, int stride, int pad);

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  return conv2d_impl(x, w, bias, stride, pad);
}

Var conv2d_input_grad_op(const Var& g, const Var& w, int stride, int pad,
                         std::array<int64_t, 2> in_hw) {
  SSG_CHECK(g.val().ndim() == 3 && w.val().ndim() == 4, invalid_input,
            "conv2d_input_grad: bad ranks");
  const auto& ws = w.shape();
  Tensor out({ws[1], in_hw[0], in_hw[1]});
  kernels::conv2d_input_grad(g.val().data(), int(g.val().dim(0)), int(g.val().dim(1)),
                             int(g.val().dim(2)), w.val().data(), int(ws[1]), int(ws[2]),
                             int(ws[3]), stride, pad, out.data(), int(in_hw[0]), int(in_hw[1]));
  return make_op(
      std::move(out), {g, w},
      [stride, pad, in_hw](const Var& u, const Var&, const std::vector<Var>& ps,
                           const std::vector<char>& needed, std::vector<Var>& out) {
        if (needed[0]) out[0] = conv2d(u, ps[1], Var(), stride, pad);
        if (needed[1])
          out[1] = conv2d_weight_grad_op(u, ps[0], stride, pad,
                                         {ps[1].shape()[2], ps[1].shape()[3]});
      });
}

Var conv2d_weight_grad_op(const Var& x, const Var& g, int stride, int pad,
                          std::array<int64_t, 2> k_hw) {
  SSG_CHECK(x.val().ndim() == 3 && g.val().ndim() == 3, invalid_input,
            "conv2d_weight_grad: bad ranks");
  Tensor out({g.val().dim(0), x.val().dim(0), k_hw[0], k_hw[1]});
  kernels::conv2d_weight_grad(x.val().data(), int(x.val().dim(0)), int(x.val().dim(1)),
                              int(x.val().dim(2)), g.val().data(), int(g.val().dim(0)),
                              int(g.val().dim(1)), int(g.val().dim(2)), stride, pad, out.data(),
                              int(k_hw[0]), int(k_hw[1]));
  return make_op(std::move(out), {x, g},
                 [stride, pad](const Var& u, const Var&, const std::vector<Var>& ps,
                               const std::vector<char>& needed, std::vector<Var>& out) {
                   const auto& xs = ps[0].shape();
                   if (needed[0])
                     out[0] = conv2d_input_grad_op(ps[1], u, stride, pad, {xs[1], xs[2]});
                   if (needed[1]) out[1] = conv2d(ps[0], u, Var(), stride, pad);
                 });
}

Var conv3d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  return conv3d_impl(x, w, bias, stride, pad);
}

Var conv3d_input_grad_op(const Var& g, const Var& w, int stride, int pad,
                         std::array<int64_t, 3> in_dhw) {
  SSG_CHECK(g.val().ndim() == 4 && w.val().ndim() == 5, invalid_input,
            "conv3d_input_grad: bad ranks");
  const auto& ws = w.shape();
  Tensor out({ws[1], in_dhw[0], in_dhw[1], in_dhw[2]});
  kernels::conv3d_input_grad(g.val().data(), int(g.val().dim(0)), int(g.val().dim(1)),
                             int(g.val().dim(2)), int(g.val().dim(3)), w.val().data(), int(ws[1]),
                             int(ws[2]), int(ws[3]), int(ws[4]), stride, pad, out.data(),
                             int(in_dhw[0]), int(in_dhw[1]), int(in_dhw[2]));
  return make_op(
      std::move(out), {g, w},
      [stride, pad](const Var& u, const Var&, const std::vector<Var>& ps,
                    const std::vector<char>& needed, std::vector<Var>& out) {
        if (needed[0]) out[0] = conv3d(u, ps[1], Var(), stride, pad);
        if (needed[1]) {
          const auto& ws = ps[1].shape();
          out[1] = conv3d_weight_grad_op(u, ps[0], stride, pad, {ws[2], ws[3], ws[4]});
        }
      });
}

Var conv3d_weight_grad_op(const Var& x, const Var& g, int stride, int pad,
                          std::array<int64_t, 3> k_dhw) {
  SSG_CHECK(x.val().ndim() == 4 && g.val().ndim() == 4, invalid_input,
            "conv3d_weight_grad: bad ranks");
  Tensor out({g.val().dim(0), x.val().dim(0), k_dhw[0], k_dhw[1], k_dhw[2]});
  kernels::conv3d_weight_grad(x.val().data(), int(x.val().dim(0)), int(x.val().dim(1)),
                              int(x.val().dim(2)), int(x.val().dim(3)), g.val().data(),
                              int(g.val().dim(0)), int(g.val().dim(1)), int(g.val().dim(2)),
                              int(g.val().dim(3)), stride, pad, out.data(), int(k_dhw[0]),
                              int(k_dhw[1]), int(k_dhw[2]));
  return make_op(std::move(out), {x, g},
                 [stride, pad](const Var& u, const Var&, const std::vector<Var>& ps,
                               const std::vector<char>& needed, std::vector<Var>& out) {
                   const auto& xs = ps[0].shape();
                   if (needed[0])
                     out[0] = conv3d_input_grad_op(ps[1], u, stride, pad, {xs[1], xs[2], xs[3]});
                   if (needed[1]) out[1] = conv3d(ps[0], u, Var(), stride, pad);
                 });
}

namespace {

Var conv2d_impl(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  SSG_CHECK(x.val().ndim() == 3 && w.val().ndim() == 4, invalid_input, "conv2d: bad ranks");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  SSG_CHECK(xs[0] == ws[1], invalid_input, "conv2d: channel mismatch");
  const int oh = kernels::conv_out_size(int(xs[1]), int(ws[2]), stride, pad);
  const int ow = kernels::conv_out_size(int(xs[2]), int(ws[3]), stride, pad);
  SSG_CHECK(oh > 0 && ow > 0, invalid_input, "conv2d: empty output");
  Tensor out({ws[0], oh, ow});
  kernels::conv2d_forward(x.val().data(), int(xs[0]), int(xs[1]), int(xs[2]), w.val().data(),
                          int(ws[0]), int(ws[2]), int(ws[3]), stride, pad,
                          bias.defined() ? bias.val().data() : nullptr, out.data(), oh, ow);
  std::vector<Var> parents = {x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_op(std::move(out), std::move(parents),
                 [stride, pad](const Var& g, const Var&, const std::vector<Var>& ps,
                               const std::vector<char>& needed, std::vector<Var>& out) {
                   const auto& xs = ps[0].shape();
                   const auto& ws = ps[1].shape();
                   if (needed[0])
                     out[0] = conv2d_input_grad_op(g, ps[1], stride, pad, {xs[1], xs[2]});
                   if (needed[1])
                     out[1] = conv2d_weight_grad_op(ps[0], g, stride, pad, {ws[2], ws[3]});
                   if (ps.size() > 2 && needed[2]) out[2] = channel_sum(g);
                 });
}

Var conv3d_impl(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  SSG_CHECK(x.val().ndim() == 4 && w.val().ndim() == 5, invalid_input, "conv3d: bad ranks");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  SSG_CHECK(xs[0] == ws[1], invalid_input, "conv3d: channel mismatch");
  const int od = kernels::conv_out_size(int(xs[1]), int(ws[2]), stride, pad);
  const int oh = kernels::conv_out_size(int(xs[2]), int(ws[3]), stride, pad);
  const int ow = kernels::conv_out_size(int(xs[3]), int(ws[4]), stride, pad);
  SSG_CHECK(od > 0 && oh > 0 && ow > 0, invalid_input, "conv3d: empty output");
  Tensor out({ws[0], od, oh, ow});
  kernels::conv3d_forward(x.val().data(), int(xs[0]), int(xs[1]), int(xs[2]), int(xs[3]),
                          w.val().data(), int(ws[0]), int(ws[2]), int(ws[3]), int(ws[4]), stride,
                          pad, bias.defined() ? bias.val().data() : nullptr, out.data(), od, oh,
                          ow);
  std::vector<Var> parents = {x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_op(
      std::move(out), std::move(parents),
      [stride, pad](const Var& g, const Var&, const std::vector<Var>& ps,
                    const std::vector<char>& needed, std::vector<Var>& out) {
        const auto& xs = ps[0].shape();
        const auto& ws = ps[1].shape();
        if (needed[0])
          out[0] = conv3d_input_grad_op(g, ps[1], stride, pad, {xs[1], xs[2], xs[3]});
        if (needed[1])
          out[1] = conv3d_weight_grad_op(ps[0], g, stride, pad, {ws[2], ws[3], ws[4]});
        if (ps.size() > 2 && needed[2]) out[2] = channel_sum(g);
      });
}

}  // namespace

Var plane_merge(const Var& pxy, const Var& pxz, const Var& pyz, const Var& bias, int64_t d,
                int64_t h, int64_t w) {
  const int64_t c = pxy.shape()[0];
  SSG_CHECK(pxy.val().ndim() == 3 && pxz.val().ndim() == 3 && pyz.val().ndim() == 3,
            invalid_input, "plane_merge: planes must be rank-3");
  SSG_CHECK(pxy.shape()[1] == d && pxy.shape()[2] == h, invalid_input, "plane_merge: xy extents");
  SSG_CHECK(pxz.shape()[0] == c && pxz.shape()[1] == d && pxz.shape()[2] == w, invalid_input,
            "plane_merge: xz extents");
  SSG_CHECK(pyz.shape()[0] == c && pyz.shape()[1] == h && pyz.shape()[2] == w, invalid_input,
            "plane_merge: yz extents");
  Tensor out({c, d, h, w});
  kernels::plane_merge(pxy.val().data(), pxz.val().data(), pyz.val().data(),
                       bias.defined() ? bias.val().data() : nullptr, int(c), int(d), int(h),
                       int(w), out.data());
  std::vector<Var> parents = {pxy, pxz, pyz};
  if (bias.defined()) parents.push_back(bias);
  return make_op(std::move(out), std::move(parents),
                 [](const Var& g, const Var&, const std::vector<Var>& ps,
                    const std::vector<char>& needed, std::vector<Var>& out) {
                   if (needed[0]) out[0] = volume_plane_sum(g, kernels::Plane::XY);
                   if (needed[1]) out[1] = volume_plane_sum(g, kernels::Plane::XZ);
                   if (needed[2]) out[2] = volume_plane_sum(g, kernels::Plane::YZ);
                   if (ps.size() > 3 && needed[3]) out[3] = channel_sum(g);
                 });
}

Var volume_plane_sum(const Var& x, kernels::Plane plane) {
  SSG_CHECK(x.val().ndim() == 4, invalid_input, "volume_plane_sum needs {c,d,h,w}");
  const auto& s = x.shape();
  const int64_t c = s[0], d = s[1], h = s[2], w = s[3];
  std::vector<int64_t> oshape;
  switch (plane) {
    case kernels::Plane::XY: oshape = {c, d, h}; break;
    case kernels::Plane::XZ: oshape = {c, d, w}; break;
    case kernels::Plane::YZ: oshape = {c, h, w}; break;
  }
  Tensor out(oshape);
  kernels::volume_plane_sum(x.val().data(), int(c), int(d), int(h), int(w), plane, out.data());
  return make_op(std::move(out), {x},
                 [plane](const Var& g, const Var&, const std::vector<Var>& ps,
                         const std::vector<char>&, std::vector<Var>& out) {
                   const auto& s = ps[0].shape();
                   out[0] = plane_to_volume(g, plane, s[1], s[2], s[3]);
                 });
}

Var plane_to_volume(const Var& p, kernels::Plane plane, int64_t d, int64_t h, int64_t w) {
  SSG_CHECK(p.val().ndim() == 3, invalid_input, "plane_to_volume needs {c,a,b}");
  const int64_t c = p.shape()[0];
  Tensor out({c, d, h, w});
  kernels::plane_to_volume(p.val().data(), int(c), int(d), int(h), int(w), plane, out.data());
  return make_op(std::move(out), {p},
                 [plane](const Var& g, const Var&, const std::vector<Var>&,
                         const std::vector<char>&, std::vector<Var>& out) {
                   out[0] = volume_plane_sum(g, plane);
                 });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
  SSG_CHECK(x.val().ndim() >= 2, invalid_input, "instance_norm needs channels-first rank >= 2");
  const int64_t c = x.shape()[0];
  SSG_CHECK(gamma.numel() == c && beta.numel() == c, invalid_input,
            "instance_norm: affine params must match channels");
  const float inv_n = 1.f / float(x.numel() / c);
  Var mu = scale(channel_sum(x), inv_n);
  Var xc = sub(x, channel_broadcast(mu, x.shape()));
  Var var = scale(channel_sum(mul(xc, xc)), inv_n);
  Var istd = div(ones_like(var), sqrt_v(add_scalar(var, eps)));
  Var xn = mul(xc, channel_broadcast(istd, x.shape()));
  return add(mul(xn, channel_broadcast(gamma, x.shape())), channel_broadcast(beta, x.shape()));
}

Var mse(const Var& a, const Var& b) {
  Var d = sub(a, b);
  return mean_all(mul(d, d));
}

}  // namespace ssg::ops
