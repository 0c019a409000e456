#include "ssg/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "ssg/kernels.hpp"
#include "ssg/ops.hpp"

namespace ssg {

namespace {

constexpr float kLReluSlope = 0.2f;
constexpr float kInitStddev = 0.02f;

Var normal_leaf(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  rng.fill_normal(t.data(), t.numel(), kInitStddev);
  return Var::leaf(std::move(t));
}

ConvBlock make_block(std::vector<int64_t> kernel_shape, bool normalized, Rng& rng) {
  ConvBlock blk;
  const int64_t co = kernel_shape[0];
  blk.w = normal_leaf(std::move(kernel_shape), rng);
  blk.b = Var::leaf(Tensor::zeros({co}));
  if (normalized) {
    blk.gamma = Var::leaf(Tensor::full({co}, 1.0f));
    blk.beta = Var::leaf(Tensor::zeros({co}));
  }
  return blk;
}

// {A,B} replicated across `c` channels; the noise maps are single-channel
// but enter a C-channel feature map.
Tensor tile_channels(const Tensor& plane, int64_t c) {
  Tensor out({c, plane.dim(0), plane.dim(1)});
  const int64_t n = plane.numel();
  for (int64_t ch = 0; ch < c; ++ch) {
    std::memcpy(out.data() + ch * n, plane.data(), size_t(n) * sizeof(float));
  }
  return out;
}

}  // namespace

void ConvBlock::collect(std::vector<Var>& out) const {
  out.push_back(w);
  out.push_back(b);
  if (gamma.defined()) {
    out.push_back(gamma);
    out.push_back(beta);
  }
}

ConvBlock ConvBlock::clone() const {
  ConvBlock c;
  c.w = Var::leaf(w.val().clone());
  c.b = Var::leaf(b.val().clone());
  if (gamma.defined()) {
    c.gamma = Var::leaf(gamma.val().clone());
    c.beta = Var::leaf(beta.val().clone());
  }
  return c;
}

Var PlaneNet::forward(const Var& x) const {
  Var h = x;
  for (const ConvBlock& blk : blocks) {
    h = ops::conv2d(h, blk.w, blk.b, /*stride=*/1, /*pad=*/1);
    if (blk.normalized()) {
      h = ops::instance_norm(h, blk.gamma, blk.beta);
      h = ops::leaky_relu_v(h, kLReluSlope);
    }
  }
  return h;
}

void PlaneNet::collect(std::vector<Var>& out) const {
  for (const ConvBlock& blk : blocks) blk.collect(out);
}

std::vector<Var> GeneratorLevel::params() const {
  std::vector<Var> out;
  xy.collect(out);
  xz.collect(out);
  yz.collect(out);
  return out;
}

std::vector<Var> ProjectionNet::params() const {
  std::vector<Var> out;
  xy.collect(out);
  xz.collect(out);
  yz.collect(out);
  return out;
}

std::vector<Var> DiscriminatorNet::params() const {
  std::vector<Var> out;
  for (const ConvBlock& blk : blocks) blk.collect(out);
  return out;
}

DiscriminatorNet DiscriminatorNet::clone() const {
  DiscriminatorNet d;
  for (size_t i = 0; i < blocks.size(); ++i) d.blocks[i] = blocks[i].clone();
  return d;
}

PlaneNet make_plane_net(int64_t channels, Rng& rng) {
  PlaneNet net;
  for (int k = 0; k < 4; ++k) {
    net.blocks[size_t(k)] = make_block({channels, channels, 3, 3}, /*normalized=*/k < 3, rng);
  }
  return net;
}

GeneratorLevel make_generator(int64_t channels, bool has_skip_and_noise, Rng& rng) {
  GeneratorLevel g;
  g.xy = make_plane_net(channels, rng);
  g.xz = make_plane_net(channels, rng);
  g.yz = make_plane_net(channels, rng);
  g.has_skip_and_noise = has_skip_and_noise;
  return g;
}

ProjectionNet make_projection(int64_t channels, int64_t pool_bins, Rng& rng) {
  SSG_CHECK(pool_bins >= 1, invalid_input, "projection pool bins must be >= 1");
  ProjectionNet p;
  p.pool_bins = pool_bins;
  p.xy = make_block({channels, pool_bins, 1, 1}, /*normalized=*/false, rng);
  p.xz = make_block({channels, pool_bins, 1, 1}, /*normalized=*/false, rng);
  p.yz = make_block({channels, pool_bins, 1, 1}, /*normalized=*/false, rng);
  return p;
}

DiscriminatorNet make_discriminator(int64_t in_channels, int64_t width, Rng& rng) {
  DiscriminatorNet d;
  d.blocks[0] = make_block({width, in_channels, 3, 3, 3}, /*normalized=*/true, rng);
  d.blocks[1] = make_block({width, width, 3, 3, 3}, /*normalized=*/true, rng);
  d.blocks[2] = make_block({width, width, 3, 3, 3}, /*normalized=*/false, rng);
  return d;
}

OccupancyDecoder make_decoder(int64_t channels, int64_t hidden, Rng& rng) {
  auto normal = [&](std::vector<int64_t> shape) {
    Tensor t(std::move(shape));
    rng.fill_normal(t.data(), t.numel(), kInitStddev);
    return t;
  };
  Tensor w_xy = normal({hidden, channels});
  Tensor w_xz = normal({hidden, channels});
  Tensor w_yz = normal({hidden, channels});
  Tensor w2 = normal({1, hidden});
  return OccupancyDecoder(std::move(w_xy), std::move(w_xz), std::move(w_yz),
                          Tensor::zeros({hidden}), std::move(w2), Tensor::zeros({1}));
}

TriPlaneVar project(const ProjectionNet& p, const Tensor& z0) {
  SSG_CHECK(z0.defined() && z0.ndim() == 3, invalid_input,
            "projection expects a rank-3 noise volume");
  const int d = int(z0.dim(0)), h = int(z0.dim(1)), w = int(z0.dim(2));
  const int bins = int(p.pool_bins);

  auto pooled_plane = [&](int axis, int64_t a, int64_t b) {
    Tensor pooled({p.pool_bins, a, b});
    kernels::adaptive_pool_axis(z0.data(), d, h, w, axis, bins, pooled.data());
    return Var::constant(std::move(pooled));
  };
  // Pool away the axis each plane does not span: W for xy, H for xz, D for yz.
  Var f_xy = ops::conv2d(pooled_plane(2, d, h), p.xy.w, p.xy.b, 1, 0);
  Var f_xz = ops::conv2d(pooled_plane(1, d, w), p.xz.w, p.xz.b, 1, 0);
  Var f_yz = ops::conv2d(pooled_plane(0, h, w), p.yz.w, p.yz.b, 1, 0);
  return {f_xy, f_xz, f_yz};
}

TriPlaneVar generator_forward(const GeneratorLevel& g, const TriPlaneVar& t_in,
                              const PlaneNoise* z) {
  SSG_CHECK(t_in.f_xy.defined() && t_in.f_xz.defined() && t_in.f_yz.defined(), invalid_input,
            "generator input planes are undefined");
  SSG_CHECK(g.has_skip_and_noise || z == nullptr, invalid_input,
            "the base generator level takes no plane noise");

  auto one_plane = [&](const PlaneNet& psi, const Var& f, const Tensor* zmap, const char* name) {
    Var x = f;
    if (zmap != nullptr) {
      SSG_CHECK(zmap->defined() && zmap->ndim() == 2 && zmap->dim(0) == f.shape()[1] &&
                    zmap->dim(1) == f.shape()[2],
                invalid_input,
                std::string("plane-noise extents do not match the input planes (") + name + ")");
      Var tiled = Var::constant(tile_channels(*zmap, f.shape()[0]));
      x = ops::add(f, tiled);
    }
    return g.has_skip_and_noise ? ops::add(f, psi.forward(x)) : psi.forward(x);
  };

  return {one_plane(g.xy, t_in.f_xy, z ? &z->xy : nullptr, "xy"),
          one_plane(g.xz, t_in.f_xz, z ? &z->xz : nullptr, "xz"),
          one_plane(g.yz, t_in.f_yz, z ? &z->yz : nullptr, "yz")};
}

Var discriminator_forward(const DiscriminatorNet& d, const Var& grid) {
  SSG_CHECK(grid.defined() && grid.shape().size() == 4, invalid_input,
            "critic expects a {C,D,H,W} grid");
  SSG_CHECK(grid.shape()[0] == d.blocks[0].w.shape()[1], invalid_input,
            "grid channel count does not match the critic");
  for (int axis = 1; axis < 4; ++axis) {
    SSG_CHECK(grid.shape()[size_t(axis)] >= 11, invalid_input,
              "grid smaller than the critic's 11x11x11 receptive field");
  }
  Var h = grid;
  for (size_t k = 0; k < d.blocks.size(); ++k) {
    const ConvBlock& blk = d.blocks[k];
    h = ops::conv3d(h, blk.w, blk.b, /*stride=*/k == 0 ? 2 : 1, /*pad=*/1);
    if (blk.normalized()) {
      h = ops::instance_norm(h, blk.gamma, blk.beta);
      h = ops::leaky_relu_v(h, kLReluSlope);
    }
  }
  return h;
}

std::vector<Dims3> scaled_level_dims(const std::vector<Dims3>& level_dims, Dims3 target_coarse) {
  SSG_CHECK(!level_dims.empty(), invalid_input, "no pyramid levels");
  SSG_CHECK(target_coarse.d >= 1 && target_coarse.h >= 1 && target_coarse.w >= 1, invalid_input,
            "target base dims must be >= 1 per axis");
  const Dims3 base = level_dims.front();
  SSG_CHECK(base.d >= 1 && base.h >= 1 && base.w >= 1, invalid_input,
            "trained base dims must be >= 1 per axis");

  auto scale_axis = [](int64_t target, int64_t level, int64_t base_axis) {
    const double scaled = double(target) * double(level) / double(base_axis);
    return std::max<int64_t>(1, std::llround(scaled));
  };
  std::vector<Dims3> out;
  out.reserve(level_dims.size());
  for (const Dims3& lvl : level_dims) {
    out.push_back({scale_axis(target_coarse.d, lvl.d, base.d),
                   scale_axis(target_coarse.h, lvl.h, base.h),
                   scale_axis(target_coarse.w, lvl.w, base.w)});
  }
  return out;
}

NoiseSpec sample_noise(const std::vector<Dims3>& level_dims, Dims3 target_coarse,
                       const std::vector<double>& sigmas, uint64_t seed) {
  SSG_CHECK(sigmas.size() == level_dims.size(), invalid_input,
            "need one noise std per pyramid level");
  const std::vector<Dims3> dims = scaled_level_dims(level_dims, target_coarse);

  NoiseSpec spec;
  spec.z0 = Tensor({dims[0].d, dims[0].h, dims[0].w});
  Rng::derive(seed, 0, 0).fill_normal(spec.z0.data(), spec.z0.numel(), float(sigmas[0]));

  spec.planes.reserve(dims.size() - 1);
  for (size_t i = 1; i < dims.size(); ++i) {
    const Dims3& dm = dims[i];
    const float s = float(sigmas[i]);
    PlaneNoise pn;
    pn.xy = Tensor({dm.d, dm.h});
    pn.xz = Tensor({dm.d, dm.w});
    pn.yz = Tensor({dm.h, dm.w});
    Rng::derive(seed, i, 0).fill_normal(pn.xy.data(), pn.xy.numel(), s);
    Rng::derive(seed, i, 1).fill_normal(pn.xz.data(), pn.xz.numel(), s);
    Rng::derive(seed, i, 2).fill_normal(pn.yz.data(), pn.yz.numel(), s);
    spec.planes.push_back(std::move(pn));
  }
  return spec;
}

}  // namespace ssg
