#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "ssg/autograd.hpp"
#include "ssg/nets.hpp"
#include "ssg/ops.hpp"
#include "ssg/rng.hpp"
#include "ssg/triplane.hpp"
#include "ssg/voxgrid.hpp"

using namespace ssg;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int64_t> shape, float stddev = 1.0f) {
  Tensor t(std::move(shape));
  rng.fill_normal(t.data(), t.numel(), stddev);
  return t;
}

TriPlaneVar random_planes(Rng& rng, int64_t c, Dims3 dm) {
  return {Var::constant(random_tensor(rng, {c, dm.d, dm.h})),
          Var::constant(random_tensor(rng, {c, dm.d, dm.w})),
          Var::constant(random_tensor(rng, {c, dm.h, dm.w}))};
}

void zero_params(const std::vector<Var>& params) {
  for (const Var& p : params) {
    Var(p).mutable_val().fill(0.0f);
  }
}

double sample_stddev(const float* x, int64_t n) {
  double mean = 0;
  for (int64_t i = 0; i < n; ++i) mean += x[i];
  mean /= double(n);
  double var = 0;
  for (int64_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  return std::sqrt(var / double(n - 1));
}

}  // namespace

TEST_CASE("projection maps a noise volume onto its three face extents") {
  Rng rng(101);
  ProjectionNet p = make_projection(32, 8, rng);
  Tensor z0 = random_tensor(rng, {22, 6, 20});  // one pooled axis shorter than the bin count

  TriPlaneVar t = project(p, z0);
  CHECK(t.f_xy.shape() == std::vector<int64_t>{32, 22, 6});
  CHECK(t.f_xz.shape() == std::vector<int64_t>{32, 22, 20});
  CHECK(t.f_yz.shape() == std::vector<int64_t>{32, 6, 20});
}

TEST_CASE("projection of a zero volume is the conv bias, exactly") {
  Rng rng(102);
  ProjectionNet p = make_projection(5, 4, rng);
  for (int64_t c = 0; c < 5; ++c) {
    Var(p.xy.b).mutable_val().data()[c] = 0.25f * float(c) - 0.6f;
  }
  Tensor z0 = Tensor::zeros({7, 6, 8});

  TriPlaneVar t = project(p, z0);
  for (int64_t c = 0; c < 5; ++c) {
    const float want = p.xy.b.val().data()[c];
    for (int64_t i = 0; i < 7 * 6; ++i) {
      CHECK(t.f_xy.val().data()[c * 7 * 6 + i] == want);
    }
  }
}

TEST_CASE("projection of a constant volume is constant per channel") {
  Rng rng(103);
  ProjectionNet p = make_projection(6, 8, rng);
  const float c0 = 0.8125f;
  Tensor z0 = Tensor::full({9, 12, 10}, c0);

  TriPlaneVar t = project(p, z0);
  // Every slab of a constant volume pools back to the constant, so each
  // output channel is bias + c * sum of that channel's 1x1 kernel.
  for (int64_t ch = 0; ch < 6; ++ch) {
    double want = p.xz.b.val().data()[ch];
    for (int64_t k = 0; k < 8; ++k) want += double(c0) * p.xz.w.val().data()[ch * 8 + k];
    const float first = t.f_xz.val().data()[ch * 9 * 10];
    CHECK(std::abs(double(first) - want) < 1e-6);
    for (int64_t i = 0; i < 9 * 10; ++i) {
      CHECK(t.f_xz.val().data()[ch * 9 * 10 + i] == first);
    }
  }
}

TEST_CASE("plane net applies its documented block sequence") {
  Rng rng(104);
  PlaneNet net = make_plane_net(5, rng);
  // Perturb the affine params so the norm is not identity.
  for (int k = 0; k < 3; ++k) {
    Var(net.blocks[size_t(k)].gamma).mutable_val().data()[k] = 1.5f;
    Var(net.blocks[size_t(k)].beta).mutable_val().data()[k + 1] = -0.3f;
  }
  Var x = Var::constant(random_tensor(rng, {5, 6, 7}));

  Var manual = x;
  for (int k = 0; k < 3; ++k) {
    const ConvBlock& blk = net.blocks[size_t(k)];
    manual = ops::conv2d(manual, blk.w, blk.b, 1, 1);
    manual = ops::instance_norm(manual, blk.gamma, blk.beta);
    manual = ops::leaky_relu_v(manual, 0.2f);
  }
  manual = ops::conv2d(manual, net.blocks[3].w, net.blocks[3].b, 1, 1);

  Var got = net.forward(x);
  REQUIRE(got.shape() == manual.shape());
  for (int64_t i = 0; i < got.numel(); ++i) {
    CHECK(got.val().data()[i] == manual.val().data()[i]);
  }
}

TEST_CASE("generator with a zeroed residual net passes its input through") {
  Rng rng(105);
  GeneratorLevel g = make_generator(4, true, rng);
  zero_params(g.params());
  TriPlaneVar t_in = random_planes(rng, 4, {6, 5, 7});
  PlaneNoise z;
  z.xy = random_tensor(rng, {6, 5});
  z.xz = random_tensor(rng, {6, 7});
  z.yz = random_tensor(rng, {5, 7});

  TriPlaneVar out = generator_forward(g, t_in, &z);
  for (int64_t i = 0; i < t_in.f_xy.numel(); ++i) {
    CHECK(out.f_xy.val().data()[i] == t_in.f_xy.val().data()[i]);
  }
  for (int64_t i = 0; i < t_in.f_yz.numel(); ++i) {
    CHECK(out.f_yz.val().data()[i] == t_in.f_yz.val().data()[i]);
  }
}

TEST_CASE("base generator with zero weights emits its last-block bias") {
  Rng rng(106);
  GeneratorLevel g = make_generator(3, false, rng);
  zero_params(g.params());
  for (int64_t c = 0; c < 3; ++c) {
    Var(g.xy.blocks[3].b).mutable_val().data()[c] = 0.5f * float(c) + 0.125f;
  }
  TriPlaneVar t_in = random_planes(rng, 3, {5, 4, 6});

  TriPlaneVar out = generator_forward(g, t_in, nullptr);
  for (int64_t c = 0; c < 3; ++c) {
    const float want = g.xy.blocks[3].b.val().data()[c];
    for (int64_t i = 0; i < 5 * 4; ++i) {
      CHECK(out.f_xy.val().data()[c * 5 * 4 + i] == want);
    }
  }
}

TEST_CASE("zero plane noise equals the noise-free evaluation") {
  Rng rng(107);
  GeneratorLevel g = make_generator(6, true, rng);
  TriPlaneVar t_in = random_planes(rng, 6, {7, 6, 8});
  PlaneNoise zero;
  zero.xy = Tensor::zeros({7, 6});
  zero.xz = Tensor::zeros({7, 8});
  zero.yz = Tensor::zeros({6, 8});

  TriPlaneVar a = generator_forward(g, t_in, &zero);
  TriPlaneVar b = generator_forward(g, t_in, nullptr);
  for (int64_t i = 0; i < a.f_xy.numel(); ++i) {
    CHECK(a.f_xy.val().data()[i] == b.f_xy.val().data()[i]);
  }
  for (int64_t i = 0; i < a.f_xz.numel(); ++i) {
    CHECK(a.f_xz.val().data()[i] == b.f_xz.val().data()[i]);
  }
}

TEST_CASE("generator preserves plane extents and validates its noise") {
  Rng rng(108);
  GeneratorLevel g = make_generator(8, true, rng);
  TriPlaneVar t_in = random_planes(rng, 8, {9, 7, 11});

  TriPlaneVar out = generator_forward(g, t_in, nullptr);
  CHECK(out.f_xy.shape() == t_in.f_xy.shape());
  CHECK(out.f_xz.shape() == t_in.f_xz.shape());
  CHECK(out.f_yz.shape() == t_in.f_yz.shape());

  SUBCASE("noise extent mismatch is rejected") {
    PlaneNoise bad;
    bad.xy = Tensor::zeros({8, 7});  // needs {9, 7}
    bad.xz = Tensor::zeros({9, 11});
    bad.yz = Tensor::zeros({7, 11});
    CHECK_THROWS_AS(generator_forward(g, t_in, &bad), Error);
  }
  SUBCASE("the base level refuses noise") {
    GeneratorLevel base = make_generator(8, false, rng);
    PlaneNoise z;
    z.xy = Tensor::zeros({9, 7});
    z.xz = Tensor::zeros({9, 11});
    z.yz = Tensor::zeros({7, 11});
    try {
      generator_forward(base, t_in, &z);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_input);
    }
  }
}

TEST_CASE("critic halves spatial extents and rejects sub-patch grids") {
  Rng rng(109);
  DiscriminatorNet d = make_discriminator(1, 32, rng);

  Var even = Var::constant(random_tensor(rng, {1, 22, 22, 22}, 0.5f));
  CHECK(discriminator_forward(d, even).shape() == std::vector<int64_t>{32, 11, 11, 11});

  Var odd = Var::constant(random_tensor(rng, {1, 13, 15, 17}, 0.5f));
  CHECK(discriminator_forward(d, odd).shape() == std::vector<int64_t>{32, 7, 8, 9});

  Var small = Var::constant(Tensor::zeros({1, 10, 12, 12}));
  CHECK_THROWS_AS(discriminator_forward(d, small), Error);
}

TEST_CASE("critic with zero weights scores its final bias everywhere") {
  Rng rng(110);
  DiscriminatorNet d = make_discriminator(1, 4, rng);
  zero_params(d.params());
  for (int64_t c = 0; c < 4; ++c) {
    Var(d.blocks[2].b).mutable_val().data()[c] = 0.0625f * float(c) - 0.1f;
  }
  Var x = Var::constant(random_tensor(rng, {1, 12, 12, 12}));

  Var s = discriminator_forward(d, x);
  const int64_t cells = 6 * 6 * 6;
  for (int64_t c = 0; c < 4; ++c) {
    const float want = d.blocks[2].b.val().data()[c];
    for (int64_t i = 0; i < cells; ++i) {
      CHECK(s.val().data()[c * cells + i] == want);
    }
  }
}

// The patch size claim: each score element reads an 11x11x11 window, from
// k3/s2 then two k3/s1 layers (reach 2c-5 .. 2c+5 around output index c).
// With normalization the statistics couple every position at tiny magnitude,
// so the exact-footprint check runs on plain conv blocks (same geometry,
// same forward code) and the production blocks get a dominance check.
TEST_CASE("critic impulse response covers exactly the advertised patch") {
  Rng rng(111);
  DiscriminatorNet d = make_discriminator(1, 6, rng);

  const int64_t vd = 15, vh = 14, vw = 13;
  Tensor zeros = Tensor::zeros({1, 31, 29, 33});
  Tensor bumped = zeros.clone();
  bumped.data()[(vd * 29 + vh) * 33 + vw] = 1.0f;

  // Influence interval along one axis for input index v: ceil((v-5)/2)
  // .. floor((v+5)/2).
  const int64_t d_lo = 5, d_hi = 10, h_lo = 5, h_hi = 9, w_lo = 4, w_hi = 9;

  auto diff_map = [&](const DiscriminatorNet& net) {
    Var a = discriminator_forward(net, Var::constant(zeros));
    Var b = discriminator_forward(net, Var::constant(bumped));
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
      out.data()[i] = std::abs(a.val().data()[i] - b.val().data()[i]);
    }
    return out;
  };
  auto in_box = [&](int64_t i, int64_t j, int64_t k) {
    return i >= d_lo && i <= d_hi && j >= h_lo && j <= h_hi && k >= w_lo && k <= w_hi;
  };

  SUBCASE("exact footprint with the normalization stripped") {
    DiscriminatorNet plain = d.clone();
    for (ConvBlock& blk : plain.blocks) {
      blk.gamma = Var();
      blk.beta = Var();
    }
    Tensor diff = diff_map(plain);
    const int64_t oh = diff.dim(2), ow = diff.dim(3);
    for (int64_t c = 0; c < diff.dim(0); ++c) {
      for (int64_t i = 0; i < diff.dim(1); ++i) {
        for (int64_t j = 0; j < oh; ++j) {
          for (int64_t k = 0; k < ow; ++k) {
            if (!in_box(i, j, k)) {
              CHECK(diff.data()[((c * diff.dim(1) + i) * oh + j) * ow + k] == 0.0f);
            }
          }
        }
      }
    }
    // Tightness: the extreme corners of the box do respond.
    auto at = [&](int64_t c, int64_t i, int64_t j, int64_t k) {
      return diff.data()[((c * diff.dim(1) + i) * oh + j) * ow + k];
    };
    double lo_corner = 0, hi_corner = 0;
    for (int64_t c = 0; c < diff.dim(0); ++c) {
      lo_corner += at(c, d_lo, h_lo, w_lo);
      hi_corner += at(c, d_hi, h_hi, w_hi);
    }
    CHECK(lo_corner > 0.0);
    CHECK(hi_corner > 0.0);
  }

  SUBCASE("with normalization the response is dominated by the same patch") {
    Tensor diff = diff_map(d);
    const int64_t oh = diff.dim(2), ow = diff.dim(3);
    double max_in = 0, max_out = 0;
    for (int64_t c = 0; c < diff.dim(0); ++c) {
      for (int64_t i = 0; i < diff.dim(1); ++i) {
        for (int64_t j = 0; j < oh; ++j) {
          for (int64_t k = 0; k < ow; ++k) {
            const double v = diff.data()[((c * diff.dim(1) + i) * oh + j) * ow + k];
            (in_box(i, j, k) ? max_in : max_out) = std::max(in_box(i, j, k) ? max_in : max_out, v);
          }
        }
      }
    }
    CHECK(max_in > 0.0);
    CHECK(max_out < 0.02 * max_in);
  }
}

TEST_CASE("noise sampling: extents, determinism, and scale") {
  const std::vector<Dims3> geometry = pyramid_level_dims({64, 64, 64}, 0.75, 3);
  REQUIRE(geometry.front() == Dims3{27, 27, 27});
  const std::vector<double> sigmas = {1.0, 0.5, 0.25, 0.125};

  NoiseSpec spec = sample_noise(geometry, geometry.front(), sigmas, 77);
  REQUIRE(spec.num_scales() == 3);
  CHECK(spec.z0.shape() == std::vector<int64_t>{27, 27, 27});
  CHECK(spec.planes[0].xy.shape() == std::vector<int64_t>{36, 36});
  CHECK(spec.planes[2].yz.shape() == std::vector<int64_t>{64, 64});

  SUBCASE("same seed reproduces every draw bit for bit") {
    NoiseSpec again = sample_noise(geometry, geometry.front(), sigmas, 77);
    for (int64_t i = 0; i < spec.z0.numel(); ++i) {
      CHECK(spec.z0.data()[i] == again.z0.data()[i]);
    }
    for (int lvl = 0; lvl < 3; ++lvl) {
      for (int64_t i = 0; i < spec.planes[size_t(lvl)].xz.numel(); ++i) {
        CHECK(spec.planes[size_t(lvl)].xz.data()[i] == again.planes[size_t(lvl)].xz.data()[i]);
      }
    }
  }

  SUBCASE("zero plane stds give exactly zero maps") {
    NoiseSpec rec = sample_noise(geometry, geometry.front(), {1.0, 0.0, 0.0, 0.0}, 78);
    bool z0_nonzero = false;
    for (int64_t i = 0; i < rec.z0.numel(); ++i) z0_nonzero |= rec.z0.data()[i] != 0.0f;
    CHECK(z0_nonzero);
    for (const PlaneNoise& pn : rec.planes) {
      for (const Tensor* t : {&pn.xy, &pn.xz, &pn.yz}) {
        for (int64_t i = 0; i < t->numel(); ++i) {
          CHECK(t->data()[i] == 0.0f);
        }
      }
    }
  }

  SUBCASE("per-level stds land near their targets") {
    CHECK(std::abs(sample_stddev(spec.z0.data(), spec.z0.numel()) - 1.0) < 0.02);
    CHECK(std::abs(sample_stddev(spec.planes[2].xy.data(), spec.planes[2].xy.numel()) - 0.125) <
          0.125 * 0.05);
  }

  SUBCASE("doubling one target axis doubles that axis at every level") {
    Dims3 target = geometry.front();
    target.d *= 2;
    NoiseSpec wide = sample_noise(geometry, target, sigmas, 77);
    CHECK(wide.z0.shape() == std::vector<int64_t>{54, 27, 27});
    for (int lvl = 1; lvl <= 3; ++lvl) {
      const Dims3 g = geometry[size_t(lvl)];
      CHECK(wide.planes[size_t(lvl - 1)].xy.shape() == std::vector<int64_t>{2 * g.d, g.h});
      CHECK(wide.planes[size_t(lvl - 1)].xz.shape() == std::vector<int64_t>{2 * g.d, g.w});
      CHECK(wide.planes[size_t(lvl - 1)].yz.shape() == std::vector<int64_t>{g.h, g.w});
    }
  }
}

TEST_CASE("scaled level extents") {
  const std::vector<Dims3> geometry = {{26, 15, 15}, {34, 15, 18}, {45, 17, 24}};

  SUBCASE("the trained base reproduces the trained extents") {
    CHECK(scaled_level_dims(geometry, {26, 15, 15}) == geometry);
  }
  SUBCASE("integer stretches scale every level exactly") {
    std::vector<Dims3> got = scaled_level_dims(geometry, {52, 30, 30});
    for (size_t i = 0; i < geometry.size(); ++i) {
      CHECK(got[i] == Dims3{2 * geometry[i].d, 2 * geometry[i].h, 2 * geometry[i].w});
    }
  }
  SUBCASE("tiny targets floor at one voxel") {
    std::vector<Dims3> got = scaled_level_dims(geometry, {1, 1, 1});
    for (const Dims3& dm : got) {
      CHECK(dm.d >= 1);
      CHECK(dm.h >= 1);
      CHECK(dm.w >= 1);
    }
  }
  SUBCASE("degenerate targets are rejected") {
    CHECK_THROWS_AS(scaled_level_dims(geometry, {0, 15, 15}), Error);
  }
}

TEST_CASE("factory initialization: spread, identity norms, determinism") {
  Rng rng(202);
  GeneratorLevel g = make_generator(32, true, rng);

  std::vector<float> weights;
  for (const Var& p : g.params()) {
    if (p.shape().size() == 4) {
      weights.insert(weights.end(), p.val().data(), p.val().data() + p.numel());
    } else if (p.shape().size() == 1) {
      // Biases and norm shifts start at zero, norm scales at one.
      bool all_zero = true, all_one = true;
      for (int64_t i = 0; i < p.numel(); ++i) {
        all_zero &= p.val().data()[i] == 0.0f;
        all_one &= p.val().data()[i] == 1.0f;
      }
      CHECK((all_zero || all_one));
    }
  }
  CHECK(std::abs(sample_stddev(weights.data(), int64_t(weights.size())) - 0.02) < 0.02 * 0.02);

  Rng a(55), b(55);
  DiscriminatorNet da = make_discriminator(1, 8, a);
  DiscriminatorNet db = make_discriminator(1, 8, b);
  std::vector<Var> pa = da.params(), pb = db.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].numel() == pb[i].numel());
    for (int64_t j = 0; j < pa[i].numel(); ++j) {
      CHECK(pa[i].val().data()[j] == pb[i].val().data()[j]);
    }
  }
}

TEST_CASE("the full stack is convolutional: base dims propagate to the output") {
  Rng rng(203);
  const int64_t c = 6;
  const std::vector<Dims3> geometry = {{5, 4, 6}, {7, 5, 8}, {9, 7, 11}};
  ProjectionNet p = make_projection(c, 4, rng);
  GeneratorLevel g0 = make_generator(c, false, rng);
  GeneratorLevel g1 = make_generator(c, true, rng);
  GeneratorLevel g2 = make_generator(c, true, rng);
  OccupancyDecoder dec = make_decoder(c, 8, rng);

  auto run = [&](Dims3 base) {
    const std::vector<Dims3> dims = scaled_level_dims(geometry, base);
    NoiseSpec noise = sample_noise(geometry, base, {1.0, 0.3, 0.2}, 11);
    TriPlaneVar t = generator_forward(g0, project(p, noise.z0), nullptr);
    const GeneratorLevel* uppers[] = {&g1, &g2};
    for (size_t i = 1; i < dims.size(); ++i) {
      TriPlane up = upsample_triplane(triplane_value(t), dims[i]);
      t = generator_forward(*uppers[i - 1], triplane_constant(up), &noise.planes[i - 1]);
    }
    return triplane_value(t);
  };

  TriPlane native = run(geometry.front());
  CHECK(native.dims() == geometry.back());

  TriPlane stretched = run({10, 4, 6});
  CHECK(stretched.dims() == Dims3{18, 7, 11});

  VoxelGrid grid = decode_grid(stretched, dec, stretched.dims());
  CHECK(grid.dims() == stretched.dims());
  for (int64_t i = 0; i < grid.volume(); ++i) {
    CHECK(grid.data.data()[i] > 0.0f);
    CHECK(grid.data.data()[i] < 1.0f);
  }
}
