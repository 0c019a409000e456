#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "ssg/nets.hpp"
#include "ssg/sampler.hpp"
#include "ssg/train.hpp"
#include "ssg/triplane.hpp"
#include "ssg/voxgrid.hpp"

using namespace ssg;

namespace {

VoxelGrid sphere_grid(Dims3 dm) {
  VoxelGrid g(dm);
  const double cz = double(dm.d - 1) / 2, cy = double(dm.h - 1) / 2, cx = double(dm.w - 1) / 2;
  const double rad = 0.38 * double(std::min(dm.d, std::min(dm.h, dm.w)));
  for (int64_t z = 0; z < dm.d; ++z)
    for (int64_t y = 0; y < dm.h; ++y)
      for (int64_t x = 0; x < dm.w; ++x) {
        const double dz = z - cz, dy = y - cy, dx = x - cx;
        if (dz * dz + dy * dy + dx * dx <= rad * rad) g.at(z, y, x) = 1.0f;
      }
  return g;
}

// One lightly trained two-level stack shared by every case; all consumers
// are read-only, which the concurrency contract guarantees is safe.
const ModelStack& tiny_stack() {
  static const ModelStack stack = [] {
    VoxelPyramid pyr;
    pyr.r = 0.75;
    pyr.levels.push_back(sphere_grid({12, 12, 12}));
    pyr.levels.push_back(sphere_grid({16, 16, 16}));
    TrainConfig cfg;
    cfg.channels = 4;
    cfg.hidden = 6;
    cfg.critic_width = 6;
    cfg.pool_bins = 3;
    cfg.iters_per_scale = 6;
    cfg.d_steps = 1;
    cfg.g_steps = 2;
    cfg.lr = 1e-3;
    cfg.seed = 17;
    return train_all(pyr, cfg, nullptr, {});
  }();
  return stack;
}

bool grids_equal(const VoxelGrid& a, const VoxelGrid& b) {
  if (!(a.dims() == b.dims())) return false;
  for (int64_t i = 0; i < a.volume(); ++i)
    if (a.data.data()[i] != b.data.data()[i]) return false;
  return true;
}

double differing_fraction(const VoxelGrid& a, const VoxelGrid& b) {
  REQUIRE(a.dims() == b.dims());
  int64_t n = 0;
  for (int64_t i = 0; i < a.volume(); ++i)
    if (a.data.data()[i] != b.data.data()[i]) ++n;
  return double(n) / double(a.volume());
}

void check_open_unit_range(const VoxelGrid& g) {
  float lo = 1.0f, hi = 0.0f;
  for (int64_t i = 0; i < g.volume(); ++i) {
    lo = std::min(lo, g.data.data()[i]);
    hi = std::max(hi, g.data.data()[i]);
  }
  CHECK(lo > 0.0f);
  CHECK(hi < 1.0f);
}

}  // namespace

TEST_CASE("generated grids follow the requested extents") {
  const ModelStack& stack = tiny_stack();
  GenerationRequest req;
  req.seed = 5;

  SUBCASE("defaults decode at the finest trained extents") {
    VoxelGrid g = generate(stack, req);
    CHECK(g.dims() == Dims3{16, 16, 16});
    check_open_unit_range(g);
  }
  SUBCASE("explicit output dims win") {
    req.output_dims = {20, 24, 17};
    CHECK(generate(stack, req).dims() == Dims3{20, 24, 17});
  }
  SUBCASE("the multiplier stretches the finest extents") {
    req.multiplier = 2.0;
    CHECK(generate(stack, req).dims() == Dims3{32, 32, 32});
    req.multiplier = 8.0;
    CHECK(generate(stack, req).dims() == Dims3{128, 128, 128});
  }
  SUBCASE("resized base noise rescales the whole output") {
    req.coarse_dims = {24, 12, 12};
    VoxelGrid g = generate(stack, req);
    CHECK(g.dims() == Dims3{32, 16, 16});
    req.multiplier = 2.0;
    CHECK(generate(stack, req).dims() == Dims3{64, 32, 32});
  }
}

TEST_CASE("generation is pure in the request and sensitive to the seed") {
  const ModelStack& stack = tiny_stack();
  GenerationRequest req;
  req.seed = 9;
  VoxelGrid a = generate(stack, req);
  VoxelGrid b = generate(stack, req);
  CHECK(grids_equal(a, b));

  req.seed = 10;
  VoxelGrid c = generate(stack, req);
  CHECK(differing_fraction(a, c) >= 0.01);
}

TEST_CASE("reconstruction is the stored-noise cascade") {
  const ModelStack& stack = tiny_stack();
  VoxelGrid rec = reconstruct(stack);
  CHECK(rec.dims() == Dims3{16, 16, 16});
  CHECK(grids_equal(rec, reconstruct(stack)));

  TriPlane planes = cascade(stack, reconstruction_noise(stack));
  SUBCASE("it decodes the reconstruction planes at the finest extents") {
    CHECK(grids_equal(rec, decode_grid(planes, stack.decoders.back(), {16, 16, 16})));
  }
  SUBCASE("a coarser output is the same planes decoded coarser") {
    CHECK(grids_equal(reconstruct(stack, {12, 12, 12}),
                      decode_grid(planes, stack.decoders.back(), {12, 12, 12})));
  }
  SUBCASE("generate dispatches the reconstruct mode") {
    GenerationRequest req;
    req.mode = GenMode::reconstruct;
    req.seed = 123;  // must be ignored by this mode
    CHECK(grids_equal(generate(stack, req), rec));
  }
}

TEST_CASE("interpolation endpoints are bitwise endpoints") {
  const ModelStack& stack = tiny_stack();
  GenerationRequest req;
  req.mode = GenMode::interpolate;
  req.seed_a = 31;
  req.seed_b = 77;

  auto endpoint = [&](uint64_t seed, FixedPlaneNoise fixed, uint64_t plane_seed) {
    NoiseSpec ns;
    ns.z0 = draw_noise(stack, {12, 12, 12}, seed).z0;
    ns.planes = fixed == FixedPlaneNoise::zeros
                    ? reconstruction_noise(stack).planes
                    : draw_noise(stack, {12, 12, 12}, plane_seed).planes;
    return decode_grid(cascade(stack, ns), stack.decoders.back(), {16, 16, 16});
  };

  SUBCASE("alpha 0 is the seed_a cascade under zero plane noise") {
    req.alpha = 0.0;
    CHECK(grids_equal(interpolate(stack, req), endpoint(31, FixedPlaneNoise::zeros, 0)));
  }
  SUBCASE("alpha 1 is the seed_b cascade") {
    req.alpha = 1.0;
    CHECK(grids_equal(interpolate(stack, req), endpoint(77, FixedPlaneNoise::zeros, 0)));
  }
  SUBCASE("sampled fixed planes come from the request seed") {
    req.alpha = 0.0;
    req.fixed_planes = FixedPlaneNoise::sample;
    req.seed = 901;
    CHECK(grids_equal(interpolate(stack, req), endpoint(31, FixedPlaneNoise::sample, 901)));
  }
  SUBCASE("the blend moves away from both endpoints") {
    req.alpha = 0.5;
    VoxelGrid mid = interpolate(stack, req);
    CHECK(!grids_equal(mid, endpoint(31, FixedPlaneNoise::zeros, 0)));
    CHECK(!grids_equal(mid, endpoint(77, FixedPlaneNoise::zeros, 0)));
  }
  SUBCASE("an extrapolating sweep stays decodable") {
    for (double alpha : {-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0, 1.25}) {
      req.alpha = alpha;
      VoxelGrid g = interpolate(stack, req);
      CHECK(g.dims() == Dims3{16, 16, 16});
      check_open_unit_range(g);
    }
  }
  SUBCASE("generate dispatches the interpolate mode") {
    req.alpha = 0.25;
    CHECK(grids_equal(generate(stack, req), interpolate(stack, req)));
  }
}

TEST_CASE("binarization is opt-in and strict at one half") {
  VoxelGrid raw({1, 1, 4});
  raw.data.data()[0] = 0.2f;
  raw.data.data()[1] = 0.5f;
  raw.data.data()[2] = 0.500001f;
  raw.data.data()[3] = 0.9f;
  VoxelGrid bin = binarize_grid(raw);
  CHECK(bin.data.data()[0] == 0.0f);
  CHECK(bin.data.data()[1] == 0.0f);  // exactly one half stays empty
  CHECK(bin.data.data()[2] == 1.0f);
  CHECK(bin.data.data()[3] == 1.0f);

  const ModelStack& stack = tiny_stack();
  GenerationRequest req;
  req.seed = 4;
  req.binarize = true;
  VoxelGrid g = generate(stack, req);
  for (int64_t i = 0; i < g.volume(); ++i) {
    const float v = g.data.data()[i];
    CHECK((v == 0.0f || v == 1.0f));
  }
}

TEST_CASE("bad generation requests are rejected") {
  const ModelStack& stack = tiny_stack();

  SUBCASE("fractional shrink multipliers") {
    GenerationRequest req;
    req.multiplier = 0.5;
    try {
      generate(stack, req);
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_input);
    }
  }
  SUBCASE("partially-zero coarse dims") {
    GenerationRequest req;
    req.coarse_dims = {0, 12, 12};
    try {
      generate(stack, req);
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_input);
    }
  }
  SUBCASE("non-finite alpha") {
    GenerationRequest req;
    req.mode = GenMode::interpolate;
    req.alpha = std::nan("");
    try {
      interpolate(stack, req);
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_input);
    }
  }
  SUBCASE("an untrained stack cannot generate") {
    ModelStack empty;
    try {
      generate(empty, GenerationRequest{});
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_state);
    }
  }
}
