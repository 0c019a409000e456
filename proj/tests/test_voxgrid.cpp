#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "ssg/mesh.hpp"
#include "ssg/voxgrid.hpp"
#include "test_shapes.hpp"

using namespace ssg;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("scale count: deepest pyramid whose coarsest side stays >= 22") {
  CHECK(choose_num_scales({128, 128, 128}, 0.75) == 6);
  CHECK(choose_num_scales({256, 72, 118}, 0.75) == 8);
  CHECK(choose_num_scales({64, 64, 64}, 0.75) == 3);
  CHECK(choose_num_scales({22, 22, 22}, 0.75) == 0);
  CHECK_THROWS_AS(choose_num_scales({21, 21, 21}, 0.75), Error);
}

TEST_CASE("level dims follow round(s * r^(N-i)) per axis") {
  auto dims = pyramid_level_dims({128, 128, 128}, 0.75, 6);
  REQUIRE(dims.size() == 7);
  int64_t want[7] = {23, 30, 41, 54, 72, 96, 128};  // 40.5 rounds up, not to even
  for (int i = 0; i <= 6; ++i) {
    CHECK(dims[size_t(i)].d == want[i]);
    CHECK(dims[size_t(i)].h == want[i]);
    CHECK(dims[size_t(i)].w == want[i]);
  }

  // non-cubic shapes keep their aspect ratio level by level
  auto rdims = pyramid_level_dims({256, 72, 118}, 0.75, 8);
  REQUIRE(rdims.size() == 9);
  CHECK(rdims.back() == (Dims3{256, 72, 118}));
  for (size_t i = 0; i + 1 < rdims.size(); ++i) {
    CHECK(rdims[i].d <= rdims[i + 1].d);
    CHECK(rdims[i].h <= rdims[i + 1].h);
    CHECK(rdims[i].w <= rdims[i + 1].w);
    // aspect drifts by at most rounding alone
    double a0 = double(rdims[i].d) / double(rdims[i].w);
    double a1 = double(rdims.back().d) / double(rdims.back().w);
    CHECK(std::abs(a0 - a1) / a1 < 0.05);
  }
  CHECK(rdims.front().d == 26);  // round(256 * 0.75^8) = round(25.63)

  // tiny axes floor at 1 rather than vanishing
  auto tiny = pyramid_level_dims({128, 1, 1}, 0.75, 6);
  for (auto& d : tiny) {
    CHECK(d.h == 1);
    CHECK(d.w == 1);
  }
}

TEST_CASE("gaussian blur: impulse response, mass, and flat fields") {
  VoxelGrid imp({9, 9, 9});
  imp.at(4, 4, 4) = 1.0f;
  VoxelGrid bl = gaussian_blur(imp, 0.5);

  // 1-D kernel at sigma .5 has radius 2: weights proportional to e^{-k^2/0.5}
  double s = 0;
  for (int k = -2; k <= 2; ++k) s += std::exp(-double(k * k) / 0.5);
  double w1 = 1.0 / s;
  CHECK(bl.at(4, 4, 4) == doctest::Approx(w1 * w1 * w1).epsilon(1e-5));

  double mass = 0;
  for (int64_t i = 0; i < bl.volume(); ++i) mass += bl.data.data()[i];
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

  // constant field: interior untouched, zero-padded border dimmed
  VoxelGrid ones({9, 9, 9});
  ones.data.fill(1.0f);
  VoxelGrid blc = gaussian_blur(ones, 0.5);
  CHECK(blc.at(4, 4, 4) == 1.0f);
  CHECK(blc.at(2, 2, 2) == 1.0f);
  CHECK(blc.at(0, 0, 0) < 1.0f);

  // sigma zero is the identity
  VoxelGrid same = gaussian_blur(imp, 0.0);
  CHECK(same.at(4, 4, 4) == 1.0f);
}

TEST_CASE("box resample preserves constants and total mass") {
  VoxelGrid g({8, 8, 8});
  g.data.fill(0.75f);
  VoxelGrid down = box_resample(g, {4, 4, 4});
  CHECK(down.dims() == (Dims3{4, 4, 4}));
  for (int64_t i = 0; i < down.volume(); ++i) CHECK(down.data.data()[i] == doctest::Approx(0.75f));

  // non-integer ratio: mean preserved (area weights sum to 1 per output cell)
  VoxelGrid ramp({6, 5, 7});
  for (int64_t i = 0; i < ramp.volume(); ++i) ramp.data.data()[i] = float(i % 13) / 13.0f;
  VoxelGrid d2 = box_resample(ramp, {4, 3, 5});
  double m_in = 0, m_out = 0;
  for (int64_t i = 0; i < ramp.volume(); ++i) m_in += ramp.data.data()[i];
  for (int64_t i = 0; i < d2.volume(); ++i) m_out += d2.data.data()[i];
  CHECK(m_in / double(ramp.volume()) == doctest::Approx(m_out / double(d2.volume())).epsilon(1e-5));
}

TEST_CASE("voxelizing a box fills it and keeps its aspect ratio") {
  Mesh cube = test_shapes::box(1, 1, 1);
  VoxelGrid vc = voxelize_mesh(cube, 16);
  CHECK(vc.dims() == (Dims3{16, 16, 16}));
  CHECK(vc.occupied_fraction() == 1.0);

  // 2:1:1 box, long axis z -> dims (32, 16, 16)
  Mesh box = test_shapes::box(1, 1, 2);
  VoxelGrid vb = voxelize_mesh(box, 32);
  CHECK(vb.dims() == (Dims3{32, 16, 16}));
  CHECK(vb.occupied_fraction() == 1.0);
}

TEST_CASE("voxelized sphere occupies pi/6 of its bounding cube") {
  Mesh sph = test_shapes::uv_sphere(0.5f, 64, 128);
  VoxelGrid vs = voxelize_mesh(sph, 32);
  double frac = vs.occupied_fraction();
  CHECK(std::abs(frac - kPi / 6) / (kPi / 6) < 0.05);
}

TEST_CASE("fully enclosed voids count as solid") {
  // box-in-box: the inner cavity is sealed away from the exterior, and
  // occupancy == "unreachable from outside", so the cavity fills in
  Mesh outer = test_shapes::box(1, 1, 1);
  Mesh inner = test_shapes::box(0.5f, 0.5f, 0.5f);
  for (auto& v : inner.vertices)
    for (int k = 0; k < 3; ++k) v[size_t(k)] += 0.25f;
  for (auto& f : inner.faces) std::swap(f[1], f[2]);  // cavity orientation
  Mesh shell = outer;
  int base = int(shell.vertices.size());
  shell.vertices.insert(shell.vertices.end(), inner.vertices.begin(), inner.vertices.end());
  for (auto f : inner.faces)
    shell.faces.push_back({f[0] + base, f[1] + base, f[2] + base});

  VoxelGrid vg = voxelize_mesh(shell, 32);
  CHECK(vg.at(16, 16, 16) == 1.0f);
  CHECK(vg.occupied_fraction() == 1.0);
}

TEST_CASE("grid pyramid: shapes, clamping, and value range") {
  PyramidConfig pc;
  VoxelGrid src({64, 64, 64});
  for (int64_t z = 16; z < 48; ++z)
    for (int64_t y = 16; y < 48; ++y)
      for (int64_t x = 16; x < 48; ++x) src.at(z, y, x) = 1.0f;
  VoxelPyramid pyr = build_pyramid(src, pc);
  CHECK(pyr.num_scales() == 3);
  REQUIRE(pyr.levels.size() == 4);
  CHECK(pyr.finest().dims() == (Dims3{64, 64, 64}));
  for (auto& lvl : pyr.levels) {
    const float* p = lvl.data.data();
    for (int64_t i = 0; i < lvl.volume(); ++i) {
      CHECK(p[i] >= 0.0f);
      CHECK(p[i] <= 1.0f);
    }
  }
  for (size_t i = 0; i + 1 < pyr.levels.size(); ++i) CHECK(pyr.levels[i].d() <= pyr.levels[i + 1].d());

  // short axes are clamped up to min_dim at coarse levels
  VoxelGrid thin({64, 16, 16});
  thin.data.fill(1.0f);
  VoxelPyramid tp = build_pyramid(thin, pc);
  CHECK(tp.coarsest().dims() == (Dims3{27, 15, 15}));
  CHECK(tp.finest().dims() == (Dims3{64, 16, 16}));

  // a constant solid survives every level exactly when blur is off
  VoxelGrid onesrc({32, 32, 32});
  onesrc.data.fill(1.0f);
  PyramidConfig pc2;
  pc2.num_scales = 2;
  pc2.blur_sigma = 0.0;
  VoxelPyramid pyr2 = build_pyramid(onesrc, pc2);
  REQUIRE(pyr2.levels.size() == 3);
  for (auto& lvl : pyr2.levels)
    for (int64_t i = 0; i < lvl.volume(); ++i) CHECK(lvl.data.data()[i] == 1.0f);
}

TEST_CASE("mesh pyramid voxelizes each level at its own resolution") {
  Mesh sph = test_shapes::uv_sphere(0.5f, 48, 96);
  PyramidConfig pc;
  VoxelPyramid pyr = build_pyramid(sph, 64, pc);
  CHECK(pyr.num_scales() == 3);
  CHECK(pyr.finest().dims() == (Dims3{64, 64, 64}));
  // every level holds a comparable solid fraction of the sphere
  for (auto& lvl : pyr.levels) {
    double frac = 0;
    for (int64_t i = 0; i < lvl.volume(); ++i) frac += lvl.data.data()[i] > 0.5f;
    frac /= double(lvl.volume());
    CHECK(frac > 0.35);
    CHECK(frac < 0.70);
  }
}

TEST_CASE("grid files round-trip exactly and reject corruption") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "ssg_grid_io_test";
  fs::create_directories(dir);
  std::string path = (dir / "g.dat").string();

  VoxelGrid g({3, 2, 5});
  for (int64_t i = 0; i < g.volume(); ++i) g.data.data()[i] = float(i) / float(g.volume());
  save_grid(g, path);
  VoxelGrid r = load_grid(path);
  CHECK(r.dims() == g.dims());
  for (int64_t i = 0; i < g.volume(); ++i) CHECK(r.data.data()[i] == g.data.data()[i]);

  SUBCASE("bad magic") {
    FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fputc('X', f);
    std::fclose(f);
    CHECK_THROWS_AS(load_grid(path), Error);
    try {
      load_grid(path);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::format_error);
    }
  }
  SUBCASE("truncated payload") {
    fs::resize_file(path, fs::file_size(path) - 5);
    CHECK_THROWS_AS(load_grid(path), Error);
  }
  SUBCASE("value out of range") {
    FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fseek(f, 17, SEEK_SET);
    float bad = 2.5f;
    std::fwrite(&bad, sizeof bad, 1, f);
    std::fclose(f);
    CHECK_THROWS_AS(load_grid(path), Error);
  }
  SUBCASE("missing file") {
    try {
      load_grid((dir / "nope.dat").string());
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io_error);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("threshold splits at the given level") {
  VoxelGrid g({1, 1, 4});
  g.at(0, 0, 0) = 0.2f;
  g.at(0, 0, 1) = 0.5f;
  g.at(0, 0, 2) = 0.8f;
  g.at(0, 0, 3) = 0.49999f;
  VoxelGrid t = threshold_grid(g, 0.5f);
  CHECK(t.at(0, 0, 0) == 0.0f);
  CHECK(t.at(0, 0, 1) == 1.0f);  // >= threshold
  CHECK(t.at(0, 0, 2) == 1.0f);
  CHECK(t.at(0, 0, 3) == 0.0f);
}
