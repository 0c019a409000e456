#include "voxgrid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>

#include "kernels.hpp"
#include "mesh.hpp"

namespace ssg {

namespace {

// Coarsest usable extent: N is grown until the next level's largest axis
// would round below this.
constexpr int64_t kCoarsestMax = 22;

int64_t round_half_away(double v) { return std::llround(v); }

}  // namespace

VoxelGrid::VoxelGrid(Tensor t) : data(std::move(t)) {
    SSG_CHECK(data.ndim() == 3, invalid_input,
              "voxel grid tensor must be rank 3, got rank " + std::to_string(data.ndim()));
    for (int a = 0; a < 3; ++a) {
        SSG_CHECK(data.shape()[a] > 0, invalid_input,
                  "voxel grid axis " + std::to_string(a) + " must be positive");
    }
}

VoxelGrid VoxelGrid::clone() const {
    VoxelGrid g;
    g.data = data.clone();
    return g;
}

double VoxelGrid::occupied_fraction() const {
    const float* p = data.data();
    int64_t n = data.numel();
    int64_t count = 0;
    for (int64_t i = 0; i < n; ++i) count += p[i] > 0.5f;
    return static_cast<double>(count) / static_cast<double>(n);
}

void PyramidConfig::validate() const {
    SSG_CHECK(r > 0.0 && r < 1.0, config_error,
              "pyramid scale factor must lie in (0,1), got " + std::to_string(r));
    SSG_CHECK(min_dim >= 1, config_error, "pyramid min_dim must be >= 1");
    SSG_CHECK(blur_sigma >= 0.0, config_error, "pyramid blur_sigma must be >= 0");
    SSG_CHECK(num_scales >= -1, config_error,
              "pyramid num_scales must be >= 0, or -1 for automatic");
}

int choose_num_scales(Dims3 finest_dims, double r) {
    SSG_CHECK(r > 0.0 && r < 1.0, invalid_input,
              "scale factor must lie in (0,1)");
    int64_t mx = std::max({finest_dims.d, finest_dims.h, finest_dims.w});
    SSG_CHECK(mx >= kCoarsestMax, invalid_input,
              "largest axis must be at least " + std::to_string(kCoarsestMax) +
                  " to size the level stack automatically; got " + std::to_string(mx));
    int n = 0;
    double f = r;
    while (round_half_away(static_cast<double>(mx) * f) >= kCoarsestMax && n < 1000) {
        ++n;
        f *= r;
    }
    return n;
}

std::vector<Dims3> pyramid_level_dims(Dims3 finest_dims, double r, int num_scales) {
    SSG_CHECK(r > 0.0 && r < 1.0, invalid_input, "scale factor must lie in (0,1)");
    SSG_CHECK(num_scales >= 0, invalid_input, "num_scales must be >= 0");
    // factors[k] = r^k, built by repeated multiplication so the sequence is
    // reproducible across platforms (and exact for dyadic-rational r).
    std::vector<double> factors(static_cast<size_t>(num_scales) + 1);
    factors[0] = 1.0;
    for (int k = 1; k <= num_scales; ++k) factors[k] = factors[k - 1] * r;
    std::vector<Dims3> out(static_cast<size_t>(num_scales) + 1);
    for (int i = 0; i <= num_scales; ++i) {
        double f = factors[num_scales - i];
        out[i] = {std::max<int64_t>(1, round_half_away(static_cast<double>(finest_dims.d) * f)),
                  std::max<int64_t>(1, round_half_away(static_cast<double>(finest_dims.h) * f)),
                  std::max<int64_t>(1, round_half_away(static_cast<double>(finest_dims.w) * f))};
    }
    return out;
}

namespace {

// One separable blur pass. `stride` is the element step along the blurred
// axis, `lines` holds the base offset of every 1-D line crossing it.
void blur_axis(const float* src, float* dst, int64_t n_axis, int64_t stride,
               const std::vector<int64_t>& lines, const std::vector<double>& weights,
               int radius) {
    for (int64_t base : lines) {
        for (int64_t i = 0; i < n_axis; ++i) {
            double acc = 0.0;
            int64_t k0 = std::max<int64_t>(-radius, -i);
            int64_t k1 = std::min<int64_t>(radius, n_axis - 1 - i);
            for (int64_t k = k0; k <= k1; ++k) {
                acc += weights[static_cast<size_t>(k + radius)] *
                       static_cast<double>(src[base + (i + k) * stride]);
            }
            dst[base + i * stride] = static_cast<float>(acc);
        }
    }
}

std::vector<int64_t> lines_for_axis(int64_t d, int64_t h, int64_t w, int axis) {
    std::vector<int64_t> lines;
    if (axis == 0) {  // blur along D: one line per (y, x)
        lines.reserve(static_cast<size_t>(h * w));
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) lines.push_back(y * w + x);
    } else if (axis == 1) {  // along H: one line per (z, x)
        lines.reserve(static_cast<size_t>(d * w));
        for (int64_t z = 0; z < d; ++z)
            for (int64_t x = 0; x < w; ++x) lines.push_back(z * h * w + x);
    } else {  // along W: one line per (z, y)
        lines.reserve(static_cast<size_t>(d * h));
        for (int64_t z = 0; z < d; ++z)
            for (int64_t y = 0; y < h; ++y) lines.push_back((z * h + y) * w);
    }
    return lines;
}

}  // namespace

VoxelGrid gaussian_blur(const VoxelGrid& grid, double sigma) {
    SSG_CHECK(sigma >= 0.0, invalid_input, "blur sigma must be >= 0");
    int radius = static_cast<int>(std::floor(4.0 * sigma));
    if (sigma == 0.0 || radius == 0) return grid;

    std::vector<double> weights(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        double wgt = std::exp(-static_cast<double>(k) * k / (2.0 * sigma * sigma));
        weights[static_cast<size_t>(k + radius)] = wgt;
        sum += wgt;
    }
    for (double& wgt : weights) wgt /= sum;

    int64_t d = grid.d(), h = grid.h(), w = grid.w();
    Tensor a = grid.data.clone();
    Tensor b(grid.data.shape());
    const int64_t strides[3] = {h * w, w, 1};
    float* pa = a.data();
    float* pb = b.data();
    for (int axis = 0; axis < 3; ++axis) {
        auto lines = lines_for_axis(d, h, w, axis);
        int64_t n_axis = axis == 0 ? d : (axis == 1 ? h : w);
        blur_axis(pa, pb, n_axis, strides[axis], lines, weights, radius);
        std::swap(pa, pb);
    }
    // After the swaps, `pa` points at whichever buffer holds the final pass.
    VoxelGrid out;
    out.data = (pa == a.data()) ? a : b;
    return out;
}

namespace {

// For each output cell along one axis: the input cells its footprint covers
// and their overlap weights (normalized to sum to 1).
std::vector<std::vector<std::pair<int64_t, double>>> box_table(int64_t n_in, int64_t n_out) {
    std::vector<std::vector<std::pair<int64_t, double>>> table(static_cast<size_t>(n_out));
    double s = static_cast<double>(n_in) / static_cast<double>(n_out);
    for (int64_t b = 0; b < n_out; ++b) {
        double lo = static_cast<double>(b) * s;
        double hi = static_cast<double>(b + 1) * s;
        int64_t j0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(lo)), 0, n_in - 1);
        int64_t j1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(hi)) - 1, j0, n_in - 1);
        double total = 0.0;
        auto& taps = table[static_cast<size_t>(b)];
        for (int64_t j = j0; j <= j1; ++j) {
            double ov = std::min(hi, static_cast<double>(j + 1)) -
                        std::max(lo, static_cast<double>(j));
            if (ov <= 0.0) continue;
            taps.push_back({j, ov});
            total += ov;
        }
        if (taps.empty()) {  // footprint vanished to rounding; fall back to nearest
            taps.push_back({j0, 1.0});
            total = 1.0;
        }
        for (auto& t : taps) t.second /= total;
    }
    return table;
}

Tensor box_pass(const Tensor& src, int axis,
                const std::vector<std::vector<std::pair<int64_t, double>>>& table) {
    int64_t d = src.shape()[0], h = src.shape()[1], w = src.shape()[2];
    int64_t n_out = static_cast<int64_t>(table.size());
    std::vector<int64_t> oshape = {d, h, w};
    oshape[static_cast<size_t>(axis)] = n_out;
    Tensor dst(oshape);
    const float* sp = src.data();
    float* dp = dst.data();
    int64_t od = oshape[0], oh = oshape[1], ow = oshape[2];
    for (int64_t z = 0; z < od; ++z) {
        for (int64_t y = 0; y < oh; ++y) {
            for (int64_t x = 0; x < ow; ++x) {
                int64_t oidx = axis == 0 ? z : (axis == 1 ? y : x);
                double acc = 0.0;
                for (auto [j, wgt] : table[static_cast<size_t>(oidx)]) {
                    int64_t sz = axis == 0 ? j : z;
                    int64_t sy = axis == 1 ? j : y;
                    int64_t sx = axis == 2 ? j : x;
                    acc += wgt * static_cast<double>(sp[(sz * h + sy) * w + sx]);
                }
                dp[(z * oh + y) * ow + x] = static_cast<float>(acc);
            }
        }
    }
    return dst;
}

}  // namespace

VoxelGrid box_resample(const VoxelGrid& grid, Dims3 target) {
    SSG_CHECK(target.d > 0 && target.h > 0 && target.w > 0, invalid_input,
              "box_resample target dims must be positive");
    if (target == grid.dims()) return grid;
    Tensor cur = grid.data;
    int64_t in_dims[3] = {grid.d(), grid.h(), grid.w()};
    int64_t out_dims[3] = {target.d, target.h, target.w};
    for (int axis = 0; axis < 3; ++axis) {
        if (in_dims[axis] == out_dims[axis]) continue;
        cur = box_pass(cur, axis, box_table(in_dims[axis], out_dims[axis]));
    }
    VoxelGrid out;
    out.data = cur;
    return out;
}

VoxelGrid resize_trilinear(const VoxelGrid& grid, Dims3 target) {
    SSG_CHECK(target.d > 0 && target.h > 0 && target.w > 0, invalid_input,
              "resize target dims must be positive");
    if (target == grid.dims()) return grid;
    VoxelGrid out(target);
    kernels::resize_grid_trilinear(grid.data.data(), static_cast<int>(grid.d()),
                                   static_cast<int>(grid.h()), static_cast<int>(grid.w()),
                                   out.data.data(), static_cast<int>(target.d),
                                   static_cast<int>(target.h), static_cast<int>(target.w));
    return out;
}

VoxelGrid threshold_grid(const VoxelGrid& grid, float threshold) {
    VoxelGrid out(grid.dims());
    const float* sp = grid.data.data();
    float* dp = out.data.data();
    int64_t n = grid.volume();
    for (int64_t i = 0; i < n; ++i) dp[i] = sp[i] >= threshold ? 1.0f : 0.0f;
    return out;
}

// ---------------------------------------------------------------------------
// Solid voxelization
// ---------------------------------------------------------------------------

namespace {

// Separating-axis overlap test between a triangle and an axis-aligned box
// given by center and half extents. All comparisons are inclusive: touching
// counts as overlap, so geometry lying exactly on a cell window still blocks
// it. Degenerate boxes (a zero half extent) are fine.
bool tri_box_overlap(const double center[3], const double half[3], const double a[3],
                     const double b[3], const double c[3]) {
    double v0[3], v1[3], v2[3];
    for (int i = 0; i < 3; ++i) {
        v0[i] = a[i] - center[i];
        v1[i] = b[i] - center[i];
        v2[i] = c[i] - center[i];
    }
    // Box-axis tests.
    for (int i = 0; i < 3; ++i) {
        double mn = std::min({v0[i], v1[i], v2[i]});
        double mx = std::max({v0[i], v1[i], v2[i]});
        if (mn > half[i] || mx < -half[i]) return false;
    }
    double e[3][3];
    for (int i = 0; i < 3; ++i) {
        e[0][i] = v1[i] - v0[i];
        e[1][i] = v2[i] - v1[i];
        e[2][i] = v0[i] - v2[i];
    }
    // Nine edge-cross axes L = e_k x u_axis; project all three vertices.
    for (int k = 0; k < 3; ++k) {
        for (int axis = 0; axis < 3; ++axis) {
            int i1 = (axis + 1) % 3, i2 = (axis + 2) % 3;
            // L has components: L[axis]=0, L[i1]=-e[k][i2]... derive via cross
            // with the unit axis: L = e x u means L[i1] = e[i2]*1 pattern.
            double L[3] = {0.0, 0.0, 0.0};
            L[i1] = -e[k][i2];
            L[i2] = e[k][i1];
            double p0 = L[0] * v0[0] + L[1] * v0[1] + L[2] * v0[2];
            double p1 = L[0] * v1[0] + L[1] * v1[1] + L[2] * v1[2];
            double p2 = L[0] * v2[0] + L[1] * v2[1] + L[2] * v2[2];
            double rad = half[0] * std::abs(L[0]) + half[1] * std::abs(L[1]) +
                         half[2] * std::abs(L[2]);
            if (std::min({p0, p1, p2}) > rad || std::max({p0, p1, p2}) < -rad) return false;
        }
    }
    // Triangle-plane test.
    double n[3] = {e[0][1] * e[1][2] - e[0][2] * e[1][1],
                   e[0][2] * e[1][0] - e[0][0] * e[1][2],
                   e[0][0] * e[1][1] - e[0][1] * e[1][0]};
    double dist = n[0] * v0[0] + n[1] * v0[1] + n[2] * v0[2];
    double rad = half[0] * std::abs(n[0]) + half[1] * std::abs(n[1]) + half[2] * std::abs(n[2]);
    if (dist > rad || dist < -rad) return false;
    return true;
}

struct FaceGrids {
    // fx: windows normal to W at integer x in [0, W], indexed (z*H + y)*(W+1) + x.
    // fy: windows normal to H at integer y in [0, H], indexed (z*(H+1) + y)*W + x.
    // fz: windows normal to D at integer z in [0, D], indexed (z*H + y)*W + x.
    std::vector<uint8_t> fx, fy, fz;
    int64_t d, h, w;

    FaceGrids(int64_t d_, int64_t h_, int64_t w_)
        : fx(static_cast<size_t>(d_ * h_ * (w_ + 1)), 0),
          fy(static_cast<size_t>(d_ * (h_ + 1) * w_), 0),
          fz(static_cast<size_t>((d_ + 1) * h_ * w_), 0),
          d(d_),
          h(h_),
          w(w_) {}

    uint8_t& x_face(int64_t z, int64_t y, int64_t xf) {
        return fx[static_cast<size_t>((z * h + y) * (w + 1) + xf)];
    }
    uint8_t& y_face(int64_t z, int64_t yf, int64_t x) {
        return fy[static_cast<size_t>((z * (h + 1) + yf) * w + x)];
    }
    uint8_t& z_face(int64_t zf, int64_t y, int64_t x) {
        return fz[static_cast<size_t>((zf * h + y) * w + x)];
    }
};

// Marks every blocked crossing the triangle causes. A crossing between two
// neighbour cells is blocked when the triangle cuts the unit segment joining
// their centers; the segment is fed to the SAT test as a degenerate box
// centered on the shared face (cell (z,y,x) spans [x,x+1) x [y,y+1) x
// [z,z+1), so the segment through face x = xf runs from x = xf-0.5 to
// xf+0.5 at the cell-center height). Blocking segments rather than the face
// windows themselves makes the occupied set track cell-center parity: a
// closed surface must cut every center-to-center path an odd number of
// times, while a surface merely passing through a cell's interior does not
// seal it off.
void rasterize_triangle(FaceGrids& fg, const double a[3], const double b[3],
                        const double c[3]) {
    double mn[3], mx[3];
    for (int i = 0; i < 3; ++i) {
        mn[i] = std::min({a[i], b[i], c[i]});
        mx[i] = std::max({a[i], b[i], c[i]});
    }
    auto clamp_cell = [](double v, int64_t n) {
        return std::clamp<int64_t>(static_cast<int64_t>(std::floor(v)), 0, n - 1);
    };
    // Segments through faces normal to W (planes x = xf).
    {
        int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(mn[0])), 0, fg.w);
        int64_t x1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(mx[0])), 0, fg.w);
        int64_t y0 = clamp_cell(mn[1] - 1.0, fg.h), y1 = clamp_cell(mx[1] + 1.0, fg.h);
        int64_t z0 = clamp_cell(mn[2] - 1.0, fg.d), z1 = clamp_cell(mx[2] + 1.0, fg.d);
        for (int64_t z = z0; z <= z1; ++z)
            for (int64_t y = y0; y <= y1; ++y)
                for (int64_t xf = x0; xf <= x1; ++xf) {
                    double center[3] = {static_cast<double>(xf), y + 0.5, z + 0.5};
                    double half[3] = {0.5, 0.0, 0.0};
                    if (tri_box_overlap(center, half, a, b, c)) fg.x_face(z, y, xf) = 1;
                }
    }
    // Segments through faces normal to H (planes y = yf).
    {
        int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(mn[1])), 0, fg.h);
        int64_t y1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(mx[1])), 0, fg.h);
        int64_t x0 = clamp_cell(mn[0] - 1.0, fg.w), x1 = clamp_cell(mx[0] + 1.0, fg.w);
        int64_t z0 = clamp_cell(mn[2] - 1.0, fg.d), z1 = clamp_cell(mx[2] + 1.0, fg.d);
        for (int64_t z = z0; z <= z1; ++z)
            for (int64_t yf = y0; yf <= y1; ++yf)
                for (int64_t x = x0; x <= x1; ++x) {
                    double center[3] = {x + 0.5, static_cast<double>(yf), z + 0.5};
                    double half[3] = {0.0, 0.5, 0.0};
                    if (tri_box_overlap(center, half, a, b, c)) fg.y_face(z, yf, x) = 1;
                }
    }
    // Segments through faces normal to D (planes z = zf).
    {
        int64_t z0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(mn[2])), 0, fg.d);
        int64_t z1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(mx[2])), 0, fg.d);
        int64_t x0 = clamp_cell(mn[0] - 1.0, fg.w), x1 = clamp_cell(mx[0] + 1.0, fg.w);
        int64_t y0 = clamp_cell(mn[1] - 1.0, fg.h), y1 = clamp_cell(mx[1] + 1.0, fg.h);
        for (int64_t zf = z0; zf <= z1; ++zf)
            for (int64_t y = y0; y <= y1; ++y)
                for (int64_t x = x0; x <= x1; ++x) {
                    double center[3] = {x + 0.5, y + 0.5, static_cast<double>(zf)};
                    double half[3] = {0.0, 0.0, 0.5};
                    if (tri_box_overlap(center, half, a, b, c)) fg.z_face(zf, y, x) = 1;
                }
    }
}

Dims3 grid_dims_for_bounds(const std::array<float, 3>& lo, const std::array<float, 3>& hi,
                           int largest_dim) {
    double ext[3] = {static_cast<double>(hi[0]) - lo[0], static_cast<double>(hi[1]) - lo[1],
                     static_cast<double>(hi[2]) - lo[2]};
    for (int i = 0; i < 3; ++i) {
        SSG_CHECK(ext[i] > 0.0, invalid_input,
                  "mesh bounding box has zero extent on an axis");
    }
    double emax = std::max({ext[0], ext[1], ext[2]});
    // ext order here is (x, y, z); grid dims are (D, H, W) = (z, y, x).
    auto axis_dim = [&](int i) {
        return std::max<int64_t>(1, round_half_away(ext[i] / emax * largest_dim));
    };
    return {axis_dim(2), axis_dim(1), axis_dim(0)};
}

}  // namespace

VoxelGrid voxelize_mesh_dims(const Mesh& mesh, Dims3 dims) {
    SSG_CHECK(!mesh.empty(), invalid_input, "cannot voxelize an empty mesh");
    SSG_CHECK(dims.d > 0 && dims.h > 0 && dims.w > 0, invalid_input,
              "voxelization dims must be positive");
    std::array<float, 3> lo, hi;
    mesh_bounds(mesh, lo, hi);
    double ext[3];
    for (int i = 0; i < 3; ++i) {
        ext[i] = static_cast<double>(hi[i]) - lo[i];
        SSG_CHECK(ext[i] > 0.0, invalid_input,
                  "mesh bounding box has zero extent on an axis");
    }
    int64_t d = dims.d, h = dims.h, w = dims.w;
    // Mesh-space -> cell-space: the bounding box maps onto [0,W]x[0,H]x[0,D].
    double scale[3] = {static_cast<double>(w) / ext[0], static_cast<double>(h) / ext[1],
                       static_cast<double>(d) / ext[2]};

    FaceGrids fg(d, h, w);
    for (const auto& f : mesh.faces) {
        double tv[3][3];
        for (int k = 0; k < 3; ++k) {
            const auto& v = mesh.vertices[static_cast<size_t>(f[static_cast<size_t>(k)])];
            for (int i = 0; i < 3; ++i) {
                tv[k][i] = (static_cast<double>(v[static_cast<size_t>(i)]) - lo[static_cast<size_t>(i)]) * scale[i];
            }
        }
        rasterize_triangle(fg, tv[0], tv[1], tv[2]);
    }

    // Flood the exterior from the grid boundary through uncut windows.
    std::vector<uint8_t> outside(static_cast<size_t>(d * h * w), 0);
    std::vector<int64_t> stack;
    auto idx = [&](int64_t z, int64_t y, int64_t x) { return (z * h + y) * w + x; };
    auto try_seed = [&](int64_t z, int64_t y, int64_t x, uint8_t blocked) {
        int64_t i = idx(z, y, x);
        if (!blocked && !outside[static_cast<size_t>(i)]) {
            outside[static_cast<size_t>(i)] = 1;
            stack.push_back(i);
        }
    };
    for (int64_t z = 0; z < d; ++z)
        for (int64_t y = 0; y < h; ++y) {
            try_seed(z, y, 0, fg.x_face(z, y, 0));
            try_seed(z, y, w - 1, fg.x_face(z, y, w));
        }
    for (int64_t z = 0; z < d; ++z)
        for (int64_t x = 0; x < w; ++x) {
            try_seed(z, 0, x, fg.y_face(z, 0, x));
            try_seed(z, h - 1, x, fg.y_face(z, h, x));
        }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            try_seed(0, y, x, fg.z_face(0, y, x));
            try_seed(d - 1, y, x, fg.z_face(d, y, x));
        }
    while (!stack.empty()) {
        int64_t i = stack.back();
        stack.pop_back();
        int64_t x = i % w, y = (i / w) % h, z = i / (h * w);
        auto step = [&](int64_t nz, int64_t ny, int64_t nx, uint8_t blocked) {
            int64_t j = idx(nz, ny, nx);
            if (!blocked && !outside[static_cast<size_t>(j)]) {
                outside[static_cast<size_t>(j)] = 1;
                stack.push_back(j);
            }
        };
        if (x > 0) step(z, y, x - 1, fg.x_face(z, y, x));
        if (x < w - 1) step(z, y, x + 1, fg.x_face(z, y, x + 1));
        if (y > 0) step(z, y - 1, x, fg.y_face(z, y, x));
        if (y < h - 1) step(z, y + 1, x, fg.y_face(z, y + 1, x));
        if (z > 0) step(z - 1, y, x, fg.z_face(z, y, x));
        if (z < d - 1) step(z + 1, y, x, fg.z_face(z + 1, y, x));
    }

    VoxelGrid out({d, h, w});
    float* p = out.data.data();
    int64_t n = d * h * w;
    for (int64_t i = 0; i < n; ++i) p[i] = outside[static_cast<size_t>(i)] ? 0.0f : 1.0f;
    return out;
}

VoxelGrid voxelize_mesh(const Mesh& mesh, int largest_dim) {
    SSG_CHECK(!mesh.empty(), invalid_input, "cannot voxelize an empty mesh");
    SSG_CHECK(largest_dim >= 1, invalid_input, "largest_dim must be positive");
    std::array<float, 3> lo, hi;
    mesh_bounds(mesh, lo, hi);
    return voxelize_mesh_dims(mesh, grid_dims_for_bounds(lo, hi, largest_dim));
}

// ---------------------------------------------------------------------------
// Level stack
// ---------------------------------------------------------------------------

namespace {

// Clamp-and-blur tail shared by both source kinds: axes shorter than min_dim
// are resized up first, the blur always runs last.
VoxelGrid finish_level(VoxelGrid level, const PyramidConfig& config) {
    Dims3 dims = level.dims();
    Dims3 clamped = {std::max<int64_t>(dims.d, config.min_dim),
                     std::max<int64_t>(dims.h, config.min_dim),
                     std::max<int64_t>(dims.w, config.min_dim)};
    if (!(clamped == dims)) level = resize_trilinear(level, clamped);
    return gaussian_blur(level, config.blur_sigma);
}

}  // namespace

VoxelPyramid build_pyramid(const VoxelGrid& source, const PyramidConfig& config) {
    config.validate();
    Dims3 src = source.dims();
    SSG_CHECK(src.d >= config.min_dim || src.h >= config.min_dim || src.w >= config.min_dim,
              invalid_input,
              "source grid is smaller than min_dim (" + std::to_string(config.min_dim) +
                  ") on every axis: " + dims_str(src));
    int n = config.num_scales >= 0 ? config.num_scales : choose_num_scales(src, config.r);
    auto dims = pyramid_level_dims(src, config.r, n);
    VoxelPyramid pyr;
    pyr.r = config.r;
    pyr.levels.reserve(dims.size());
    for (const Dims3& target : dims) {
        VoxelGrid level = threshold_grid(box_resample(source, target), 0.5f);
        pyr.levels.push_back(finish_level(std::move(level), config));
    }
    return pyr;
}

VoxelPyramid build_pyramid(const Mesh& source, int largest_dim, const PyramidConfig& config) {
    config.validate();
    SSG_CHECK(!source.empty(), invalid_input, "cannot voxelize an empty mesh");
    SSG_CHECK(largest_dim >= config.min_dim, invalid_input,
              "largest_dim must be at least min_dim (" + std::to_string(config.min_dim) + ")");
    std::array<float, 3> lo, hi;
    mesh_bounds(source, lo, hi);
    Dims3 finest = grid_dims_for_bounds(lo, hi, largest_dim);
    int n = config.num_scales >= 0 ? config.num_scales : choose_num_scales(finest, config.r);
    auto dims = pyramid_level_dims(finest, config.r, n);
    VoxelPyramid pyr;
    pyr.r = config.r;
    pyr.levels.reserve(dims.size());
    for (const Dims3& target : dims) {
        pyr.levels.push_back(finish_level(voxelize_mesh_dims(source, target), config));
    }
    return pyr;
}

// ---------------------------------------------------------------------------
// Grid files
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'S', 'G', 'V'};
constexpr uint8_t kVersion = 1;
constexpr int64_t kHeaderBytes = 4 + 1 + 3 * 4;

void put_u32le(std::string& buf, uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void save_grid(const VoxelGrid& grid, const std::string& path) {
    SSG_CHECK(grid.data.defined() && grid.data.ndim() == 3, invalid_input,
              "cannot save an empty grid");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    SSG_CHECK(f.good(), io_error, "cannot open for writing: " + path);
    std::string header;
    header.append(kMagic, 4);
    header.push_back(static_cast<char>(kVersion));
    put_u32le(header, static_cast<uint32_t>(grid.d()));
    put_u32le(header, static_cast<uint32_t>(grid.h()));
    put_u32le(header, static_cast<uint32_t>(grid.w()));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    if constexpr (std::endian::native == std::endian::little) {
        f.write(reinterpret_cast<const char*>(grid.data.data()),
                static_cast<std::streamsize>(grid.volume() * 4));
    } else {
        std::string payload;
        payload.reserve(static_cast<size_t>(grid.volume()) * 4);
        const float* p = grid.data.data();
        for (int64_t i = 0; i < grid.volume(); ++i) {
            uint32_t bits;
            std::memcpy(&bits, &p[i], 4);
            put_u32le(payload, bits);
        }
        f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
    f.flush();
    SSG_CHECK(f.good(), io_error, "write failed: " + path);
}

VoxelGrid load_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    SSG_CHECK(f.good(), io_error, "cannot open: " + path);
    f.seekg(0, std::ios::end);
    int64_t file_size = static_cast<int64_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    SSG_CHECK(file_size >= kHeaderBytes, format_error,
              "grid file too short for a header: " + path);
    unsigned char header[kHeaderBytes];
    f.read(reinterpret_cast<char*>(header), kHeaderBytes);
    SSG_CHECK(f.good(), io_error, "read failed: " + path);
    SSG_CHECK(std::memcmp(header, kMagic, 4) == 0, format_error,
              "not a grid file (bad magic): " + path);
    SSG_CHECK(header[4] == kVersion, format_error,
              "unsupported grid file version " + std::to_string(header[4]) + ": " + path);
    uint32_t d = get_u32le(header + 5);
    uint32_t h = get_u32le(header + 9);
    uint32_t w = get_u32le(header + 13);
    SSG_CHECK(d > 0 && h > 0 && w > 0, format_error,
              "grid file declares a zero dimension: " + path);
    uint64_t count = static_cast<uint64_t>(d) * h * w;
    uint64_t expected = static_cast<uint64_t>(kHeaderBytes) + count * 4;
    SSG_CHECK(static_cast<uint64_t>(file_size) == expected, format_error,
              "grid file size mismatch (header says " + std::to_string(expected) +
                  " bytes, file has " + std::to_string(file_size) + "): " + path);
    VoxelGrid out({static_cast<int64_t>(d), static_cast<int64_t>(h), static_cast<int64_t>(w)});
    f.read(reinterpret_cast<char*>(out.data.data()),
           static_cast<std::streamsize>(count * 4));
    SSG_CHECK(f.good(), io_error, "read failed: " + path);
    if constexpr (std::endian::native != std::endian::little) {
        float* p = out.data.data();
        for (uint64_t i = 0; i < count; ++i) {
            uint32_t bits;
            std::memcpy(&bits, &p[i], 4);
            bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) |
                   (bits >> 24);
            std::memcpy(&p[i], &bits, 4);
        }
    }
    const float* p = out.data.data();
    for (uint64_t i = 0; i < count; ++i) {
        SSG_CHECK(p[i] >= 0.0f && p[i] <= 1.0f, format_error,
                  "grid file value outside [0,1] at index " + std::to_string(i) + ": " + path);
    }
    return out;
}

}  // namespace ssg
