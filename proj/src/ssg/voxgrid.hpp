#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "tensor.hpp"

namespace ssg {

struct Mesh;

// Dense scalar occupancy field. `data` has shape {D, H, W}, row-major with W
// fastest, every value in [0, 1]. Copying shares storage (Tensor semantics);
// use clone() for an independent buffer.
struct VoxelGrid {
    Tensor data;

    VoxelGrid() = default;
    explicit VoxelGrid(Dims3 dims) : data(Tensor::zeros({dims.d, dims.h, dims.w})) {}
    explicit VoxelGrid(Tensor t);

    Dims3 dims() const {
        return {data.shape()[0], data.shape()[1], data.shape()[2]};
    }
    int64_t d() const { return data.shape()[0]; }
    int64_t h() const { return data.shape()[1]; }
    int64_t w() const { return data.shape()[2]; }
    int64_t volume() const { return data.numel(); }

    float at(int64_t z, int64_t y, int64_t x) const {
        return data.data()[(z * h() + y) * w() + x];
    }
    float& at(int64_t z, int64_t y, int64_t x) {
        return data.data()[(z * h() + y) * w() + x];
    }

    VoxelGrid clone() const;

    // Fraction of cells with value > 0.5.
    double occupied_fraction() const;
};

struct PyramidConfig {
    double r = 0.75;       // per-level scale factor, in (0, 1)
    int min_dim = 15;      // every axis of every level is at least this
    double blur_sigma = 0.5;  // per-level Gaussian blur, in voxels
    int num_scales = -1;   // N; -1 resolves via choose_num_scales

    void validate() const;  // throws config_error on a bad field
};

// Multi-resolution stack, coarse -> fine, N+1 levels.
struct VoxelPyramid {
    std::vector<VoxelGrid> levels;
    double r = 0.75;

    int num_scales() const { return static_cast<int>(levels.size()) - 1; }
    const VoxelGrid& finest() const { return levels.back(); }
    const VoxelGrid& coarsest() const { return levels.front(); }
};

// Largest N such that round(max(finest_dims) * r^N) >= 22. Requires
// max(finest_dims) >= 22.
int choose_num_scales(Dims3 finest_dims, double r);

// Per-level target sizes before the min-dim clamp: level i of N+1 gets
// round(s_axis * r^(N-i)) on each axis (round half away from zero), floored
// at 1. Coarse -> fine.
std::vector<Dims3> pyramid_level_dims(Dims3 finest_dims, double r, int num_scales);

// Separable Gaussian, kernel truncated at 4*sigma and renormalized, zero
// padding at the borders. sigma = 0 returns the input unchanged.
VoxelGrid gaussian_blur(const VoxelGrid& grid, double sigma);

// Area-weighted box-filter resample to `target` (each output cell averages
// the input cells its footprint covers, partial cells weighted by overlap).
VoxelGrid box_resample(const VoxelGrid& grid, Dims3 target);

// Cell-center trilinear resample to `target`.
VoxelGrid resize_trilinear(const VoxelGrid& grid, Dims3 target);

// Binarize: value >= threshold -> 1, else 0.
VoxelGrid threshold_grid(const VoxelGrid& grid, float threshold = 0.5f);

// Solid voxelization. The mesh bounding box maps onto the grid; the largest
// box axis gets `largest_dim` cells and the other axes preserve the aspect
// ratio (rounded, floored at 1). Occupancy rule: the surface is rasterized
// onto the lattice of center-to-center segments (a move between neighbour
// cells is blocked when a triangle cuts the segment joining their centers),
// the exterior is flood filled from the grid boundary through unblocked
// moves, and every cell the flood cannot reach is occupied. For closed
// surfaces this makes the occupied set follow cell-center parity, so the
// voxel volume tracks the mesh volume; features thinner than a cell may be
// lost, and openings wider than a cell leak, by design.
VoxelGrid voxelize_mesh(const Mesh& mesh, int largest_dim);

// Same rule at explicit per-axis resolution (the box maps axis-to-axis, so
// aspect may be distorted intentionally, e.g. by a min-dim clamp).
VoxelGrid voxelize_mesh_dims(const Mesh& mesh, Dims3 dims);

// Build the level stack from a binary/probability grid: each level is
// box-resampled from the source and thresholded at 0.5, axes shorter than
// min_dim are then resized up to min_dim (trilinear), and the level is
// blurred last. Throws invalid_input when every source axis is below
// min_dim.
VoxelPyramid build_pyramid(const VoxelGrid& source, const PyramidConfig& config);

// Build the level stack from a mesh: every level is voxelized independently
// at its own (clamped) resolution, then blurred. `largest_dim` fixes the
// finest level's largest axis.
VoxelPyramid build_pyramid(const Mesh& source, int largest_dim, const PyramidConfig& config);

// Grid files: "SSGV" magic, version byte 1, three little-endian uint32 dims
// (D, H, W), then D*H*W little-endian float32 in row-major order. Loading is
// bit-exact; a bad header, short payload, or trailing bytes is a format
// error.
void save_grid(const VoxelGrid& grid, const std::string& path);
VoxelGrid load_grid(const std::string& path);

}  // namespace ssg
