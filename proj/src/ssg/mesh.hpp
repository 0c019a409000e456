#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxgrid.hpp"

namespace ssg {

// Indexed triangle mesh. Vertices are arbitrary world coordinates; faces are
// 0-based vertex index triples.
struct Mesh {
    std::vector<std::array<float, 3>> vertices;
    std::vector<std::array<int, 3>> faces;

    bool empty() const { return vertices.empty() || faces.empty(); }
};

// Wavefront OBJ input. Reads `v` and `f` records; polygonal faces are
// fan-triangulated, negative indices resolved relative to the current vertex
// count. Texture/normal references (`f v/vt/vn`) are accepted and ignored.
Mesh load_obj(const std::string& path);

// Writes vertices and triangles with 1-based indices.
void save_obj(const Mesh& mesh, const std::string& path);

// Axis-aligned bounding box; throws invalid_input on an empty mesh.
void mesh_bounds(const Mesh& mesh, std::array<float, 3>& lo, std::array<float, 3>& hi);

// Marching cubes over cell-center samples at the given iso level. Vertices
// come out in normalized [0,1]^3 coordinates (the grid's bounding box);
// coincident vertices are welded at 1e-7 tolerance. A constant field yields
// an empty mesh.
Mesh extract_mesh(const VoxelGrid& grid, float iso = 0.5f);

// Uniform-weight Laplacian smoothing: v <- v + lambda * (mean(1-ring) - v),
// repeated `iterations` times. Connectivity and counts are unchanged;
// isolated vertices stay put.
Mesh laplacian_smooth(const Mesh& mesh, int iterations = 5, float lambda = 0.5f);

struct ModelStack;

// Decode the model's reconstruction field at `multiplier` times the finest
// training resolution. multiplier=1 matches the standard decode bit-exactly;
// larger values query the same continuous field on a denser lattice.
VoxelGrid query_highres(const ModelStack& stack, int multiplier);

// Cell-center trilinear resize of an occupancy grid to `multiplier` times its
// extents (the fixed-function comparison baseline for query_highres).
VoxelGrid trilinear_upsample(const VoxelGrid& grid, int multiplier);

}  // namespace ssg
