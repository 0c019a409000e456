#include "mesh.hpp"

#include "kernels.hpp"
#include "sampler.hpp"
#include "train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace ssg {

// ---------------------------------------------------------------------------
// OBJ
// ---------------------------------------------------------------------------

Mesh load_obj(const std::string& path) {
    std::ifstream f(path);
    SSG_CHECK(f.good(), io_error, "cannot open: " + path);
    Mesh mesh;
    std::string line;
    int lineno = 0;
    auto parse_index = [&](const std::string& tok) {
        // "v", "v/vt", "v//vn", "v/vt/vn" — only the vertex index matters.
        size_t slash = tok.find('/');
        std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        long idx = 0;
        try {
            idx = std::stol(head);
        } catch (const std::exception&) {
            fail(ErrorCode::format_error,
                 path + ":" + std::to_string(lineno) + ": bad face index '" + tok + "'");
        }
        long n = static_cast<long>(mesh.vertices.size());
        long resolved = idx < 0 ? n + idx : idx - 1;
        SSG_CHECK(resolved >= 0 && resolved < n, format_error,
                  path + ":" + std::to_string(lineno) + ": face index out of range");
        return static_cast<int>(resolved);
    };
    while (std::getline(f, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "v") {
            float x, y, z;
            SSG_CHECK(static_cast<bool>(ss >> x >> y >> z), format_error,
                      path + ":" + std::to_string(lineno) + ": bad vertex record");
            mesh.vertices.push_back({x, y, z});
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ss >> tok) poly.push_back(parse_index(tok));
            SSG_CHECK(poly.size() >= 3, format_error,
                      path + ":" + std::to_string(lineno) + ": face needs at least 3 vertices");
            for (size_t k = 1; k + 1 < poly.size(); ++k) {
                mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
            }
        }
        // Everything else (vn, vt, o, g, s, usemtl, comments) is ignored.
    }
    return mesh;
}

void save_obj(const Mesh& mesh, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    SSG_CHECK(f.good(), io_error, "cannot open for writing: " + path);
    char buf[128];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", static_cast<double>(v[0]),
                      static_cast<double>(v[1]), static_cast<double>(v[2]));
        f << buf;
    }
    for (const auto& face : mesh.faces) {
        f << "f " << face[0] + 1 << ' ' << face[1] + 1 << ' ' << face[2] + 1 << '\n';
    }
    f.flush();
    SSG_CHECK(f.good(), io_error, "write failed: " + path);
}

void mesh_bounds(const Mesh& mesh, std::array<float, 3>& lo, std::array<float, 3>& hi) {
    SSG_CHECK(!mesh.vertices.empty(), invalid_input, "mesh has no vertices");
    lo = hi = mesh.vertices[0];
    for (const auto& v : mesh.vertices) {
        for (int i = 0; i < 3; ++i) {
            lo[static_cast<size_t>(i)] = std::min(lo[static_cast<size_t>(i)], v[static_cast<size_t>(i)]);
            hi[static_cast<size_t>(i)] = std::max(hi[static_cast<size_t>(i)], v[static_cast<size_t>(i)]);
        }
    }
}

// ---------------------------------------------------------------------------
// Marching cubes
// ---------------------------------------------------------------------------
//
// The per-configuration triangulation is generated once at startup instead of
// being transcribed from a reference table. Each cube face contributes
// directed contour segments between its sign-change edges; an ambiguous face
// (diagonal inside corners) is always resolved by cutting both inside corners
// off, a rule that depends only on the face's own corner signs, so the two
// cubes sharing a face always agree and the global surface is watertight.
// Within a cube every crossed edge gets exactly one incoming and one outgoing
// segment, so the segments close into cycles; fans over those cycles are the
// emitted triangles.

namespace {

// Corner i sits at (x, y, z) = (i&1, i>>1&1, i>>2&1).
constexpr int kEdgeCorner[12][2] = {
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // x-aligned
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // y-aligned
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // z-aligned
};

// Each face: 4 corners in CCW order viewed from outside the cube, and the
// cube edge between consecutive corners (edge k joins corner k and k+1 mod 4).
struct FaceDef {
    int corner[4];
    int edge[4];
};
constexpr FaceDef kFaces[6] = {
    {{0, 4, 6, 2}, {8, 6, 10, 4}},   // x = 0
    {{1, 3, 7, 5}, {5, 11, 7, 9}},   // x = 1
    {{0, 1, 5, 4}, {0, 9, 2, 8}},    // y = 0
    {{2, 6, 7, 3}, {10, 3, 11, 1}},  // y = 1
    {{0, 2, 3, 1}, {4, 1, 5, 0}},    // z = 0
    {{4, 5, 7, 6}, {2, 7, 3, 6}},    // z = 1
};

struct McTable {
    // cycles[config]: lists of cube-edge indices, each a closed contour loop.
    std::array<std::vector<std::vector<int>>, 256> cycles;
};

McTable build_mc_table() {
    McTable table;
    for (int config = 0; config < 256; ++config) {
        int next[12];
        std::fill(next, next + 12, -1);
        for (const FaceDef& face : kFaces) {
            bool inside[4];
            for (int k = 0; k < 4; ++k) inside[k] = (config >> face.corner[k]) & 1;
            for (int k = 0; k < 4; ++k) {
                // A CCW transition inside->outside exits the solid across
                // edge k. It pairs with the crossing that enters the same run
                // of inside corners: walk backwards to the run's start. On an
                // ambiguous face (diagonal inside corners) every run is a
                // single corner, so each inside corner is cut off on its own.
                if (!(inside[k] && !inside[(k + 1) % 4])) continue;
                int m = k;
                while (inside[(m + 3) % 4]) m = (m + 3) % 4;
                next[face.edge[k]] = face.edge[(m + 3) % 4];
            }
        }
        // Trace the directed cycles.
        bool used[12] = {};
        for (int e = 0; e < 12; ++e) {
            if (next[e] < 0 || used[e]) continue;
            std::vector<int> cycle;
            int cur = e;
            while (!used[cur]) {
                used[cur] = true;
                cycle.push_back(cur);
                cur = next[cur];
            }
            table.cycles[static_cast<size_t>(config)].push_back(std::move(cycle));
        }
    }
    return table;
}

const McTable& mc_table() {
    static const McTable table = build_mc_table();
    return table;
}

}  // namespace

Mesh extract_mesh(const VoxelGrid& grid, float iso) {
    Dims3 dims = grid.dims();
    SSG_CHECK(dims.d >= 2 && dims.h >= 2 && dims.w >= 2, invalid_input,
              "marching cubes needs at least 2 samples per axis, got " + dims_str(dims));
    const McTable& table = mc_table();
    int64_t d = dims.d, h = dims.h, w = dims.w;
    const float* g = grid.data.data();
    auto sample = [&](int64_t z, int64_t y, int64_t x) { return g[(z * h + y) * w + x]; };

    Mesh mesh;
    std::unordered_map<uint64_t, std::vector<std::pair<std::array<int64_t, 3>, int>>> weld;
    auto weld_vertex = [&](float px, float py, float pz) {
        std::array<int64_t, 3> key = {std::llround(static_cast<double>(px) * 1e7),
                                      std::llround(static_cast<double>(py) * 1e7),
                                      std::llround(static_cast<double>(pz) * 1e7)};
        uint64_t hval = 1469598103934665603ull;
        for (int64_t kv : key) {
            hval ^= static_cast<uint64_t>(kv);
            hval *= 1099511628211ull;
        }
        auto& bucket = weld[hval];
        for (const auto& [bk, bi] : bucket) {
            if (bk == key) return bi;
        }
        int idx = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back({px, py, pz});
        bucket.push_back({key, idx});
        return idx;
    };

    float fd = static_cast<float>(d), fh = static_cast<float>(h), fw = static_cast<float>(w);
    for (int64_t z = 0; z + 1 < d; ++z) {
        for (int64_t y = 0; y + 1 < h; ++y) {
            for (int64_t x = 0; x + 1 < w; ++x) {
                float corner[8];
                int config = 0;
                for (int c = 0; c < 8; ++c) {
                    corner[c] = sample(z + ((c >> 2) & 1), y + ((c >> 1) & 1), x + (c & 1));
                    if (corner[c] >= iso) config |= 1 << c;
                }
                if (config == 0 || config == 255) continue;
                // Vertices on crossed edges; cycles are emitted reversed so
                // normals point out of the solid (field >= iso). A triangle
                // covers a 3-cycle directly; longer cycles get a cube-local
                // centroid vertex. The centroid is deliberately NOT welded:
                // interior edges then always end at a vertex no other cube
                // references, so neighbouring cubes can never produce the
                // same interior edge twice (chords between vertices on a
                // shared face plane otherwise can collide).
                for (const auto& cycle : table.cycles[static_cast<size_t>(config)]) {
                    size_t len = cycle.size();
                    std::vector<int> vidx(len);
                    std::vector<std::array<float, 3>> vpos(len);
                    for (size_t k = 0; k < len; ++k) {
                        int e = cycle[k];
                        int c0 = kEdgeCorner[e][0], c1 = kEdgeCorner[e][1];
                        float f0 = corner[c0], f1 = corner[c1];
                        // Clamp keeps iso-exact samples from collapsing two
                        // cycle vertices onto one welded corner point.
                        float t = std::clamp((iso - f0) / (f1 - f0), 1e-4f, 1.0f - 1e-4f);
                        float ox = static_cast<float>(c0 & 1);
                        float oy = static_cast<float>((c0 >> 1) & 1);
                        float oz = static_cast<float>((c0 >> 2) & 1);
                        float ex = static_cast<float>(c1 & 1) - ox;
                        float ey = static_cast<float>((c1 >> 1) & 1) - oy;
                        float ez = static_cast<float>((c1 >> 2) & 1) - oz;
                        float px = (static_cast<float>(x) + ox + t * ex + 0.5f) / fw;
                        float py = (static_cast<float>(y) + oy + t * ey + 0.5f) / fh;
                        float pz = (static_cast<float>(z) + oz + t * ez + 0.5f) / fd;
                        vpos[k] = {px, py, pz};
                        vidx[k] = weld_vertex(px, py, pz);
                    }
                    if (len == 3) {
                        int a = vidx[0], b = vidx[2], c = vidx[1];
                        if (a != b && b != c && a != c) mesh.faces.push_back({a, b, c});
                        continue;
                    }
                    double cx = 0, cy = 0, cz = 0;
                    for (const auto& p : vpos) {
                        cx += p[0];
                        cy += p[1];
                        cz += p[2];
                    }
                    int cv = static_cast<int>(mesh.vertices.size());
                    mesh.vertices.push_back({static_cast<float>(cx / static_cast<double>(len)),
                                             static_cast<float>(cy / static_cast<double>(len)),
                                             static_cast<float>(cz / static_cast<double>(len))});
                    for (size_t k = 0; k < len; ++k) {
                        int a = vidx[(k + 1) % len], b = vidx[k];
                        // Dropping a degenerate wedge removes the edges
                        // cv->a and b->cv together, so balance survives.
                        if (a == b) continue;
                        mesh.faces.push_back({cv, a, b});
                    }
                }
            }
        }
    }
    return mesh;
}

Mesh laplacian_smooth(const Mesh& mesh, int iterations, float lambda) {
    SSG_CHECK(iterations >= 0, invalid_input, "iterations must be >= 0");
    Mesh out = mesh;
    if (iterations == 0 || mesh.vertices.empty()) return out;
    size_t n = mesh.vertices.size();
    // 1-ring neighbours, deduplicated.
    std::vector<std::vector<int>> ring(n);
    auto link = [&](int a, int b) {
        auto& r = ring[static_cast<size_t>(a)];
        if (std::find(r.begin(), r.end(), b) == r.end()) r.push_back(b);
    };
    for (const auto& f : mesh.faces) {
        link(f[0], f[1]);
        link(f[1], f[0]);
        link(f[1], f[2]);
        link(f[2], f[1]);
        link(f[2], f[0]);
        link(f[0], f[2]);
    }
    std::vector<std::array<float, 3>> cur = mesh.vertices, nxt(n);
    for (int it = 0; it < iterations; ++it) {
        for (size_t i = 0; i < n; ++i) {
            const auto& r = ring[i];
            if (r.empty()) {
                nxt[i] = cur[i];
                continue;
            }
            double mx = 0, my = 0, mz = 0;
            for (int j : r) {
                mx += cur[static_cast<size_t>(j)][0];
                my += cur[static_cast<size_t>(j)][1];
                mz += cur[static_cast<size_t>(j)][2];
            }
            double inv = 1.0 / static_cast<double>(r.size());
            nxt[i][0] = cur[i][0] + lambda * static_cast<float>(mx * inv - cur[i][0]);
            nxt[i][1] = cur[i][1] + lambda * static_cast<float>(my * inv - cur[i][1]);
            nxt[i][2] = cur[i][2] + lambda * static_cast<float>(mz * inv - cur[i][2]);
        }
        std::swap(cur, nxt);
    }
    out.vertices = cur;
    return out;
}

VoxelGrid query_highres(const ModelStack& stack, int multiplier) {
    SSG_CHECK(multiplier >= 1, invalid_input,
              "query_highres multiplier must be at least 1");
    const Dims3 base = stack.level_dims.empty() ? Dims3{0, 0, 0} : stack.level_dims.back();
    return reconstruct(stack, {base.d * multiplier, base.h * multiplier, base.w * multiplier});
}

VoxelGrid trilinear_upsample(const VoxelGrid& grid, int multiplier) {
    SSG_CHECK(multiplier >= 1, invalid_input,
              "trilinear_upsample multiplier must be at least 1");
    if (multiplier == 1) return grid.clone();
    VoxelGrid out({grid.d() * multiplier, grid.h() * multiplier, grid.w() * multiplier});
    kernels::resize_grid_trilinear(grid.data.data(), int(grid.d()), int(grid.h()), int(grid.w()),
                                   out.data.data(), int(out.d()), int(out.h()), int(out.w()));
    return out;
}

}  // namespace ssg
