#pragma once

// Quantitative evaluation of generated shapes against the training exemplar:
// local-patch match scores (LP-IoU / LP-F), pairwise diversity, a Fréchet
// distance over deep-feature statistics (SSFID), and a spatial variation map
// for visual inspection. Everything is a pure function of its inputs.

#include <cstdint>
#include <string>
#include <vector>

#include "ssg/common.hpp"
#include "ssg/tensor.hpp"
#include "ssg/voxgrid.hpp"

namespace ssg {

// Every `size`-cubed window of a binarized grid at a fixed stride, filtered
// to the "valid" ones whose central 3x3x3 holds at least one occupied and
// one unoccupied voxel. Patches are bit-packed for fast set arithmetic.
struct PatchSet {
  int64_t size = 11;
  int64_t words_per_patch = 21;    // ceil(size^3 / 64)
  int64_t candidates = 0;          // windows inspected before the validity filter
  std::vector<Dims3> positions;    // origins of the retained (valid) windows
  std::vector<uint64_t> bits;      // packed voxels, positions.size() * words_per_patch

  int64_t count() const { return static_cast<int64_t>(positions.size()); }
  const uint64_t* patch(int64_t i) const { return bits.data() + i * words_per_patch; }
};

// Collect all strided windows. The grid is thresholded at > 0.5 first; its
// dims must each cover one window.
PatchSet sample_patches(const VoxelGrid& grid, int64_t size = 11, int64_t stride = 5);

// Uniform subsample without replacement down to `max_count` patches (the
// LP protocol evaluates at most 1000 generated patches). Sets at or under
// the budget come back unchanged.
PatchSet subsample_patches(const PatchSet& set, int64_t max_count, uint64_t seed);

enum class PatchScore { iou, f_score };

// Intersection-over-union of two occupancy grids (thresholded at > 0.5);
// two empty grids score 1.
double iou(const VoxelGrid& a, const VoxelGrid& b);

// Voxel-wise F-score of `pred` against `truth` (thresholded at > 0.5):
// harmonic mean of precision and recall, 1 when both are empty.
double f_score(const VoxelGrid& truth, const VoxelGrid& pred);

// Fraction of generated patches whose best score against any real patch
// strictly exceeds `delta`.
double lp_score(const PatchSet& real, const PatchSet& gen, PatchScore score,
                double delta = 0.95);

// Mean over ordered pairs i != j of 1 - IoU(S_i, S_j); needs >= 2 shapes of
// equal dims.
double diversity(const std::vector<VoxelGrid>& shapes);

// Fréchet distance between two Gaussians: |mu1-mu2|^2 + Tr(C1 + C2 -
// 2(C1 C2)^(1/2)). Covariances are symmetrized first and eigenvalues clamp
// at zero, so slightly-indefinite estimates are accepted. mu {n}, cov {n,n}.
double frechet_distance(const Tensor& mu1, const Tensor& cov1, const Tensor& mu2,
                        const Tensor& cov2);

// Two 3x3x3 conv + ReLU + 2x max-pool blocks: a voxel grid in, a feature
// volume {64, D/4, H/4, W/4} out. The real weights come from an external
// artifact (a pretrained shape classifier's first two blocks); the seeded
// variant below exists so the pipeline runs without that file.
struct FeatureExtractor {
  Tensor w1, b1;  // {c1, 1, 3, 3, 3}, {c1}
  Tensor w2, b2;  // {64, c1, 3, 3, 3}, {64}
};

// Deterministic random-weight extractor. Its absolute SSFID numbers are not
// comparable with published figures; orderings still behave sensibly.
FeatureExtractor make_seeded_extractor(uint64_t seed);

// Run the extractor; the grid is thresholded at > 0.5 first and every axis
// must be at least 4.
Tensor extract_features(const FeatureExtractor& ex, const VoxelGrid& grid);

// Mean and unbiased covariance of a feature volume's per-location columns:
// features {C, ...spatial}, mu {C}, cov {C, C}. Needs >= 2 locations.
void feature_moments(const Tensor& features, Tensor& mu, Tensor& cov);

// Single-shape Fréchet distance: Gaussians fitted to the real and each
// generated shape's feature columns, Fréchet per pair, mean over the set.
double ssfid(const VoxelGrid& real, const std::vector<VoxelGrid>& generated,
             const FeatureExtractor& ex);

// Per-voxel standard deviation (unbiased) over the set, averaged along the
// third axis: a {D, H} map of where the set varies.
Tensor spatial_variation_map(const std::vector<VoxelGrid>& shapes);

// 8-bit binary PGM (P5), values scaled so the map's maximum lands at 255.
void save_pgm(const Tensor& map, const std::string& path);

}  // namespace ssg
