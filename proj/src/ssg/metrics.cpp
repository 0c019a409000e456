#include "ssg/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ssg/kernels.hpp"
#include "ssg/rng.hpp"

namespace ssg {

namespace {

constexpr float kOccupied = 0.5f;  // strict > threshold, as occupied_fraction uses

int64_t popcount_words(const uint64_t* w, int64_t n) {
  int64_t c = 0;
  for (int64_t i = 0; i < n; ++i) c += std::popcount(w[i]);
  return c;
}

// Patch-level scores on the packed representation.
double patch_iou(const uint64_t* a, const uint64_t* b, int64_t words) {
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < words; ++i) {
    inter += std::popcount(a[i] & b[i]);
    uni += std::popcount(a[i] | b[i]);
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

double patch_f(const uint64_t* a, const uint64_t* b, int64_t words) {
  int64_t inter = 0, na = 0, nb = 0;
  for (int64_t i = 0; i < words; ++i) {
    inter += std::popcount(a[i] & b[i]);
    na += std::popcount(a[i]);
    nb += std::popcount(b[i]);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * double(inter) / double(na + nb);  // harmonic mean of P and R
}

Eigen::MatrixXd to_matrix(const Tensor& t, int64_t n) {
  Eigen::MatrixXd m(n, n);
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < n; ++c) m(r, c) = double(t.data()[r * n + c]);
  return (m + m.transpose()) / 2.0;  // symmetrize before any decomposition
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

// 2x non-overlapping max pool per axis, floor semantics on odd extents.
Tensor maxpool2(const Tensor& x) {
  const int64_t c = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t od = d / 2, oh = h / 2, ow = w / 2;
  Tensor y({c, od, oh, ow});
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* src = x.data() + ch * d * h * w;
    float* dst = y.data() + ch * od * oh * ow;
    for (int64_t z = 0; z < od; ++z)
      for (int64_t r = 0; r < oh; ++r)
        for (int64_t q = 0; q < ow; ++q) {
          float best = -1e30f;
          for (int64_t dz = 0; dz < 2; ++dz)
            for (int64_t dy = 0; dy < 2; ++dy)
              for (int64_t dx = 0; dx < 2; ++dx) {
                const float v = src[((2 * z + dz) * h + 2 * r + dy) * w + 2 * q + dx];
                best = std::max(best, v);
              }
          dst[(z * oh + r) * ow + q] = best;
        }
  }
  return y;
}

Tensor conv_relu_pool(const Tensor& x, const Tensor& wt, const Tensor& bias) {
  const int64_t ci = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t co = wt.dim(0);
  Tensor y({co, d, h, w});
  kernels::conv3d_forward(x.data(), int(ci), int(d), int(h), int(w), wt.data(), int(co), 3, 3, 3,
                          /*stride=*/1, /*pad=*/1, bias.data(), y.data(), int(d), int(h), int(w));
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = std::max(0.0f, y.data()[i]);
  return maxpool2(y);
}

}  // namespace

PatchSet sample_patches(const VoxelGrid& grid, int64_t size, int64_t stride) {
  SSG_CHECK(size >= 3, invalid_input, "patch size must be at least 3");
  SSG_CHECK(stride >= 1, invalid_input, "stride must be at least 1");
  const Dims3 dm = grid.dims();
  SSG_CHECK(dm.d >= size && dm.h >= size && dm.w >= size, invalid_input,
            "grid must cover at least one patch window per axis");

  PatchSet set;
  set.size = size;
  set.words_per_patch = (size * size * size + 63) / 64;
  const int64_t c_lo = size / 2 - 1, c_hi = size / 2 + 1;  // central 3x3x3

  std::vector<uint64_t> packed(size_t(set.words_per_patch));
  for (int64_t z = 0; z + size <= dm.d; z += stride)
    for (int64_t y = 0; y + size <= dm.h; y += stride)
      for (int64_t x = 0; x + size <= dm.w; x += stride) {
        set.candidates += 1;
        std::fill(packed.begin(), packed.end(), 0u);
        bool center_occ = false, center_free = false;
        int64_t bit = 0;
        for (int64_t pz = 0; pz < size; ++pz)
          for (int64_t py = 0; py < size; ++py)
            for (int64_t px = 0; px < size; ++px, ++bit) {
              const bool occ = grid.at(z + pz, y + py, x + px) > kOccupied;
              if (occ) packed[size_t(bit >> 6)] |= uint64_t(1) << (bit & 63);
              if (pz >= c_lo && pz <= c_hi && py >= c_lo && py <= c_hi && px >= c_lo &&
                  px <= c_hi) {
                (occ ? center_occ : center_free) = true;
              }
            }
        if (center_occ && center_free) {
          set.positions.push_back({z, y, x});
          set.bits.insert(set.bits.end(), packed.begin(), packed.end());
        }
      }
  return set;
}

PatchSet subsample_patches(const PatchSet& set, int64_t max_count, uint64_t seed) {
  SSG_CHECK(max_count >= 1, invalid_input, "subsample budget must be at least 1");
  if (set.count() <= max_count) return set;

  std::vector<int64_t> idx(size_t(set.count()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int64_t i = 0; i < max_count; ++i) {  // partial Fisher-Yates
    const int64_t j = i + int64_t(rng.next_u64() % uint64_t(idx.size() - size_t(i)));
    std::swap(idx[size_t(i)], idx[size_t(j)]);
  }
  idx.resize(size_t(max_count));
  std::sort(idx.begin(), idx.end());  // keep the original ordering

  PatchSet out;
  out.size = set.size;
  out.words_per_patch = set.words_per_patch;
  out.candidates = set.candidates;
  out.positions.reserve(idx.size());
  out.bits.reserve(idx.size() * size_t(set.words_per_patch));
  for (int64_t i : idx) {
    out.positions.push_back(set.positions[size_t(i)]);
    const uint64_t* p = set.patch(i);
    out.bits.insert(out.bits.end(), p, p + set.words_per_patch);
  }
  return out;
}

double iou(const VoxelGrid& a, const VoxelGrid& b) {
  SSG_CHECK(a.dims() == b.dims(), invalid_input, "iou needs grids of equal dims");
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < a.volume(); ++i) {
    const bool oa = a.data.data()[i] > kOccupied;
    const bool ob = b.data.data()[i] > kOccupied;
    inter += oa && ob;
    uni += oa || ob;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

double f_score(const VoxelGrid& truth, const VoxelGrid& pred) {
  SSG_CHECK(truth.dims() == pred.dims(), invalid_input, "f_score needs grids of equal dims");
  int64_t tp = 0, nt = 0, np = 0;
  for (int64_t i = 0; i < truth.volume(); ++i) {
    const bool ot = truth.data.data()[i] > kOccupied;
    const bool op = pred.data.data()[i] > kOccupied;
    tp += ot && op;
    nt += ot;
    np += op;
  }
  if (nt + np == 0) return 1.0;
  return 2.0 * double(tp) / double(nt + np);
}

double lp_score(const PatchSet& real, const PatchSet& gen, PatchScore score, double delta) {
  SSG_CHECK(real.count() > 0, invalid_input, "no valid real patches");
  SSG_CHECK(gen.count() > 0, invalid_input, "no valid generated patches");
  SSG_CHECK(real.size == gen.size, invalid_input, "patch sizes differ");

  const int64_t words = real.words_per_patch;
  int64_t matched = 0;
  for (int64_t g = 0; g < gen.count(); ++g) {
    const uint64_t* pg = gen.patch(g);
    for (int64_t r = 0; r < real.count(); ++r) {
      const double s = score == PatchScore::iou ? patch_iou(pg, real.patch(r), words)
                                                : patch_f(pg, real.patch(r), words);
      if (s > delta) {
        matched += 1;
        break;
      }
    }
  }
  return double(matched) / double(gen.count());
}

double diversity(const std::vector<VoxelGrid>& shapes) {
  SSG_CHECK(shapes.size() >= 2, invalid_input, "diversity needs at least two shapes");
  const size_t k = shapes.size();
  double acc = 0;
  for (size_t i = 0; i < k; ++i)
    for (size_t j = i + 1; j < k; ++j) acc += 1.0 - iou(shapes[i], shapes[j]);
  return acc / (double(k) * double(k - 1) / 2.0);  // ordered-pair mean == unordered mean
}

double frechet_distance(const Tensor& mu1, const Tensor& cov1, const Tensor& mu2,
                        const Tensor& cov2) {
  SSG_CHECK(mu1.ndim() == 1 && mu2.ndim() == 1 && mu1.numel() == mu2.numel(), invalid_input,
            "means must be equal-length vectors");
  const int64_t n = mu1.numel();
  SSG_CHECK(cov1.ndim() == 2 && cov1.dim(0) == n && cov1.dim(1) == n && cov2.ndim() == 2 &&
                cov2.dim(0) == n && cov2.dim(1) == n,
            invalid_input, "covariances must be {n,n} matching the means");
  for (const Tensor* t : {&mu1, &cov1, &mu2, &cov2})
    for (int64_t i = 0; i < t->numel(); ++i)
      SSG_CHECK(std::isfinite(t->data()[i]), invalid_input, "non-finite moment input");

  const Eigen::MatrixXd c1 = to_matrix(cov1, n);
  const Eigen::MatrixXd c2 = to_matrix(cov2, n);
  double mu_term = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = double(mu1.data()[i]) - double(mu2.data()[i]);
    mu_term += d * d;
  }

  // Tr((C1 C2)^(1/2)) = Tr((A C1 A)^(1/2)) with A = C2^(1/2): the sandwich is
  // symmetric PSD, so a self-adjoint decomposition suffices.
  const Eigen::MatrixXd a = sqrt_psd(c2);
  Eigen::MatrixXd inner = a * c1 * a;
  inner = (inner + inner.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double d2 = mu_term + c1.trace() + c2.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d2);
}

FeatureExtractor make_seeded_extractor(uint64_t seed) {
  Rng rng(seed);
  FeatureExtractor ex;
  ex.w1 = Tensor({32, 1, 3, 3, 3});
  ex.b1 = Tensor::zeros({32});
  ex.w2 = Tensor({64, 32, 3, 3, 3});
  ex.b2 = Tensor::zeros({64});
  rng.fill_normal(ex.w1.data(), ex.w1.numel(), 0.3f);
  rng.fill_normal(ex.w2.data(), ex.w2.numel(), 0.1f);
  // Small positive biases keep a healthy fraction of units past the ReLU.
  rng.fill_uniform(ex.b1.data(), ex.b1.numel(), 0.0f, 0.05f);
  rng.fill_uniform(ex.b2.data(), ex.b2.numel(), 0.0f, 0.05f);
  return ex;
}

Tensor extract_features(const FeatureExtractor& ex, const VoxelGrid& grid) {
  SSG_CHECK(ex.w1.ndim() == 5 && ex.w1.dim(1) == 1 && ex.w2.ndim() == 5 &&
                ex.w2.dim(1) == ex.w1.dim(0) && ex.w2.dim(0) == 64,
            invalid_input, "extractor weights must map 1 -> c1 -> 64 channels");
  const Dims3 dm = grid.dims();
  SSG_CHECK(dm.d >= 4 && dm.h >= 4 && dm.w >= 4, invalid_input,
            "feature extraction needs at least 4 voxels per axis");

  Tensor x({1, dm.d, dm.h, dm.w});
  for (int64_t i = 0; i < grid.volume(); ++i)
    x.data()[i] = grid.data.data()[i] > kOccupied ? 1.0f : 0.0f;
  return conv_relu_pool(conv_relu_pool(x, ex.w1, ex.b1), ex.w2, ex.b2);
}

void feature_moments(const Tensor& features, Tensor& mu, Tensor& cov) {
  SSG_CHECK(features.ndim() >= 2, invalid_input, "features must be {C, ...locations}");
  const int64_t c = features.dim(0);
  const int64_t n = features.numel() / c;
  SSG_CHECK(n >= 2, invalid_input, "need at least two feature locations for a covariance");

  mu = Tensor::zeros({c});
  std::vector<double> mean(size_t(c), 0.0);
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* row = features.data() + ch * n;
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += double(row[i]);
    mean[size_t(ch)] = acc / double(n);
    mu.data()[ch] = float(mean[size_t(ch)]);
  }

  cov = Tensor::zeros({c, c});
  for (int64_t a = 0; a < c; ++a) {
    const float* ra = features.data() + a * n;
    for (int64_t b = a; b < c; ++b) {
      const float* rb = features.data() + b * n;
      double acc = 0;
      for (int64_t i = 0; i < n; ++i)
        acc += (double(ra[i]) - mean[size_t(a)]) * (double(rb[i]) - mean[size_t(b)]);
      const float v = float(acc / double(n - 1));  // unbiased
      cov.data()[a * c + b] = v;
      cov.data()[b * c + a] = v;
    }
  }
}

double ssfid(const VoxelGrid& real, const std::vector<VoxelGrid>& generated,
             const FeatureExtractor& ex) {
  SSG_CHECK(!generated.empty(), invalid_input, "no generated shapes to score");
  Tensor mu_r, cov_r;
  feature_moments(extract_features(ex, real), mu_r, cov_r);

  double acc = 0;
  for (const VoxelGrid& g : generated) {
    Tensor mu_g, cov_g;
    feature_moments(extract_features(ex, g), mu_g, cov_g);
    acc += frechet_distance(mu_r, cov_r, mu_g, cov_g);
  }
  return acc / double(generated.size());
}

Tensor spatial_variation_map(const std::vector<VoxelGrid>& shapes) {
  SSG_CHECK(shapes.size() >= 2, invalid_input, "variation needs at least two shapes");
  const Dims3 dm = shapes[0].dims();
  for (const VoxelGrid& s : shapes)
    SSG_CHECK(s.dims() == dm, invalid_input, "variation needs equal dims");

  const double k = double(shapes.size());
  Tensor map = Tensor::zeros({dm.d, dm.h});
  for (int64_t z = 0; z < dm.d; ++z)
    for (int64_t y = 0; y < dm.h; ++y) {
      double acc = 0;
      for (int64_t x = 0; x < dm.w; ++x) {
        double mean = 0;
        for (const VoxelGrid& s : shapes) mean += double(s.at(z, y, x));
        mean /= k;
        double var = 0;
        for (const VoxelGrid& s : shapes) {
          const double d = double(s.at(z, y, x)) - mean;
          var += d * d;
        }
        acc += std::sqrt(var / (k - 1.0));
      }
      map.data()[z * dm.h + y] = float(acc / double(dm.w));
    }
  return map;
}

void save_pgm(const Tensor& map, const std::string& path) {
  SSG_CHECK(map.ndim() == 2, invalid_input, "pgm export expects a 2-D map");
  float peak = 0.0f;
  for (int64_t i = 0; i < map.numel(); ++i) peak = std::max(peak, map.data()[i]);

  FILE* f = std::fopen(path.c_str(), "wb");
  SSG_CHECK(f != nullptr, io_error, "cannot open " + path);
  const int64_t rows = map.dim(0), cols = map.dim(1);
  std::fprintf(f, "P5\n%lld %lld\n255\n", (long long)cols, (long long)rows);
  bool ok = true;
  for (int64_t i = 0; i < map.numel(); ++i) {
    const float v = peak > 0.0f ? map.data()[i] / peak : 0.0f;
    const unsigned char byte =
        (unsigned char)std::clamp(std::lround(255.0f * v), 0l, 255l);
    ok = ok && std::fputc(byte, f) != EOF;
  }
  ok = std::fclose(f) == 0 && ok;
  SSG_CHECK(ok, io_error, "short write to " + path);
}

}  // namespace ssg
