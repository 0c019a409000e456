#include "ssg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef __AVX512F__
#include <immintrin.h>
#endif

#include "ssg/common.hpp"

namespace ssg::kernels {
namespace {

// Valid output range [lo, hi) for one kernel offset: indices where
// i = o*stride + k_off - pad lands inside [0, n).
inline void valid_range(int out_n, int in_n, int stride, int k_off, int pad, int& lo, int& hi) {
  int off = k_off - pad;
  lo = 0;
  if (off < 0) lo = (-off + stride - 1) / stride;
  hi = out_n;
  // largest o with o*stride + off <= in_n - 1
  int top = (in_n - 1 - off) / stride + 1;
  if (off > in_n - 1)
    hi = 0;
  else
    hi = std::min(hi, top);
  if (hi < lo) hi = lo;
}

#ifdef __AVX512F__

// Shared row engine for the hot k=3 / stride=1 / pad=1 case of both the
// convolution forward and its input-gradient (which is the same correlation
// with a flipped, transposed kernel). Accumulates four output rows at once:
// per source row it issues 3 shifted loads and 12 FMAs, which keeps the FMA
// ports busy instead of the store ports. `rows[s]` points at a zero-padded
// source row; loads read rows[s] + o + {0,1,2}. `wtab` holds 12 coefficients
// per source row laid out [lane][tap].
inline void acc4_rows(const float* const* rows, const float* wtab, int n_src, const float* bias4,
                      float* y0, float* y1, float* y2, float* y3, int w) {
  for (int o = 0; o < w; o += 16) {
    const int rem = w - o;
    const __mmask16 mk = rem >= 16 ? __mmask16(0xFFFF) : __mmask16((1u << rem) - 1);
    __m512 a0, a1, a2, a3;
    if (bias4) {
      a0 = _mm512_set1_ps(bias4[0]);
      a1 = _mm512_set1_ps(bias4[1]);
      a2 = _mm512_set1_ps(bias4[2]);
      a3 = _mm512_set1_ps(bias4[3]);
    } else {
      a0 = a1 = a2 = a3 = _mm512_setzero_ps();
    }
    const float* wp = wtab;
    for (int s = 0; s < n_src; ++s, wp += 12) {
      const float* r = rows[s] + o;
      const __m512 x0 = _mm512_maskz_loadu_ps(mk, r + 0);
      const __m512 x1 = _mm512_maskz_loadu_ps(mk, r + 1);
      const __m512 x2 = _mm512_maskz_loadu_ps(mk, r + 2);
      a0 = _mm512_fmadd_ps(_mm512_set1_ps(wp[0]), x0, a0);
      a0 = _mm512_fmadd_ps(_mm512_set1_ps(wp[1]), x1, a0);
      a0 = _mm512_fmadd_ps(_mm512_set1_ps(wp[2]), x2, a0);
      a1 = _mm512_fmadd_ps(_mm512_set1_ps(wp[3]), x0, a1);
      a1 = _mm512_fmadd_ps(_mm512_set1_ps(wp[4]), x1, a1);
      a1 = _mm512_fmadd_ps(_mm512_set1_ps(wp[5]), x2, a1);
      a2 = _mm512_fmadd_ps(_mm512_set1_ps(wp[6]), x0, a2);
      a2 = _mm512_fmadd_ps(_mm512_set1_ps(wp[7]), x1, a2);
      a2 = _mm512_fmadd_ps(_mm512_set1_ps(wp[8]), x2, a2);
      a3 = _mm512_fmadd_ps(_mm512_set1_ps(wp[9]), x0, a3);
      a3 = _mm512_fmadd_ps(_mm512_set1_ps(wp[10]), x1, a3);
      a3 = _mm512_fmadd_ps(_mm512_set1_ps(wp[11]), x2, a3);
    }
    _mm512_mask_storeu_ps(y0 + o, mk, a0);
    _mm512_mask_storeu_ps(y1 + o, mk, a1);
    _mm512_mask_storeu_ps(y2 + o, mk, a2);
    _mm512_mask_storeu_ps(y3 + o, mk, a3);
  }
}

// Weight-gradient row step: twelve running dot products (4 output channels x
// 3 taps) between gradient rows and one shifted padded input row.
inline void wg4_rows(const float* g0, const float* g1, const float* g2, const float* g3,
                     const float* xr, int w, __m512 acc[12]) {
  for (int o = 0; o < w; o += 16) {
    const int rem = w - o;
    const __mmask16 mk = rem >= 16 ? __mmask16(0xFFFF) : __mmask16((1u << rem) - 1);
    const __m512 x0 = _mm512_maskz_loadu_ps(mk, xr + o + 0);
    const __m512 x1 = _mm512_maskz_loadu_ps(mk, xr + o + 1);
    const __m512 x2 = _mm512_maskz_loadu_ps(mk, xr + o + 2);
    const __m512 v0 = _mm512_maskz_loadu_ps(mk, g0 + o);
    const __m512 v1 = _mm512_maskz_loadu_ps(mk, g1 + o);
    const __m512 v2 = _mm512_maskz_loadu_ps(mk, g2 + o);
    const __m512 v3 = _mm512_maskz_loadu_ps(mk, g3 + o);
    acc[0] = _mm512_fmadd_ps(v0, x0, acc[0]);
    acc[1] = _mm512_fmadd_ps(v0, x1, acc[1]);
    acc[2] = _mm512_fmadd_ps(v0, x2, acc[2]);
    acc[3] = _mm512_fmadd_ps(v1, x0, acc[3]);
    acc[4] = _mm512_fmadd_ps(v1, x1, acc[4]);
    acc[5] = _mm512_fmadd_ps(v1, x2, acc[5]);
    acc[6] = _mm512_fmadd_ps(v2, x0, acc[6]);
    acc[7] = _mm512_fmadd_ps(v2, x1, acc[7]);
    acc[8] = _mm512_fmadd_ps(v2, x2, acc[8]);
    acc[9] = _mm512_fmadd_ps(v3, x0, acc[9]);
    acc[10] = _mm512_fmadd_ps(v3, x1, acc[10]);
    acc[11] = _mm512_fmadd_ps(v3, x2, acc[11]);
  }
}

// Zero-padded copy: {c, n0, n1} -> {c, n0+2, n1+2} with a one-cell border.
std::vector<float> pad_volume2(const float* x, int c, int n0, int n1) {
  std::vector<float> out(size_t(c) * (n0 + 2) * (n1 + 2), 0.f);
  for (int cc = 0; cc < c; ++cc)
    for (int i = 0; i < n0; ++i)
      std::memcpy(out.data() + (size_t(cc) * (n0 + 2) + i + 1) * (n1 + 2) + 1,
                  x + (size_t(cc) * n0 + i) * n1, sizeof(float) * size_t(n1));
  return out;
}

std::vector<float> pad_volume3(const float* x, int c, int n0, int n1, int n2) {
  std::vector<float> out(size_t(c) * (n0 + 2) * (n1 + 2) * (n2 + 2), 0.f);
  for (int cc = 0; cc < c; ++cc)
    for (int i = 0; i < n0; ++i)
      for (int j = 0; j < n1; ++j)
        std::memcpy(
            out.data() + ((size_t(cc) * (n0 + 2) + i + 1) * (n1 + 2) + j + 1) * (n2 + 2) + 1,
            x + ((size_t(cc) * n0 + i) * n1 + j) * n2, sizeof(float) * size_t(n2));
  return out;
}

double reduce_m512(__m512 v) {
  alignas(64) float tmp[16];
  _mm512_store_ps(tmp, v);
  double s = 0.0;
  for (int i = 0; i < 16; ++i) s += double(tmp[i]);
  return s;
}

bool fast3_ok(int kd, int kh, int kw, int stride, int pad) {
  return kd == 3 && kh == 3 && kw == 3 && stride == 1 && pad == 1;
}

#endif  // __AVX512F__

}  // namespace

void conv3d_forward(const float* x, int ci, int d, int h, int w, const float* wt, int co, int kd,
                    int kh, int kw, int stride, int pad, const float* bias, float* y, int od,
                    int oh, int ow) {
#ifdef __AVX512F__
  if (fast3_ok(kd, kh, kw, stride, pad) && co % 4 == 0) {
    const auto xpad = pad_volume3(x, ci, d, h, w);
    const int ph = h + 2, pw = w + 2;
    const int n_src = ci * 9;
    std::vector<float> wtab(static_cast<size_t>(n_src) * 12);
    std::vector<const float*> rows(static_cast<size_t>(n_src));
    for (int c0 = 0; c0 < co; c0 += 4) {
      for (int c = 0; c < ci; ++c)
        for (int kz = 0; kz < 3; ++kz)
          for (int ky = 0; ky < 3; ++ky) {
            float* wdst = wtab.data() + (size_t(c) * 9 + size_t(kz) * 3 + ky) * 12;
            for (int m = 0; m < 4; ++m)
              for (int q = 0; q < 3; ++q)
                wdst[m * 3 + q] = wt[(((size_t(c0 + m) * ci + c) * 3 + kz) * 3 + ky) * 3 + q];
          }
      float bias4[4];
      if (bias)
        for (int m = 0; m < 4; ++m) bias4[m] = bias[c0 + m];
      for (int zo = 0; zo < od; ++zo) {
        for (int yo = 0; yo < oh; ++yo) {
          for (int c = 0; c < ci; ++c)
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky)
                rows[size_t(c) * 9 + size_t(kz) * 3 + ky] =
                    xpad.data() + ((size_t(c) * (d + 2) + zo + kz) * ph + yo + ky) * pw;
          float* y0 = y + ((size_t(c0 + 0) * od + zo) * oh + yo) * ow;
          float* y1 = y + ((size_t(c0 + 1) * od + zo) * oh + yo) * ow;
          float* y2 = y + ((size_t(c0 + 2) * od + zo) * oh + yo) * ow;
          float* y3 = y + ((size_t(c0 + 3) * od + zo) * oh + yo) * ow;
          acc4_rows(rows.data(), wtab.data(), n_src, bias ? bias4 : nullptr, y0, y1, y2, y3, ow);
        }
      }
    }
    return;
  }
#endif
  const int64_t x_hw = int64_t(h) * w;
  const int64_t y_hw = int64_t(oh) * ow;
  const int k_hw = kh * kw;
  const int k_all = kd * k_hw;
  std::vector<int> lo_w(kw), hi_w(kw);
  for (int q = 0; q < kw; ++q) valid_range(ow, w, stride, q, pad, lo_w[q], hi_w[q]);

  int c0 = 0;
  for (; c0 + 4 <= co; c0 += 4) {
    for (int zo = 0; zo < od; ++zo) {
      for (int yo = 0; yo < oh; ++yo) {
        float* r0 = y + ((int64_t(c0 + 0) * od + zo) * oh + yo) * ow;
        float* r1 = y + ((int64_t(c0 + 1) * od + zo) * oh + yo) * ow;
        float* r2 = y + ((int64_t(c0 + 2) * od + zo) * oh + yo) * ow;
        float* r3 = y + ((int64_t(c0 + 3) * od + zo) * oh + yo) * ow;
        const float b0 = bias ? bias[c0 + 0] : 0.f;
        const float b1 = bias ? bias[c0 + 1] : 0.f;
        const float b2 = bias ? bias[c0 + 2] : 0.f;
        const float b3 = bias ? bias[c0 + 3] : 0.f;
        for (int o = 0; o < ow; ++o) {
          r0[o] = b0;
          r1[o] = b1;
          r2[o] = b2;
          r3[o] = b3;
        }
        for (int c = 0; c < ci; ++c) {
          for (int kz = 0; kz < kd; ++kz) {
            int iz = zo * stride + kz - pad;
            if (iz < 0 || iz >= d) continue;
            for (int ky = 0; ky < kh; ++ky) {
              int iy = yo * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              const float* xr = x + (int64_t(c) * d + iz) * x_hw + int64_t(iy) * w;
              const float* w0 = wt + (int64_t(c0 + 0) * ci + c) * k_all + kz * k_hw + ky * kw;
              const float* w1 = w0 + int64_t(ci) * k_all;
              const float* w2 = w1 + int64_t(ci) * k_all;
              const float* w3 = w2 + int64_t(ci) * k_all;
              for (int q = 0; q < kw; ++q) {
                const int lo = lo_w[q], hi = hi_w[q];
                if (lo >= hi) continue;
                const float v0 = w0[q], v1 = w1[q], v2 = w2[q], v3 = w3[q];
                if (stride == 1) {
                  const float* xs = xr + (q - pad);
                  for (int o = lo; o < hi; ++o) {
                    const float xv = xs[o];
                    r0[o] += v0 * xv;
                    r1[o] += v1 * xv;
                    r2[o] += v2 * xv;
                    r3[o] += v3 * xv;
                  }
                } else {
                  const float* xs = xr + (q - pad);
                  for (int o = lo; o < hi; ++o) {
                    const float xv = xs[int64_t(o) * stride];
                    r0[o] += v0 * xv;
                    r1[o] += v1 * xv;
                    r2[o] += v2 * xv;
                    r3[o] += v3 * xv;
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  for (; c0 < co; ++c0) {
    for (int zo = 0; zo < od; ++zo) {
      for (int yo = 0; yo < oh; ++yo) {
        float* r0 = y + ((int64_t(c0) * od + zo) * oh + yo) * ow;
        const float b0 = bias ? bias[c0] : 0.f;
        for (int o = 0; o < ow; ++o) r0[o] = b0;
        for (int c = 0; c < ci; ++c) {
          for (int kz = 0; kz < kd; ++kz) {
            int iz = zo * stride + kz - pad;
            if (iz < 0 || iz >= d) continue;
            for (int ky = 0; ky < kh; ++ky) {
              int iy = yo * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              const float* xr = x + (int64_t(c) * d + iz) * x_hw + int64_t(iy) * w;
              const float* w0 = wt + (int64_t(c0) * ci + c) * k_all + kz * k_hw + ky * kw;
              for (int q = 0; q < kw; ++q) {
                const int lo = lo_w[q], hi = hi_w[q];
                const float v0 = w0[q];
                const float* xs = xr + (q - pad);
                for (int o = lo; o < hi; ++o) r0[o] += v0 * xs[int64_t(o) * stride];
              }
            }
          }
        }
      }
    }
  }
  (void)y_hw;
}

void conv3d_input_grad(const float* g, int co, int od, int oh, int ow, const float* wt, int ci,
                       int kd, int kh, int kw, int stride, int pad, float* gx, int d, int h,
                       int w) {
#ifdef __AVX512F__
  if (fast3_ok(kd, kh, kw, stride, pad) && ci % 4 == 0) {
    // Same row engine as the forward pass: the input gradient of a s1/p1/k3
    // correlation is a correlation with the kernel flipped in all three axes
    // and the channel roles swapped.
    const auto gpad = pad_volume3(g, co, od, oh, ow);
    const int ph = oh + 2, pw = ow + 2;
    const int n_src = co * 9;
    std::vector<float> wtab(static_cast<size_t>(n_src) * 12);
    std::vector<const float*> rows(static_cast<size_t>(n_src));
    for (int c0 = 0; c0 < ci; c0 += 4) {
      for (int m = 0; m < co; ++m)
        for (int kz = 0; kz < 3; ++kz)
          for (int ky = 0; ky < 3; ++ky) {
            float* wdst = wtab.data() + (size_t(m) * 9 + size_t(kz) * 3 + ky) * 12;
            for (int lane = 0; lane < 4; ++lane)
              for (int q = 0; q < 3; ++q)
                wdst[lane * 3 + q] =
                    wt[(((size_t(m) * ci + c0 + lane) * 3 + (2 - kz)) * 3 + (2 - ky)) * 3 +
                       (2 - q)];
          }
      for (int iz = 0; iz < d; ++iz) {
        for (int iy = 0; iy < h; ++iy) {
          for (int m = 0; m < co; ++m)
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky)
                rows[size_t(m) * 9 + size_t(kz) * 3 + ky] =
                    gpad.data() + ((size_t(m) * (od + 2) + iz + kz) * ph + iy + ky) * pw;
          float* y0 = gx + ((size_t(c0 + 0) * d + iz) * h + iy) * w;
          float* y1 = gx + ((size_t(c0 + 1) * d + iz) * h + iy) * w;
          float* y2 = gx + ((size_t(c0 + 2) * d + iz) * h + iy) * w;
          float* y3 = gx + ((size_t(c0 + 3) * d + iz) * h + iy) * w;
          acc4_rows(rows.data(), wtab.data(), n_src, nullptr, y0, y1, y2, y3, w);
        }
      }
    }
    return;
  }
#endif
  std::memset(gx, 0, sizeof(float) * size_t(ci) * d * h * w);
  const int k_hw = kh * kw;
  const int k_all = kd * k_hw;
  std::vector<int> lo_w(kw), hi_w(kw);
  for (int q = 0; q < kw; ++q) valid_range(ow, w, stride, q, pad, lo_w[q], hi_w[q]);

  for (int c = 0; c < ci; ++c) {
    int m0 = 0;
    for (; m0 + 4 <= co; m0 += 4) {
      for (int zo = 0; zo < od; ++zo) {
        for (int kz = 0; kz < kd; ++kz) {
          int iz = zo * stride + kz - pad;
          if (iz < 0 || iz >= d) continue;
          for (int yo = 0; yo < oh; ++yo) {
            for (int ky = 0; ky < kh; ++ky) {
              int iy = yo * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              float* xr = gx + ((int64_t(c) * d + iz) * h + iy) * w;
              const float* g0 = g + ((int64_t(m0 + 0) * od + zo) * oh + yo) * ow;
              const float* g1 = g + ((int64_t(m0 + 1) * od + zo) * oh + yo) * ow;
              const float* g2 = g + ((int64_t(m0 + 2) * od + zo) * oh + yo) * ow;
              const float* g3 = g + ((int64_t(m0 + 3) * od + zo) * oh + yo) * ow;
              const float* w0 = wt + (int64_t(m0 + 0) * ci + c) * k_all + kz * k_hw + ky * kw;
              const float* w1 = w0 + int64_t(ci) * k_all;
              const float* w2 = w1 + int64_t(ci) * k_all;
              const float* w3 = w2 + int64_t(ci) * k_all;
              for (int q = 0; q < kw; ++q) {
                const int lo = lo_w[q], hi = hi_w[q];
                if (lo >= hi) continue;
                const float v0 = w0[q], v1 = w1[q], v2 = w2[q], v3 = w3[q];
                if (stride == 1) {
                  float* xs = xr + (q - pad);
                  for (int o = lo; o < hi; ++o)
                    xs[o] += v0 * g0[o] + v1 * g1[o] + v2 * g2[o] + v3 * g3[o];
                } else {
                  float* xs = xr + (q - pad);
                  for (int o = lo; o < hi; ++o)
                    xs[int64_t(o) * stride] += v0 * g0[o] + v1 * g1[o] + v2 * g2[o] + v3 * g3[o];
                }
              }
            }
          }
        }
      }
    }
    for (; m0 < co; ++m0) {
      for (int zo = 0; zo < od; ++zo) {
        for (int kz = 0; kz < kd; ++kz) {
          int iz = zo * stride + kz - pad;
          if (iz < 0 || iz >= d) continue;
          for (int yo = 0; yo < oh; ++yo) {
            for (int ky = 0; ky < kh; ++ky) {
              int iy = yo * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              float* xr = gx + ((int64_t(c) * d + iz) * h + iy) * w;
              const float* g0 = g + ((int64_t(m0) * od + zo) * oh + yo) * ow;
              const float* w0 = wt + (int64_t(m0) * ci + c) * k_all + kz * k_hw + ky * kw;
              for (int q = 0; q < kw; ++q) {
                const int lo = lo_w[q], hi = hi_w[q];
                const float v0 = w0[q];
                float* xs = xr + (q - pad);
                for (int o = lo; o < hi; ++o) xs[int64_t(o) * stride] += v0 * g0[o];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_weight_grad(const float* x, int ci, int d, int h, int w, const float* g, int co,
                        int od, int oh, int ow, int stride, int pad, float* gw, int kd, int kh,
                        int kw) {
#ifdef __AVX512F__
  if (fast3_ok(kd, kh, kw, stride, pad) && co % 4 == 0) {
    const auto xpad = pad_volume3(x, ci, d, h, w);
    const int ph = h + 2, pw = w + 2;
    for (int m0 = 0; m0 < co; m0 += 4) {
      for (int c = 0; c < ci; ++c) {
        for (int kz = 0; kz < 3; ++kz) {
          for (int ky = 0; ky < 3; ++ky) {
            __m512 acc[12];
            for (auto& a : acc) a = _mm512_setzero_ps();
            for (int zo = 0; zo < od; ++zo) {
              const float* xbase =
                  xpad.data() + (size_t(c) * (d + 2) + zo + kz) * size_t(ph) * pw;
              for (int yo = 0; yo < oh; ++yo) {
                const float* g0 = g + ((size_t(m0 + 0) * od + zo) * oh + yo) * ow;
                const float* g1 = g + ((size_t(m0 + 1) * od + zo) * oh + yo) * ow;
                const float* g2 = g + ((size_t(m0 + 2) * od + zo) * oh + yo) * ow;
                const float* g3 = g + ((size_t(m0 + 3) * od + zo) * oh + yo) * ow;
                wg4_rows(g0, g1, g2, g3, xbase + size_t(yo + ky) * pw, ow, acc);
              }
            }
            for (int m = 0; m < 4; ++m)
              for (int q = 0; q < 3; ++q)
                gw[(((size_t(m0 + m) * ci + c) * 3 + kz) * 3 + ky) * 3 + q] =
                    float(reduce_m512(acc[m * 3 + q]));
          }
        }
      }
    }
    return;
  }
#endif
  const int k_hw = kh * kw;
  const int k_all = kd * k_hw;
  std::vector<int> lo_w(kw), hi_w(kw);
  for (int q = 0; q < kw; ++q) valid_range(ow, w, stride, q, pad, lo_w[q], hi_w[q]);
  std::vector<double> acc(static_cast<size_t>(k_all));

  for (int m = 0; m < co; ++m) {
    for (int c = 0; c < ci; ++c) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int zo = 0; zo < od; ++zo) {
        for (int kz = 0; kz < kd; ++kz) {
          int iz = zo * stride + kz - pad;
          if (iz < 0 || iz >= d) continue;
          for (int yo = 0; yo < oh; ++yo) {
            for (int ky = 0; ky < kh; ++ky) {
              int iy = yo * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              const float* xr = x + ((int64_t(c) * d + iz) * h + iy) * w;
              const float* gr = g + ((int64_t(m) * od + zo) * oh + yo) * ow;
              for (int q = 0; q < kw; ++q) {
                const int lo = lo_w[q], hi = hi_w[q];
                if (lo >= hi) continue;
                const float* xs = xr + (q - pad);
                float dot = 0.f;
                if (stride == 1) {
                  for (int o = lo; o < hi; ++o) dot += gr[o] * xs[o];
                } else {
                  for (int o = lo; o < hi; ++o) dot += gr[o] * xs[int64_t(o) * stride];
                }
                acc[size_t(kz) * k_hw + ky * kw + q] += double(dot);
              }
            }
          }
        }
      }
      float* dst = gw + (int64_t(m) * ci + c) * k_all;
      for (int i = 0; i < k_all; ++i) dst[i] = float(acc[size_t(i)]);
    }
  }
}

void conv2d_forward(const float* x, int ci, int h, int w, const float* wt, int co, int kh, int kw,
                    int stride, int pad, const float* bias, float* y, int oh, int ow) {
#ifdef __AVX512F__
  if (kh == 3 && kw == 3 && stride == 1 && pad == 1 && co % 4 == 0) {
    const auto xpad = pad_volume2(x, ci, h, w);
    const int pw = w + 2;
    const int n_src = ci * 3;
    std::vector<float> wtab(static_cast<size_t>(n_src) * 12);
    std::vector<const float*> rows(static_cast<size_t>(n_src));
    for (int c0 = 0; c0 < co; c0 += 4) {
      for (int c = 0; c < ci; ++c)
        for (int ky = 0; ky < 3; ++ky) {
          float* wdst = wtab.data() + (size_t(c) * 3 + ky) * 12;
          for (int m = 0; m < 4; ++m)
            for (int q = 0; q < 3; ++q)
              wdst[m * 3 + q] = wt[((size_t(c0 + m) * ci + c) * 3 + ky) * 3 + q];
        }
      float bias4[4];
      if (bias)
        for (int m = 0; m < 4; ++m) bias4[m] = bias[c0 + m];
      for (int yo = 0; yo < oh; ++yo) {
        for (int c = 0; c < ci; ++c)
          for (int ky = 0; ky < 3; ++ky)
            rows[size_t(c) * 3 + ky] = xpad.data() + (size_t(c) * (h + 2) + yo + ky) * pw;
        float* y0 = y + (size_t(c0 + 0) * oh + yo) * ow;
        float* y1 = y + (size_t(c0 + 1) * oh + yo) * ow;
        float* y2 = y + (size_t(c0 + 2) * oh + yo) * ow;
        float* y3 = y + (size_t(c0 + 3) * oh + yo) * ow;
        acc4_rows(rows.data(), wtab.data(), n_src, bias ? bias4 : nullptr, y0, y1, y2, y3, ow);
      }
    }
    return;
  }
#endif
  const int k_all = kh * kw;
  std::vector<int> lo_w(kw), hi_w(kw);
  for (int q = 0; q < kw; ++q) valid_range(ow, w, stride, q, pad, lo_w[q], hi_w[q]);
  for (int m = 0; m < co; ++m) {
    for (int yo = 0; yo < oh; ++yo) {
      float* r = y + (int64_t(m) * oh + yo) * ow;
      const float b = bias ? bias[m] : 0.f;
      for (int o = 0; o < ow; ++o) r[o] = b;
      for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
          int iy = yo * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const float* xr = x + (int64_t(c) * h + iy) * w;
          const float* wr = wt + (int64_t(m) * ci + c) * k_all + ky * kw;
          for (int q = 0; q < kw; ++q) {
            const int lo = lo_w[q], hi = hi_w[q];
            const float v = wr[q];
            const float* xs = xr + (q - pad);
            if (stride == 1) {
              for (int o = lo; o < hi; ++o) r[o] += v * xs[o];
            } else {
              for (int o = lo; o < hi; ++o) r[o] += v * xs[int64_t(o) * stride];
            }
          }
        }
      }
    }
  }
}

void conv2d_input_grad(const float* g, int co, int oh, int ow, const float* wt, int ci, int kh,
                       int kw, int stride, int pad, float* gx, int h, int w) {
#ifdef __AVX512F__
  if (kh == 3 && kw == 3 && stride == 1 && pad == 1 && ci % 4 == 0) {
    const auto gpad = pad_volume2(g, co, oh, ow);
    const int pw = ow + 2;
    const int n_src = co * 3;
    std::vector<float> wtab(static_cast<size_t>(n_src) * 12);
    std::vector<const float*> rows(static_cast<size_t>(n_src));
    for (int c0 = 0; c0 < ci; c0 += 4) {
      for (int m = 0; m < co; ++m)
        for (int ky = 0; ky < 3; ++ky) {
          float* wdst = wtab.data() + (size_t(m) * 3 + ky) * 12;
          for (int lane = 0; lane < 4; ++lane)
            for (int q = 0; q < 3; ++q)
              wdst[lane * 3 + q] =
                  wt[((size_t(m) * ci + c0 + lane) * 3 + (2 - ky)) * 3 + (2 - q)];
        }
      for (int iy = 0; iy < h; ++iy) {
        for (int m = 0; m < co; ++m)
          for (int ky = 0; ky < 3; ++ky)
            rows[size_t(m) * 3 + ky] = gpad.data() + (size_t(m) * (oh + 2) + iy + ky) * pw;
        float* y0 = gx + (size_t(c0 + 0) * h + iy) * w;
        float* y1 = gx + (size_t(c0 + 1) * h + iy) * w;
        float* y2 = gx + (size_t(c0 + 2) * h + iy) * w;
        float* y3 = gx + (size_t(c0 + 3) * h + iy) * w;
        acc4_rows(rows.data(), wtab.data(), n_src, nullptr, y0, y1, y2, y3, w);
      }
    }
    return;
  }
#endif
  std::memset(gx, 0, sizeof(float) * size_t(ci) * h * w);
  const int k_all = kh * kw;
  std::vector<int> lo_w(kw), hi_w(kw);
  for (int q = 0; q < kw; ++q) valid_range(ow, w, stride, q, pad, lo_w[q], hi_w[q]);
  for (int c = 0; c < ci; ++c) {
    for (int m = 0; m < co; ++m) {
      for (int yo = 0; yo < oh; ++yo) {
        const float* gr = g + (int64_t(m) * oh + yo) * ow;
        const float* wr = wt + (int64_t(m) * ci + c) * k_all;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = yo * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          float* xr = gx + (int64_t(c) * h + iy) * w;
          for (int q = 0; q < kw; ++q) {
            const int lo = lo_w[q], hi = hi_w[q];
            const float v = wr[ky * kw + q];
            float* xs = xr + (q - pad);
            if (stride == 1) {
              for (int o = lo; o < hi; ++o) xs[o] += v * gr[o];
            } else {
              for (int o = lo; o < hi; ++o) xs[int64_t(o) * stride] += v * gr[o];
            }
          }
        }
      }
    }
  }
}

void conv2d_weight_grad(const float* x, int ci, int h, int w, const float* g, int co, int oh,
                        int ow, int stride, int pad, float* gw, int kh, int kw) {
#ifdef __AVX512F__
  if (kh == 3 && kw == 3 && stride == 1 && pad == 1 && co % 4 == 0) {
    const auto xpad = pad_volume2(x, ci, h, w);
    const int pw = w + 2;
    for (int m0 = 0; m0 < co; m0 += 4) {
      for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
          __m512 acc[12];
          for (auto& a : acc) a = _mm512_setzero_ps();
          for (int yo = 0; yo < oh; ++yo) {
            const float* g0 = g + (size_t(m0 + 0) * oh + yo) * ow;
            const float* g1 = g + (size_t(m0 + 1) * oh + yo) * ow;
            const float* g2 = g + (size_t(m0 + 2) * oh + yo) * ow;
            const float* g3 = g + (size_t(m0 + 3) * oh + yo) * ow;
            wg4_rows(g0, g1, g2, g3, xpad.data() + (size_t(c) * (h + 2) + yo + ky) * pw, ow, acc);
          }
          for (int m = 0; m < 4; ++m)
            for (int q = 0; q < 3; ++q)
              gw[((size_t(m0 + m) * ci + c) * 3 + ky) * 3 + q] =
                  float(reduce_m512(acc[m * 3 + q]));
        }
      }
    }
    return;
  }
#endif
  const int k_all = kh * kw;
  std::vector<int> lo_w(kw), hi_w(kw);
  for (int q = 0; q < kw; ++q) valid_range(ow, w, stride, q, pad, lo_w[q], hi_w[q]);
  std::vector<double> acc(static_cast<size_t>(k_all));
  for (int m = 0; m < co; ++m) {
    for (int c = 0; c < ci; ++c) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int yo = 0; yo < oh; ++yo) {
        const float* gr = g + (int64_t(m) * oh + yo) * ow;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = yo * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const float* xr = x + (int64_t(c) * h + iy) * w;
          for (int q = 0; q < kw; ++q) {
            const int lo = lo_w[q], hi = hi_w[q];
            const float* xs = xr + (q - pad);
            float dot = 0.f;
            if (stride == 1) {
              for (int o = lo; o < hi; ++o) dot += gr[o] * xs[o];
            } else {
              for (int o = lo; o < hi; ++o) dot += gr[o] * xs[int64_t(o) * stride];
            }
            acc[size_t(ky) * kw + q] += double(dot);
          }
        }
      }
      float* dst = gw + (int64_t(m) * ci + c) * k_all;
      for (int i = 0; i < k_all; ++i) dst[i] = float(acc[size_t(i)]);
    }
  }
}

void gemm(bool transa, bool transb, int m, int n, int k, const float* a, const float* b,
          float* c) {
  SSG_CHECK(!(transa && transb), internal, "gemm: double transpose unsupported");
  std::memset(c, 0, sizeof(float) * size_t(m) * n);
  if (!transb) {
    // C[i,:] += A'[i,p] * B[p,:], vectorized over n.
    for (int i = 0; i < m; ++i) {
      float* cr = c + int64_t(i) * n;
      for (int p = 0; p < k; ++p) {
        const float av = transa ? a[int64_t(p) * m + i] : a[int64_t(i) * k + p];
        if (av == 0.f) continue;
        const float* br = b + int64_t(p) * n;
        for (int j = 0; j < n; ++j) cr[j] += av * br[j];
      }
    }
  } else {
    // C[i,j] = dot(A[i,:], B[j,:]), vectorized over k.
    for (int i = 0; i < m; ++i) {
      const float* ar = a + int64_t(i) * k;
      float* cr = c + int64_t(i) * n;
      for (int j = 0; j < n; ++j) {
        const float* br = b + int64_t(j) * k;
        float dot = 0.f;
        for (int p = 0; p < k; ++p) dot += ar[p] * br[p];
        cr[j] = dot;
      }
    }
  }
}

LerpTap lerp_tap(float u, int n) {
  double a = double(u) * n - 0.5;
  if (a < 0.0) a = 0.0;
  const double top = double(n - 1);
  if (a > top) a = top;
  int i0 = int(std::floor(a));
  if (i0 > n - 1) i0 = n - 1;
  float t = float(a - i0);
  int i1 = std::min(i0 + 1, n - 1);
  // Snap near-endpoint weights so on-node queries return stored values
  // exactly (the 1e-6 band is far below any meaningful interpolation step).
  if (t < 1e-6f) t = 0.f;
  if (t > 1.f - 1e-6f) {
    i0 = i1;
    t = 0.f;
  }
  return {i0, i1, t};
}

std::vector<LerpTap> axis_resize_table(int n_src, int n_dst) {
  std::vector<LerpTap> taps(static_cast<size_t>(n_dst));
  for (int i = 0; i < n_dst; ++i) {
    float u = (float(i) + 0.5f) / float(n_dst);
    taps[size_t(i)] = lerp_tap(u, n_src);
  }
  return taps;
}

void resize_plane_bilinear(const float* src, int c, int a, int b, float* dst, int a2, int b2) {
  const auto ta = axis_resize_table(a, a2);
  const auto tb = axis_resize_table(b, b2);
  for (int cc = 0; cc < c; ++cc) {
    const float* s = src + int64_t(cc) * a * b;
    float* o = dst + int64_t(cc) * a2 * b2;
    for (int i = 0; i < a2; ++i) {
      const auto& pa = ta[size_t(i)];
      const float* r0 = s + int64_t(pa.i0) * b;
      const float* r1 = s + int64_t(pa.i1) * b;
      float* orow = o + int64_t(i) * b2;
      for (int j = 0; j < b2; ++j) {
        const auto& pb = tb[size_t(j)];
        float v0 = (1.f - pb.t) * r0[pb.i0] + pb.t * r0[pb.i1];
        float v1 = (1.f - pb.t) * r1[pb.i0] + pb.t * r1[pb.i1];
        orow[j] = (1.f - pa.t) * v0 + pa.t * v1;
      }
    }
  }
}

void resize_grid_trilinear(const float* src, int d, int h, int w, float* dst, int d2, int h2,
                           int w2) {
  const auto td = axis_resize_table(d, d2);
  const auto th = axis_resize_table(h, h2);
  const auto tw = axis_resize_table(w, w2);
  const int64_t hw = int64_t(h) * w;
  for (int i = 0; i < d2; ++i) {
    const auto& pd = td[size_t(i)];
    const float* s0 = src + int64_t(pd.i0) * hw;
    const float* s1 = src + int64_t(pd.i1) * hw;
    for (int j = 0; j < h2; ++j) {
      const auto& ph = th[size_t(j)];
      const float* r00 = s0 + int64_t(ph.i0) * w;
      const float* r01 = s0 + int64_t(ph.i1) * w;
      const float* r10 = s1 + int64_t(ph.i0) * w;
      const float* r11 = s1 + int64_t(ph.i1) * w;
      float* orow = dst + (int64_t(i) * h2 + j) * w2;
      for (int q = 0; q < w2; ++q) {
        const auto& pw = tw[size_t(q)];
        float a00 = (1.f - pw.t) * r00[pw.i0] + pw.t * r00[pw.i1];
        float a01 = (1.f - pw.t) * r01[pw.i0] + pw.t * r01[pw.i1];
        float a10 = (1.f - pw.t) * r10[pw.i0] + pw.t * r10[pw.i1];
        float a11 = (1.f - pw.t) * r11[pw.i0] + pw.t * r11[pw.i1];
        float b0 = (1.f - ph.t) * a00 + ph.t * a01;
        float b1 = (1.f - ph.t) * a10 + ph.t * a11;
        orow[q] = (1.f - pd.t) * b0 + pd.t * b1;
      }
    }
  }
}

void adaptive_pool_axis(const float* x, int d, int h, int w, int axis, int bins, float* out) {
  const int n = axis == 0 ? d : (axis == 1 ? h : w);
  const int a = axis == 0 ? h : d;
  const int b = axis == 2 ? h : w;
  // out is {bins, a, b}
  for (int bi = 0; bi < bins; ++bi) {
    const int s = int(int64_t(bi) * n / bins);
    const int e = int((int64_t(bi + 1) * n + bins - 1) / bins);
    const double inv = 1.0 / double(e - s);
    float* orow = out + int64_t(bi) * a * b;
    for (int i = 0; i < a; ++i) {
      for (int j = 0; j < b; ++j) {
        double acc = 0.0;
        for (int t = s; t < e; ++t) {
          int64_t idx;
          if (axis == 0)
            idx = (int64_t(t) * h + i) * w + j;
          else if (axis == 1)
            idx = (int64_t(i) * h + t) * w + j;
          else
            idx = (int64_t(i) * h + j) * w + t;
          acc += double(x[idx]);
        }
        orow[int64_t(i) * b + j] = float(acc * inv);
      }
    }
  }
}

void plane_merge(const float* pxy, const float* pxz, const float* pyz, const float* bias, int c,
                 int d, int h, int w, float* v) {
  for (int cc = 0; cc < c; ++cc) {
    const float* xy = pxy + int64_t(cc) * d * h;
    const float* xz = pxz + int64_t(cc) * d * w;
    const float* yz = pyz + int64_t(cc) * h * w;
    const float bv = bias ? bias[cc] : 0.f;
    float* vc = v + int64_t(cc) * d * h * w;
    for (int i = 0; i < d; ++i) {
      const float* xzr = xz + int64_t(i) * w;
      for (int j = 0; j < h; ++j) {
        const float base = xy[int64_t(i) * h + j] + bv;
        const float* yzr = yz + int64_t(j) * w;
        float* vr = vc + (int64_t(i) * h + j) * w;
        for (int q = 0; q < w; ++q) vr[q] = base + xzr[q] + yzr[q];
      }
    }
  }
}

void volume_plane_sum(const float* g, int c, int d, int h, int w, Plane plane, float* out) {
  for (int cc = 0; cc < c; ++cc) {
    const float* gc = g + int64_t(cc) * d * h * w;
    if (plane == Plane::XY) {
      float* o = out + int64_t(cc) * d * h;
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < h; ++j) {
          const float* gr = gc + (int64_t(i) * h + j) * w;
          double acc = 0.0;
          for (int q = 0; q < w; ++q) acc += double(gr[q]);
          o[int64_t(i) * h + j] = float(acc);
        }
      }
    } else if (plane == Plane::XZ) {
      float* o = out + int64_t(cc) * d * w;
      for (int i = 0; i < d; ++i) {
        float* orow = o + int64_t(i) * w;
        for (int q = 0; q < w; ++q) orow[q] = 0.f;
        for (int j = 0; j < h; ++j) {
          const float* gr = gc + (int64_t(i) * h + j) * w;
          for (int q = 0; q < w; ++q) orow[q] += gr[q];
        }
      }
    } else {
      float* o = out + int64_t(cc) * h * w;
      for (int j = 0; j < h; ++j)
        for (int q = 0; q < w; ++q) o[int64_t(j) * w + q] = 0.f;
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < h; ++j) {
          const float* gr = gc + (int64_t(i) * h + j) * w;
          float* orow = o + int64_t(j) * w;
          for (int q = 0; q < w; ++q) orow[q] += gr[q];
        }
      }
    }
  }
}

void plane_to_volume(const float* p, int c, int d, int h, int w, Plane plane, float* v) {
  for (int cc = 0; cc < c; ++cc) {
    float* vc = v + int64_t(cc) * d * h * w;
    if (plane == Plane::XY) {
      const float* pc = p + int64_t(cc) * d * h;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < h; ++j) {
          const float val = pc[int64_t(i) * h + j];
          float* vr = vc + (int64_t(i) * h + j) * w;
          for (int q = 0; q < w; ++q) vr[q] = val;
        }
    } else if (plane == Plane::XZ) {
      const float* pc = p + int64_t(cc) * d * w;
      for (int i = 0; i < d; ++i) {
        const float* pr = pc + int64_t(i) * w;
        for (int j = 0; j < h; ++j) {
          float* vr = vc + (int64_t(i) * h + j) * w;
          for (int q = 0; q < w; ++q) vr[q] = pr[q];
        }
      }
    } else {
      const float* pc = p + int64_t(cc) * h * w;
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < h; ++j) {
          const float* pr = pc + int64_t(j) * w;
          float* vr = vc + (int64_t(i) * h + j) * w;
          for (int q = 0; q < w; ++q) vr[q] = pr[q];
        }
      }
    }
  }
}

}  // namespace ssg::kernels
