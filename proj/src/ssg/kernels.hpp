#pragma once

#include <cstdint>
#include <vector>

namespace ssg::kernels {

// All kernels are single-threaded with a fixed accumulation order so results
// are bit-reproducible run to run. Inner loops are laid out unit-stride for
// the autovectorizer; the convolutions block output channels in groups of 4.

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// x: {ci, d, h, w}} w: {co, ci, kd, kh, kw}, y: {co, od, oh, ow}; bias nullable.
void conv3d_forward(const float* x, int ci, int d, int h, int w, const float* wt, int co, int kd,
                    int kh, int kw, int stride, int pad, const float* bias, float* y, int od,
                    int oh, int ow);

// gx: {ci, d, h, w} (overwritten).
void conv3d_input_grad(const float* g, int co, int od, int oh, int ow, const float* wt, int ci,
                       int kd, int kh, int kw, int stride, int pad, float* gx, int d, int h,
                       int w);

// gw: {co, ci, kd, kh, kw} (overwritten); gb: {co} (nullable, overwritten).
void conv3d_weight_grad(const float* x, int ci, int d, int h, int w, const float* g, int co,
                        int od, int oh, int ow, int stride, int pad, float* gw, int kd, int kh,
                        int kw);

void conv2d_forward(const float* x, int ci, int h, int w, const float* wt, int co, int kh, int kw,
                    int stride, int pad, const float* bias, float* y, int oh, int ow);
void conv2d_input_grad(const float* g, int co, int oh, int ow, const float* wt, int ci, int kh,
                       int kw, int stride, int pad, float* gx, int h, int w);
void conv2d_weight_grad(const float* x, int ci, int h, int w, const float* g, int co, int oh,
                        int ow, int stride, int pad, float* gw, int kh, int kw);

// C {m,n} = op(A) * op(B). Row-major. transa && transb unsupported.
void gemm(bool transa, bool transb, int m, int n, int k, const float* a, const float* b, float* c);

// Linear interpolation table: for each destination index, the two source
// indices and the weight of the second one. Cell-center convention with
// clamping at the borders; weights within 1e-6 of the endpoints snap to them
// so grid-aligned queries reproduce stored values exactly.
struct LerpTap {
  int i0;
  int i1;
  float t;  // value = (1-t)*src[i0] + t*src[i1]
};

// Continuous source coordinate for normalized u in [0,1] over n cells.
LerpTap lerp_tap(float u, int n);
std::vector<LerpTap> axis_resize_table(int n_src, int n_dst);

// src {c, a, b} -> dst {c, a2, b2}, bilinear.
void resize_plane_bilinear(const float* src, int c, int a, int b, float* dst, int a2, int b2);
// src {d, h, w} -> dst {d2, h2, w2}, trilinear.
void resize_grid_trilinear(const float* src, int d, int h, int w, float* dst, int d2, int h2,
                           int w2);

// Adaptive mean-pool of a {d,h,w} volume along `axis` (0=d, 1=h, 2=w) into
// `bins` slabs; output {bins, A, B} where (A,B) are the remaining extents in
// order. Bin b covers [floor(b*n/bins), ceil((b+1)*n/bins)).
void adaptive_pool_axis(const float* x, int d, int h, int w, int axis, int bins, float* out);

enum class Plane { XY = 0, XZ = 1, YZ = 2 };

// v {c,d,h,w} = pxy[c,i,j] + pxz[c,i,k] + pyz[c,j,k] + bias[c]
void plane_merge(const float* pxy, const float* pxz, const float* pyz, const float* bias, int c,
                 int d, int h, int w, float* v);
// out {c,A,B} = sum of g {c,d,h,w} over the axis `plane` does not span.
void volume_plane_sum(const float* g, int c, int d, int h, int w, Plane plane, float* out);
// v {c,d,h,w} = p broadcast along the axis `plane` does not span.
void plane_to_volume(const float* p, int c, int d, int h, int w, Plane plane, float* v);

}  // namespace ssg::kernels
