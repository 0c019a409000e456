#include "ssg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>

namespace ssg {
namespace {

std::atomic<int64_t> g_live{0};
std::atomic<int64_t> g_peak{0};

void track_alloc(int64_t bytes) {
  int64_t live = g_live.fetch_add(bytes) + bytes;
  int64_t peak = g_peak.load();
  while (live > peak && !g_peak.compare_exchange_weak(peak, live)) {
  }
}

std::shared_ptr<float[]> alloc_floats(int64_t n) {
  if (n == 0) n = 1;  // rank-0 tensors still own one element
  float* p = new float[size_t(n)];
  int64_t bytes = n * int64_t(sizeof(float));
  track_alloc(bytes);
  return std::shared_ptr<float[]>(p, [bytes](float* q) {
    g_live.fetch_sub(bytes);
    delete[] q;
  });
}

}  // namespace

int64_t AllocStats::live_bytes() { return g_live.load(); }
int64_t AllocStats::peak_bytes() { return g_peak.load(); }
void AllocStats::reset_peak() { g_peak.store(g_live.load()); }

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    SSG_CHECK(d >= 0, invalid_input, "negative tensor extent");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  numel_ = shape_numel(shape_);
  buf_ = alloc_floats(numel_);
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
  Tensor t(std::move(shape));
  std::memset(t.data(), 0, size_t(std::max<int64_t>(t.numel_, 1)) * sizeof(float));
  return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(float value) {
  Tensor t(std::vector<int64_t>{});
  t.data()[0] = value;
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, const std::vector<float>& values) {
  Tensor t(std::move(shape));
  SSG_CHECK(int64_t(values.size()) == t.numel(), invalid_input, "tensor init size mismatch");
  std::memcpy(t.data(), values.data(), values.size() * sizeof(float));
  return t;
}

Tensor Tensor::clone() const {
  SSG_CHECK(defined(), invalid_state, "clone of undefined tensor");
  Tensor t(shape_);
  std::memcpy(t.data(), data(), size_t(std::max<int64_t>(numel_, 1)) * sizeof(float));
  return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  SSG_CHECK(defined(), invalid_state, "reshape of undefined tensor");
  SSG_CHECK(shape_numel(shape) == numel_, invalid_input,
            "reshape element count mismatch: " + shape_str(shape_) + " -> " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.numel_ = numel_;
  t.buf_ = buf_;
  return t;
}

void Tensor::fill(float value) {
  float* p = data();
  for (int64_t i = 0; i < std::max<int64_t>(numel_, 1); ++i) p[i] = value;
}

float Tensor::item() const {
  SSG_CHECK(defined() && numel_ <= 1, invalid_state, "item() on non-scalar tensor");
  return data()[0];
}

}  // namespace ssg
