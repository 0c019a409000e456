#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ssg/common.hpp"

namespace ssg {

// Live/peak byte counters for tensor storage. The benchmark command reports
// peak working-set per synthesis call from these, so they must cover every
// tensor allocation in the core.
struct AllocStats {
  static int64_t live_bytes();
  static int64_t peak_bytes();
  static void reset_peak();
};

// Dense row-major float32 tensor. Storage is shared between copies and
// reshapes; clone() is the only deep copy.
class Tensor {
public:
  Tensor() = default;
  // Uninitialized storage: every producer is expected to overwrite it fully.
  explicit Tensor(std::vector<int64_t> shape);

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, float value);
  static Tensor scalar(float value);
  static Tensor from(std::vector<int64_t> shape, const std::vector<float>& values);

  bool defined() const { return buf_ != nullptr; }
  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return int(shape_.size()); }
  int64_t dim(int i) const { return shape_[size_t(i)]; }
  int64_t numel() const { return numel_; }

  float* data() { return buf_.get(); }
  const float* data() const { return buf_.get(); }

  Tensor clone() const;
  // Shares storage; element count must match.
  Tensor reshaped(std::vector<int64_t> shape) const;
  void fill(float value);
  float item() const;  // rank-0 / single-element access

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
  std::vector<int64_t> shape_;
  std::shared_ptr<float[]> buf_;
  int64_t numel_ = 0;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

}  // namespace ssg
