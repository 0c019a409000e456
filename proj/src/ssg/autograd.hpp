#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ssg/tensor.hpp"

namespace ssg {

class Var;

namespace autograd {

// Whether newly created ops record the graph (thread-local).
bool recording();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool prev_;
};

// Accumulates d(root)/d(target) into each target's grad buffer. Gradients are
// computed outside recording mode, so this is the cheap first-order pass.
void backward(const Var& root, const std::vector<Var>& targets);

// Returns d(root)/d(wrt[i]), aligned with `wrt`; undefined Var where root
// does not depend on the entry. With create_graph the returned gradients are
// themselves differentiable, which is what the gradient penalty needs.
std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, bool create_graph);

}  // namespace autograd

// Backward closure contract: given the upstream gradient `gout`, the node's
// own output and its parents, fill `out[i]` with the gradient for parent i
// for every i with needed[i] set (others may stay undefined). Closures must
// express their math through the public op functions so the chain stays
// differentiable, and must not capture Vars (the engine passes parents in)
// so graphs cannot form ownership cycles.
using BackwardFn = std::function<void(const Var& gout, const Var& self,
                                      const std::vector<Var>& parents,
                                      const std::vector<char>& needed, std::vector<Var>& out)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  bool leaf = false;
  uint64_t seq = 0;  // creation order; parents always precede children
  std::vector<Var> parents;
  BackwardFn backward;
  Tensor grad;  // leaf accumulator, lazily allocated
};

// Handle to a node in the computation graph. Copies share the node.
class Var {
public:
  Var() = default;
  // Constant (non-recorded) value.
  static Var constant(Tensor value);
  // Trainable leaf; backward() accumulates into grad().
  static Var leaf(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& val() const;
  Tensor& mutable_val();  // optimizer updates; leaves only
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_ && node_->leaf; }

  const Tensor& grad() const;
  bool has_grad() const { return node_ && node_->grad.defined(); }
  // Node-level mutations; usable through const handles.
  void zero_grad() const;
  void accumulate_grad(const Tensor& g) const;

  // Detached constant view sharing the same tensor storage.
  Var detach() const;

  const std::vector<int64_t>& shape() const { return val().shape(); }
  int64_t numel() const { return val().numel(); }

  std::shared_ptr<Node> node() const { return node_; }

private:
  std::shared_ptr<Node> node_;
  friend Var make_op(Tensor value, std::vector<Var> parents, BackwardFn backward);
};

// Records an op result. Drops the parents and closure when no parent needs
// gradients or recording is off.
Var make_op(Tensor value, std::vector<Var> parents, BackwardFn backward);

}  // namespace ssg
