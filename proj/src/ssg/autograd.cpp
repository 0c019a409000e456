#include "ssg/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_map>
#include <unordered_set>

#include "ssg/ops.hpp"

namespace ssg {

namespace {
thread_local bool t_recording = true;
std::atomic<uint64_t> g_seq{1};
}  // namespace

namespace autograd {

bool recording() { return t_recording; }

NoGradGuard::NoGradGuard() : prev_(t_recording) { t_recording = false; }
NoGradGuard::~NoGradGuard() { t_recording = prev_; }

}  // namespace autograd

Var Var::constant(Tensor value) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = std::move(value);
  v.node_->seq = g_seq.fetch_add(1);
  return v;
}

Var Var::leaf(Tensor value) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = true;
  v.node_->leaf = true;
  return v;
}

const Tensor& Var::val() const {
  SSG_CHECK(node_ != nullptr, invalid_state, "use of undefined Var");
  return node_->value;
}

Tensor& Var::mutable_val() {
  SSG_CHECK(node_ != nullptr, invalid_state, "use of undefined Var");
  SSG_CHECK(node_->leaf || !node_->requires_grad, invalid_state,
            "in-place update of a non-leaf graph value");
  return node_->value;
}

const Tensor& Var::grad() const {
  SSG_CHECK(node_ && node_->grad.defined(), invalid_state, "grad accessed before backward");
  return node_->grad;
}

void Var::zero_grad() const {
  if (node_ && node_->grad.defined()) node_->grad.fill(0.f);
}

void Var::accumulate_grad(const Tensor& g) const {
  SSG_CHECK(node_ != nullptr, invalid_state, "use of undefined Var");
  if (!node_->grad.defined()) node_->grad = Tensor::zeros(node_->value.shape());
  SSG_CHECK(node_->grad.same_shape(g), internal, "gradient shape mismatch");
  float* dst = node_->grad.data();
  const float* src = g.data();
  const int64_t n = std::max<int64_t>(g.numel(), 1);
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

Var Var::detach() const {
  SSG_CHECK(node_ != nullptr, invalid_state, "detach of undefined Var");
  return Var::constant(node_->value);
}

Var make_op(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  bool needs = false;
  if (t_recording)
    for (const auto& p : parents)
      if (p.requires_grad()) {
        needs = true;
        break;
      }
  Var v = Var::constant(std::move(value));
  if (needs) {
    v.node_->requires_grad = true;
    v.node_->parents = std::move(parents);
    v.node_->backward = std::move(backward);
  }
  return v;
}

namespace autograd {
namespace {

// Gradients of `root` w.r.t. nodes that can reach a target. Nodes off every
// root->target path are neither visited nor differentiated.
std::unordered_map<Node*, Var> run_backward(const Var& root,
                                            const std::vector<Node*>& target_nodes) {
  SSG_CHECK(root.defined(), invalid_input, "backward on undefined Var");
  SSG_CHECK(root.numel() <= 1, invalid_input, "backward root must be scalar");

  const std::unordered_set<Node*> targets(target_nodes.begin(), target_nodes.end());

  // Post-order DFS over requires_grad parents: computes for each node whether
  // a target is reachable from it, and keeps a Var handle per node so the
  // backward pass can hand closures their `self`.
  std::unordered_map<Node*, bool> reach;
  std::unordered_map<Node*, Var> handle;
  {
    struct Frame {
      Var v;
      size_t idx;
    };
    std::unordered_set<Node*> pushed;
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    pushed.insert(root.node().get());
    handle.emplace(root.node().get(), root);
    while (!stack.empty()) {
      Frame& f = stack.back();
      Node* n = f.v.node().get();
      if (f.idx < n->parents.size()) {
        const Var& pv = n->parents[f.idx++];
        Node* p = pv.node().get();
        if (p && p->requires_grad && pushed.insert(p).second) {
          handle.emplace(p, pv);
          stack.push_back({pv, 0});
        }
        continue;
      }
      bool r = targets.count(n) > 0;
      if (!r) {
        for (const auto& pv : n->parents) {
          Node* p = pv.node().get();
          if (!p || !p->requires_grad) continue;
          auto it = reach.find(p);
          if (it != reach.end() && it->second) {
            r = true;
            break;
          }
        }
      }
      reach[n] = r;
      stack.pop_back();
    }
  }

  std::unordered_map<Node*, Var> grads;
  if (!reach[root.node().get()]) return grads;

  // Creation order is a topological order (parents precede children), so a
  // descending-seq sweep sees every node after all of its consumers.
  std::vector<Node*> order;
  order.reserve(reach.size());
  for (const auto& [n, r] : reach)
    if (r) order.push_back(n);
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->seq > b->seq; });

  grads[root.node().get()] = ops::ones_like(root);

  std::vector<char> needed;
  std::vector<Var> parent_grads;
  for (Node* n : order) {
    auto git = grads.find(n);
    if (git == grads.end()) continue;
    if (!n->backward || n->parents.empty()) continue;
    const Var gout = git->second;
    if (targets.count(n) == 0) grads.erase(git);  // free non-target grads as we go

    needed.assign(n->parents.size(), 0);
    bool any = false;
    for (size_t i = 0; i < n->parents.size(); ++i) {
      Node* p = n->parents[i].node().get();
      if (!p || !p->requires_grad) continue;
      auto it = reach.find(p);
      if (it != reach.end() && it->second) {
        needed[i] = 1;
        any = true;
      }
    }
    if (!any) continue;

    parent_grads.assign(n->parents.size(), Var());
    n->backward(gout, handle.at(n), n->parents, needed, parent_grads);
    for (size_t i = 0; i < n->parents.size(); ++i) {
      if (!needed[i]) continue;
      SSG_CHECK(parent_grads[i].defined(), internal, "backward closure missed a needed parent");
      Node* p = n->parents[i].node().get();
      auto it = grads.find(p);
      if (it == grads.end())
        grads.emplace(p, parent_grads[i]);
      else
        it->second = ops::add(it->second, parent_grads[i]);
    }
  }
  return grads;
}

}  // namespace

void backward(const Var& root, const std::vector<Var>& targets) {
  std::vector<Node*> tn;
  tn.reserve(targets.size());
  for (const auto& t : targets) {
    SSG_CHECK(t.defined() && t.is_leaf(), invalid_input, "backward targets must be leaves");
    tn.push_back(t.node().get());
  }
  NoGradGuard ng;  // first-order gradients are plain values
  auto grads = run_backward(root, tn);
  for (const auto& t : targets) {
    auto it = grads.find(t.node().get());
    if (it != grads.end()) t.accumulate_grad(it->second.val());
  }
}

std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, bool create_graph) {
  std::vector<Node*> tn;
  tn.reserve(wrt.size());
  for (const auto& t : wrt) {
    SSG_CHECK(t.defined(), invalid_input, "grad wrt undefined Var");
    tn.push_back(t.node().get());
  }
  std::unordered_map<Node*, Var> grads;
  if (create_graph) {
    grads = run_backward(root, tn);
  } else {
    NoGradGuard ng;
    grads = run_backward(root, tn);
  }
  std::vector<Var> out(wrt.size());
  for (size_t i = 0; i < wrt.size(); ++i) {
    auto it = grads.find(tn[i]);
    if (it != grads.end()) out[i] = it->second;
  }
  return out;
}

}  // namespace autograd
}  // namespace ssg
