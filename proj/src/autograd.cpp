#include "hdppt/autograd.hpp"

#include <algorithm>
#include <unordered_set>

HDPPT_NAMESPACE_BEGIN

namespace {
thread_local bool g_grad_enabled = true;
}

Mat::Mat(int r, int c, std::vector<Real> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(r) * c)
    throw ShapeError("Mat: value count does not match shape");
}

Mat& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.rows != value.rows) grad = Mat(value.rows, value.cols);
  return grad;
}

Var::Var(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_->grad.size() != 0) std::fill(node_->grad.data.begin(), node_->grad.data.end(), Real(0));
}

Real Var::item() const {
  if (node_->value.size() != 1) throw ShapeError("item() on a non-scalar");
  return node_->value.data[0];
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Mat value, std::vector<Var> parents,
                std::function<void(Node&)> backward) {
  Var out(std::move(value));
  if (!g_grad_enabled) return out;
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const Var& p) {
    return p.defined() && p.requires_grad();
  });
  if (!needs) return out;
  Node* n = out.node();
  n->requires_grad = true;
  n->parents.reserve(parents.size());
  for (auto& p : parents)
    if (p.defined()) n->parents.push_back(p.shared());
  n->backward_fn = std::move(backward);
  return out;
}

void backward(const Var& root) {
  if (root.value().size() != 1) throw ShapeError("backward() needs a scalar root or a seed");
  Mat seed(1, 1, Real(1));
  backward(root, seed);
}

void backward(const Var& root, const Mat& seed) {
  if (!root.requires_grad()) return;
  if (!seed.same_shape(root.value())) throw ShapeError("backward seed shape mismatch");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Mat& g = root.node()->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += seed.data[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (n->backward_fn) {
      n->backward_fn = nullptr;
      n->parents.clear();
    }
  }
}

HDPPT_NAMESPACE_END
