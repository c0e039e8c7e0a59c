#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hdppt/common.hpp"

HDPPT_NAMESPACE_BEGIN

/// Dense row-major matrix. Vectors are 1 x n, scalars 1 x 1.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<Real> data;

  Mat() = default;
  Mat(int r, int c, Real fill = 0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  Mat(int r, int c, std::vector<Real> values);

  std::size_t size() const { return data.size(); }
  Real& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  Real operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<Real> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const Real> row(int r) const { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

struct Node {
  Mat value;
  Mat grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, zero-initialised on first use.
  Mat& grad_buffer();
};

/// Handle to a node in the dynamic computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(Mat value, bool requires_grad = false);

  static Var parameter(Mat value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Mat& grad() const { return node_->grad; }
  Mat& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad();
  bool requires_grad() const { return node_->requires_grad; }
  int rows() const { return node_->value.rows; }
  int cols() const { return node_->value.cols; }
  Real item() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates an op result. The backward closure receives the result node and
/// must accumulate into the parents' grad buffers. It is dropped when no
/// parent requires a gradient or recording is disabled.
Var make_result(Mat value, std::vector<Var> parents,
                std::function<void(Node&)> backward);

/// Reverse-mode sweep from a scalar (seeded with 1) or from an explicit seed
/// gradient of the same shape. Interior nodes release their graph links
/// afterwards; leaf gradients accumulate.
void backward(const Var& root);
void backward(const Var& root, const Mat& seed);

HDPPT_NAMESPACE_END
