#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hdppt/autograd.hpp"

HDPPT_NAMESPACE_BEGIN

/// Per-dimension level counts of a finite scalar quantizer. The implicit
/// codebook is the product grid; its size is the product of the levels.
class FsqLevels {
 public:
  FsqLevels() = default;
  explicit FsqLevels(std::vector<int> levels);

  int dims() const { return static_cast<int>(levels_.size()); }
  int operator[](int i) const { return levels_[i]; }
  const std::vector<int>& values() const { return levels_; }
  std::int64_t codebook_size() const { return size_; }

  friend bool operator==(const FsqLevels&, const FsqLevels&) = default;

 private:
  std::vector<int> levels_;
  std::int64_t size_ = 0;
};

using FsqCode = std::vector<int>;

struct Quantized {
  FsqCode code;
  std::vector<Real> value;
};

/// Per-dimension tanh squashing into (-1, 1).
std::vector<Real> fsq_bound(std::span<const Real> z);

/// Grid value of code k at level count L: -1 + (2k + 1) / L.
Real fsq_grid_value(int k, int levels);

/// Nearest grid code for an already-bounded value; exact midpoints go to the
/// lower code.
int fsq_nearest_code(Real bounded, int levels);

/// Bounds `z` and snaps each dimension to its nearest grid point.
Quantized fsq_quantize(std::span<const Real> z, const FsqLevels& levels);
/// Snaps already-bounded values without applying the squashing function.
Quantized fsq_snap(std::span<const Real> bounded, const FsqLevels& levels);

/// Big-endian mixed-radix index of a code.
std::int64_t fsq_code_to_index(std::span<const int> code, const FsqLevels& levels);
FsqCode fsq_index_to_code(std::int64_t index, const FsqLevels& levels);
std::vector<Real> fsq_index_to_value(std::int64_t index, const FsqLevels& levels);

/// Differentiable quantizer over rows of `z` (one latent vector per row):
/// forward value is the on-grid dequantized tanh(z); the snap is transparent
/// to gradients, so dL/dz equals the gradient through tanh alone.
Var fsq_quantize_ste(const Var& z, const FsqLevels& levels);

/// Row-wise flat indices of on-grid values (as produced by fsq_quantize_ste).
std::vector<int> fsq_rows_to_indices(const Mat& values, const FsqLevels& levels);
/// Row-wise dequantized grid values for flat indices.
Mat fsq_indices_to_rows(std::span<const int> indices, const FsqLevels& levels);

HDPPT_NAMESPACE_END
