#include "hdppt/fsq.hpp"

#include <algorithm>
#include <cmath>

#include "hdppt/ops.hpp"

HDPPT_NAMESPACE_BEGIN

FsqLevels::FsqLevels(std::vector<int> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw ConfigError("FSQ levels must be non-empty");
  size_ = 1;
  for (int l : levels_) {
    if (l < 2) throw ConfigError("every FSQ level count must be >= 2");
    size_ *= l;
  }
}

std::vector<Real> fsq_bound(std::span<const Real> z) {
  std::vector<Real> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) throw InvalidInput("fsq_bound: non-finite input");
    out[i] = std::tanh(z[i]);
  }
  return out;
}

Real fsq_grid_value(int k, int levels) {
  return static_cast<Real>(-1.0 + (2.0 * k + 1.0) / levels);
}

int fsq_nearest_code(Real bounded, int levels) {
  // Continuous position on the grid; ceil(t - 0.5) rounds half down.
  const double t = (static_cast<double>(bounded) + 1.0) * levels / 2.0 - 0.5;
  const int k = static_cast<int>(std::ceil(t - 0.5));
  return std::clamp(k, 0, levels - 1);
}

Quantized fsq_snap(std::span<const Real> bounded, const FsqLevels& levels) {
  if (static_cast<int>(bounded.size()) != levels.dims()) throw ShapeError("FSQ: latent length does not match levels");
  Quantized q;
  q.code.resize(bounded.size());
  q.value.resize(bounded.size());
  for (int i = 0; i < levels.dims(); ++i) {
    q.code[i] = fsq_nearest_code(bounded[i], levels[i]);
    q.value[i] = fsq_grid_value(q.code[i], levels[i]);
  }
  return q;
}

Quantized fsq_quantize(std::span<const Real> z, const FsqLevels& levels) {
  if (static_cast<int>(z.size()) != levels.dims()) throw ShapeError("FSQ: latent length does not match levels");
  const auto b = fsq_bound(z);
  return fsq_snap(b, levels);
}

std::int64_t fsq_code_to_index(std::span<const int> code, const FsqLevels& levels) {
  if (static_cast<int>(code.size()) != levels.dims()) throw ShapeError("FSQ: code length does not match levels");
  std::int64_t idx = 0;
  for (int i = 0; i < levels.dims(); ++i) {
    if (code[i] < 0 || code[i] >= levels[i]) throw InvalidInput("FSQ: code component out of range");
    idx = idx * levels[i] + code[i];
  }
  return idx;
}

FsqCode fsq_index_to_code(std::int64_t index, const FsqLevels& levels) {
  if (index < 0 || index >= levels.codebook_size()) throw InvalidInput("FSQ: index out of range");
  FsqCode code(levels.dims());
  for (int i = levels.dims() - 1; i >= 0; --i) {
    code[i] = static_cast<int>(index % levels[i]);
    index /= levels[i];
  }
  return code;
}

std::vector<Real> fsq_index_to_value(std::int64_t index, const FsqLevels& levels) {
  const auto code = fsq_index_to_code(index, levels);
  std::vector<Real> v(code.size());
  for (int i = 0; i < levels.dims(); ++i) v[i] = fsq_grid_value(code[i], levels[i]);
  return v;
}

Var fsq_quantize_ste(const Var& z, const FsqLevels& levels) {
  if (z.cols() != levels.dims()) throw ShapeError("FSQ: latent width does not match levels");
  const Var bounded = ops::tanh(z);
  const Mat& b = bounded.value();
  Mat q(b.rows, b.cols);
  for (int r = 0; r < b.rows; ++r)
    for (int c = 0; c < b.cols; ++c)
      q(r, c) = fsq_grid_value(fsq_nearest_code(b(r, c), levels[c]), levels[c]);
  // value = bounded + stopgrad(q - bounded): gradient passes straight through.
  return make_result(std::move(q), {bounded}, [bounded](Node& self) {
    Var bv = bounded;
    Mat& g = bv.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
  });
}

std::vector<int> fsq_rows_to_indices(const Mat& values, const FsqLevels& levels) {
  if (values.cols != levels.dims()) throw ShapeError("FSQ: value width does not match levels");
  std::vector<int> out(values.rows);
  FsqCode code(levels.dims());
  for (int r = 0; r < values.rows; ++r) {
    for (int c = 0; c < values.cols; ++c) code[c] = fsq_nearest_code(values(r, c), levels[c]);
    out[r] = static_cast<int>(fsq_code_to_index(code, levels));
  }
  return out;
}

Mat fsq_indices_to_rows(std::span<const int> indices, const FsqLevels& levels) {
  Mat out(static_cast<int>(indices.size()), levels.dims());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto v = fsq_index_to_value(indices[r], levels);
    std::copy(v.begin(), v.end(), out.row(static_cast<int>(r)).begin());
  }
  return out;
}

HDPPT_NAMESPACE_END
