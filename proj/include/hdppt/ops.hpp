#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "hdppt/autograd.hpp"
#include "hdppt/kernels.hpp"

HDPPT_NAMESPACE_BEGIN

/// Contiguous row range [begin, begin + length) of a packed batch.
struct RowSegment {
  int begin = 0;
  int length = 0;
};

namespace ops {

Var constant(Mat m);

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
/// x * w (+ bias broadcast over rows when `bias` is defined)
Var linear(const Var& x, const Var& w, const Var& bias);

/// Elementwise sum; `b` may also be a single row broadcast over a's rows.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
/// a * s where s is a 1 x 1 variable.
Var mul_scalar(const Var& a, const Var& s);

Var exp(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var silu(const Var& a);
/// tanh-approximated GELU.
Var gelu(const Var& a);
/// Gated linear unit over column halves: left * sigmoid(right).
Var glu(const Var& a);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps = Real(1e-5));

Var embedding(const Var& table, std::span<const int> ids);
Var gather_rows(const Var& x, std::span<const int> rows);
Var slice_rows(const Var& x, int begin, int count);
Var slice_cols(const Var& x, int begin, int end);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var transpose(const Var& x);
/// Tiles x vertically `times` times.
Var repeat_rows(const Var& x, int times);
/// Rows flagged in `which` are replaced by the single row `fill`.
Var replace_rows(const Var& x, const Var& fill, std::span<const std::uint8_t> which);

Var attention(const Var& q, const Var& k, const Var& v,
              std::shared_ptr<const kernels::AttnLayout> layout);

/// Per-channel 1-D convolution along rows, centred, zero-padded at the
/// boundaries of every segment. weight is kernel x channels.
Var depthwise_conv1d(const Var& x, const Var& weight, const Var& bias,
                     std::span<const RowSegment> segments);

/// Mean cross-entropy over rows with target >= 0.
Var cross_entropy(const Var& logits, std::span<const int> targets);

Var segment_mean(const Var& x, std::span<const RowSegment> segments);
Var l2_normalize_rows(const Var& x, Real eps = Real(1e-12));
Var sum(const Var& x);
Var mean(const Var& x);

}  // namespace ops

std::vector<int> argmax_rows(const Mat& m);

HDPPT_NAMESPACE_END
