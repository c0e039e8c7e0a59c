#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hdppt/common.hpp"

HDPPT_NAMESPACE_BEGIN

// Dense row-major kernels used by the autograd ops. The functions in
// `kernels` are OpenMP-parallel; `kernels::reference` holds plain serial
// versions with the same signatures that the tests compare against.
namespace kernels {

enum class Trans { kNo, kYes };

// One attention group: a run of query rows attending to a run of key rows.
// Row r of the group lives at `begin + r * stride` in the packed matrix.
// With causal masking, query i sees key j only when j <= i + causal_offset.
struct AttnSegment {
  int q_begin = 0;
  int q_len = 0;
  int q_stride = 1;
  int k_begin = 0;
  int k_len = 0;
  int k_stride = 1;
  int causal_offset = 0;
};

struct AttnLayout {
  std::vector<AttnSegment> segments;
  bool causal = false;
  int heads = 1;

  // Number of stored probabilities (sum over segments of heads*q_len*k_len).
  std::size_t prob_size() const;
};

/// C (m x n) = op(A) * op(B), or C += ... when `accumulate`.
/// op(A) is m x k, op(B) is k x n; lda/ldb/ldc are row strides of the
/// stored matrices.
void gemm(Trans ta, Trans tb, int m, int n, int k, const Real* a, int lda,
          const Real* b, int ldb, Real* c, int ldc, bool accumulate);

void layer_norm_forward(int rows, int cols, const Real* x, const Real* gamma,
                        const Real* beta, Real eps, Real* y, Real* mean,
                        Real* rstd);
void layer_norm_backward(int rows, int cols, const Real* x, const Real* gamma,
                         const Real* mean, const Real* rstd, const Real* dy,
                         Real* dx, Real* dgamma, Real* dbeta);

/// Row-wise log-softmax cross-entropy. Rows whose target is negative are
/// ignored: their loss is zero and their probabilities are left untouched.
/// Writes softmax probabilities to `probs` and per-row losses to `row_loss`.
void softmax_cross_entropy(int rows, int cols, const Real* logits,
                           const int* targets, Real* probs, Real* row_loss);

/// Multi-head scaled dot-product attention. q/k/v/out have `width` columns
/// split evenly across layout.heads. `probs` must hold layout.prob_size().
void attention_forward(const AttnLayout& layout, int width, const Real* q,
                       const Real* k, const Real* v, Real* out, Real* probs);
/// Accumulates into dq, dk, dv.
void attention_backward(const AttnLayout& layout, int width, const Real* q,
                        const Real* k, const Real* v, const Real* probs,
                        const Real* dout, Real* dq, Real* dk, Real* dv);

/// Elementwise activations over n values. Backward variants accumulate
/// dy * f'(x) into dx. GELU uses the tanh approximation.
void gelu_forward(long n, const Real* x, Real* y);
void gelu_backward(long n, const Real* x, const Real* dy, Real* dx);
void sigmoid_forward(long n, const Real* x, Real* y);

namespace reference {

void gemm(Trans ta, Trans tb, int m, int n, int k, const Real* a, int lda,
          const Real* b, int ldb, Real* c, int ldc, bool accumulate);
void layer_norm_forward(int rows, int cols, const Real* x, const Real* gamma,
                        const Real* beta, Real eps, Real* y, Real* mean,
                        Real* rstd);
void layer_norm_backward(int rows, int cols, const Real* x, const Real* gamma,
                         const Real* mean, const Real* rstd, const Real* dy,
                         Real* dx, Real* dgamma, Real* dbeta);
void softmax_cross_entropy(int rows, int cols, const Real* logits,
                           const int* targets, Real* probs, Real* row_loss);
void attention_forward(const AttnLayout& layout, int width, const Real* q,
                       const Real* k, const Real* v, Real* out, Real* probs);
void attention_backward(const AttnLayout& layout, int width, const Real* q,
                        const Real* k, const Real* v, const Real* probs,
                        const Real* dout, Real* dq, Real* dk, Real* dv);
void gelu_forward(long n, const Real* x, Real* y);
void gelu_backward(long n, const Real* x, const Real* dy, Real* dx);
void sigmoid_forward(long n, const Real* x, Real* y);

}  // namespace reference

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace kernels

HDPPT_NAMESPACE_END
