#include <algorithm>
#include <cmath>
#include <limits>

#include "hdppt/kernels.hpp"

HDPPT_NAMESPACE_BEGIN
namespace kernels {

std::size_t AttnLayout::prob_size() const {
  std::size_t n = 0;
  for (const auto& s : segments)
    n += static_cast<std::size_t>(heads) * s.q_len * s.k_len;
  return n;
}

namespace reference {

void gemm(Trans ta, Trans tb, int m, int n, int k, const Real* a, int lda,
          const Real* b, int ldb, Real* c, int ldc, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      Real s = 0;
      for (int p = 0; p < k; ++p) {
        const Real av = ta == Trans::kNo ? a[i * lda + p] : a[p * lda + i];
        const Real bv = tb == Trans::kNo ? b[p * ldb + j] : b[j * ldb + p];
        s += av * bv;
      }
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + s : s;
    }
  }
}

void layer_norm_forward(int rows, int cols, const Real* x, const Real* gamma,
                        const Real* beta, Real eps, Real* y, Real* mean,
                        Real* rstd) {
  for (int r = 0; r < rows; ++r) {
    const Real* xr = x + static_cast<std::size_t>(r) * cols;
    Real mu = 0;
    for (int c = 0; c < cols; ++c) mu += xr[c];
    mu /= cols;
    Real var = 0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= cols;
    const Real rs = Real(1) / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    Real* yr = y + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) yr[c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
  }
}

void layer_norm_backward(int rows, int cols, const Real* x, const Real* gamma,
                         const Real* mean, const Real* rstd, const Real* dy,
                         Real* dx, Real* dgamma, Real* dbeta) {
  for (int r = 0; r < rows; ++r) {
    const Real* xr = x + static_cast<std::size_t>(r) * cols;
    const Real* dyr = dy + static_cast<std::size_t>(r) * cols;
    Real* dxr = dx + static_cast<std::size_t>(r) * cols;
    Real sum_g = 0, sum_gx = 0;
    for (int c = 0; c < cols; ++c) {
      const Real xhat = (xr[c] - mean[r]) * rstd[r];
      const Real g = dyr[c] * gamma[c];
      sum_g += g;
      sum_gx += g * xhat;
      dgamma[c] += dyr[c] * xhat;
      dbeta[c] += dyr[c];
    }
    sum_g /= cols;
    sum_gx /= cols;
    for (int c = 0; c < cols; ++c) {
      const Real xhat = (xr[c] - mean[r]) * rstd[r];
      dxr[c] += rstd[r] * (dyr[c] * gamma[c] - sum_g - xhat * sum_gx);
    }
  }
}

void softmax_cross_entropy(int rows, int cols, const Real* logits,
                           const int* targets, Real* probs, Real* row_loss) {
  for (int r = 0; r < rows; ++r) {
    if (targets[r] < 0) {
      row_loss[r] = 0;
      continue;
    }
    const Real* lr = logits + static_cast<std::size_t>(r) * cols;
    Real* pr = probs + static_cast<std::size_t>(r) * cols;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (int c = 0; c < cols; ++c) mx = std::max(mx, lr[c]);
    Real sum = 0;
    for (int c = 0; c < cols; ++c) {
      pr[c] = std::exp(lr[c] - mx);
      sum += pr[c];
    }
    for (int c = 0; c < cols; ++c) pr[c] /= sum;
    row_loss[r] = mx + std::log(sum) - lr[targets[r]];
  }
}

namespace {

int visible_keys(const AttnLayout& layout, const AttnSegment& s, int i) {
  if (!layout.causal) return s.k_len;
  return std::clamp(i + s.causal_offset + 1, 0, s.k_len);
}

}  // namespace

void attention_forward(const AttnLayout& layout, int width, const Real* q,
                       const Real* k, const Real* v, Real* out, Real* probs) {
  const int dh = width / layout.heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  std::size_t base = 0;
  for (const auto& s : layout.segments) {
    for (int h = 0; h < layout.heads; ++h) {
      Real* p = probs + base + static_cast<std::size_t>(h) * s.q_len * s.k_len;
      for (int i = 0; i < s.q_len; ++i) {
        const std::size_t qrow = static_cast<std::size_t>(s.q_begin + i * s.q_stride);
        const Real* qi = q + qrow * width + h * dh;
        Real* pi = p + static_cast<std::size_t>(i) * s.k_len;
        const int lim = visible_keys(layout, s, i);
        Real mx = -std::numeric_limits<Real>::infinity();
        for (int j = 0; j < lim; ++j) {
          const Real* kj = k + static_cast<std::size_t>(s.k_begin + j * s.k_stride) * width + h * dh;
          Real dot = 0;
          for (int c = 0; c < dh; ++c) dot += qi[c] * kj[c];
          pi[j] = dot * scale;
          mx = std::max(mx, pi[j]);
        }
        Real sum = 0;
        for (int j = 0; j < lim; ++j) {
          pi[j] = std::exp(pi[j] - mx);
          sum += pi[j];
        }
        for (int j = 0; j < lim; ++j) pi[j] /= sum;
        for (int j = lim; j < s.k_len; ++j) pi[j] = 0;
        Real* oi = out + qrow * width + h * dh;
        for (int c = 0; c < dh; ++c) oi[c] = 0;
        for (int j = 0; j < lim; ++j) {
          const Real* vj = v + static_cast<std::size_t>(s.k_begin + j * s.k_stride) * width + h * dh;
          for (int c = 0; c < dh; ++c) oi[c] += pi[j] * vj[c];
        }
      }
    }
    base += static_cast<std::size_t>(layout.heads) * s.q_len * s.k_len;
  }
}

void attention_backward(const AttnLayout& layout, int width, const Real* q,
                        const Real* k, const Real* v, const Real* probs,
                        const Real* dout, Real* dq, Real* dk, Real* dv) {
  const int dh = width / layout.heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  std::vector<Real> dp;
  std::size_t base = 0;
  for (const auto& s : layout.segments) {
    dp.assign(s.k_len, 0);
    for (int h = 0; h < layout.heads; ++h) {
      const Real* p = probs + base + static_cast<std::size_t>(h) * s.q_len * s.k_len;
      for (int i = 0; i < s.q_len; ++i) {
        const std::size_t qrow = static_cast<std::size_t>(s.q_begin + i * s.q_stride);
        const Real* qi = q + qrow * width + h * dh;
        const Real* gi = dout + qrow * width + h * dh;
        Real* dqi = dq + qrow * width + h * dh;
        const Real* pi = p + static_cast<std::size_t>(i) * s.k_len;
        const int lim = visible_keys(layout, s, i);
        Real weighted = 0;
        for (int j = 0; j < lim; ++j) {
          const std::size_t krow = static_cast<std::size_t>(s.k_begin + j * s.k_stride);
          const Real* vj = v + krow * width + h * dh;
          Real* dvj = dv + krow * width + h * dh;
          Real dot = 0;
          for (int c = 0; c < dh; ++c) {
            dot += gi[c] * vj[c];
            dvj[c] += pi[j] * gi[c];
          }
          dp[j] = dot;
          weighted += pi[j] * dot;
        }
        for (int j = 0; j < lim; ++j) {
          const std::size_t krow = static_cast<std::size_t>(s.k_begin + j * s.k_stride);
          const Real ds = pi[j] * (dp[j] - weighted) * scale;
          const Real* kj = k + krow * width + h * dh;
          Real* dkj = dk + krow * width + h * dh;
          for (int c = 0; c < dh; ++c) {
            dqi[c] += ds * kj[c];
            dkj[c] += ds * qi[c];
          }
        }
      }
    }
    base += static_cast<std::size_t>(layout.heads) * s.q_len * s.k_len;
  }
}

namespace {
constexpr Real kGeluC = Real(0.7978845608028654);
constexpr Real kGeluA = Real(0.044715);
}  // namespace

void gelu_forward(long n, const Real* x, Real* y) {
  for (long i = 0; i < n; ++i) {
    const Real v = x[i];
    y[i] = Real(0.5) * v * (Real(1) + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
}

void gelu_backward(long n, const Real* x, const Real* dy, Real* dx) {
  for (long i = 0; i < n; ++i) {
    const Real v = x[i];
    const Real t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    const Real du = kGeluC * (Real(1) + Real(3) * kGeluA * v * v);
    dx[i] += dy[i] * (Real(0.5) * (Real(1) + t) + Real(0.5) * v * (Real(1) - t * t) * du);
  }
}

void sigmoid_forward(long n, const Real* x, Real* y) {
  for (long i = 0; i < n; ++i) y[i] = Real(1) / (Real(1) + std::exp(-x[i]));
}

}  // namespace reference
}  // namespace kernels
HDPPT_NAMESPACE_END
