#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <type_traits>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "hdppt/kernels.hpp"

HDPPT_NAMESPACE_BEGIN
namespace kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

constexpr long kParallelWork = 1L << 15;
constexpr int kTileRows = 4;
constexpr int kTileCols = 32;

using VecF = float __attribute__((vector_size(32)));
using VecI = std::int32_t __attribute__((vector_size(32)));

// Cephes-style expf on 8 lanes, about 1e-7 relative error.
inline VecF exp_lanes(VecF v) {
  const VecF hi = VecF{} + 88.3762626647949f;
  const VecF lo = VecF{} - 87.3365447504019f;
  v = v < lo ? lo : v;
  v = v > hi ? hi : v;
  const VecF t = v * 1.44269504088896341f;
  const VecI n = __builtin_convertvector(t + (t >= 0 ? VecF{} + 0.5f : VecF{} - 0.5f), VecI);
  const VecF fx = __builtin_convertvector(n, VecF);
  const VecF r = v - fx * 0.693359375f + fx * 2.12194440e-4f;
  VecF y = VecF{} + 1.9875691500E-4f;
  y = y * r + 1.3981999507E-3f;
  y = y * r + 8.3334519073E-3f;
  y = y * r + 4.1665795894E-2f;
  y = y * r + 1.6666665459E-1f;
  y = y * r + 5.0000001201E-1f;
  y = y * r * r + r + 1.0f;
  const VecI e = (n + 127) << 23;
  VecF scale;
  std::memcpy(&scale, &e, sizeof(scale));
  return y * scale;
}

// x[i] = exp(x[i] - shift). The float build uses the polynomial above; the
// double build keeps std::exp so finite-difference checks see a correctly
// rounded function.
[[maybe_unused]] inline void exp_shifted(float* x, int n, float shift) {
  constexpr int kW = 8;
  int i = 0;
  for (; i + kW <= n; i += kW) {
    VecF v;
    std::memcpy(&v, x + i, sizeof(v));
    v = exp_lanes(v - shift);
    std::memcpy(x + i, &v, sizeof(v));
  }
  if (i < n) {
    float tail[kW] = {};
    std::copy(x + i, x + n, tail);
    VecF v;
    std::memcpy(&v, tail, sizeof(v));
    v = exp_lanes(v - shift);
    std::memcpy(tail, &v, sizeof(v));
    std::copy(tail, tail + (n - i), x + i);
  }
}

[[maybe_unused]] inline void exp_shifted(double* x, int n, double shift) {
  for (int i = 0; i < n; ++i) x[i] = std::exp(x[i] - shift);
}

// Register tile: kTileRows x NC accumulators over the full depth, written
// with vector extensions; the auto-vectorizer otherwise shuffles across rows.
using Vec = Real __attribute__((vector_size(32)));
constexpr int kLanes = static_cast<int>(sizeof(Vec) / sizeof(Real));

inline Vec load_vec(const Real* p) {
  Vec v;
  std::memcpy(&v, p, sizeof(Vec));
  return v;
}

template <int NC>
inline void tile_fixed(int k, const Real* a, int lda, const Real* b, int ldb,
                       Real* c, int ldc, bool accumulate) {
  static_assert(NC % kLanes == 0);
  constexpr int kV = NC / kLanes;
  Vec acc[kTileRows][kV];
  for (int r = 0; r < kTileRows; ++r)
    for (int v = 0; v < kV; ++v) acc[r][v] = Vec{};
  const Real* a0 = a;
  const Real* a1 = a + lda;
  const Real* a2 = a + 2 * static_cast<std::size_t>(lda);
  const Real* a3 = a + 3 * static_cast<std::size_t>(lda);
  for (int p = 0; p < k; ++p) {
    const Real* bp = b + static_cast<std::size_t>(p) * ldb;
    Vec bv[kV];
    for (int v = 0; v < kV; ++v) bv[v] = load_vec(bp + v * kLanes);
    const Real av[kTileRows] = {a0[p], a1[p], a2[p], a3[p]};
    for (int r = 0; r < kTileRows; ++r)
      for (int v = 0; v < kV; ++v) acc[r][v] += av[r] * bv[v];
  }
  for (int r = 0; r < kTileRows; ++r) {
    Real* cr = c + static_cast<std::size_t>(r) * ldc;
    for (int v = 0; v < kV; ++v) {
      Vec out = acc[r][v];
      if (accumulate) out += load_vec(cr + v * kLanes);
      std::memcpy(cr + v * kLanes, &out, sizeof(Vec));
    }
  }
}

inline void tile_full(int k, const Real* a, int lda, const Real* b, int ldb,
                      Real* c, int ldc, bool accumulate) {
  tile_fixed<kTileCols>(k, a, lda, b, ldb, c, ldc, accumulate);
}

// Ragged edge tile of mi x nj (mi <= kTileRows, nj <= kTileCols).
inline void tile_edge(int mi, int nj, int k, const Real* a, int lda,
                      const Real* b, int ldb, Real* c, int ldc,
                      bool accumulate) {
  if (mi == kTileRows && nj == 16) return tile_fixed<16>(k, a, lda, b, ldb, c, ldc, accumulate);
  if (mi == kTileRows && nj == 8) return tile_fixed<8>(k, a, lda, b, ldb, c, ldc, accumulate);
  Real acc[kTileRows][kTileCols] = {};
  for (int p = 0; p < k; ++p) {
    const Real* bp = b + static_cast<std::size_t>(p) * ldb;
    for (int r = 0; r < mi; ++r) {
      const Real av = a[static_cast<std::size_t>(r) * lda + p];
      for (int j = 0; j < nj; ++j) acc[r][j] += av * bp[j];
    }
  }
  for (int r = 0; r < mi; ++r) {
    Real* cr = c + static_cast<std::size_t>(r) * ldc;
    for (int j = 0; j < nj; ++j) cr[j] = accumulate ? cr[j] + acc[r][j] : acc[r][j];
  }
}

void gemm_nn(int m, int n, int k, const Real* a, int lda, const Real* b,
             int ldb, Real* c, int ldc, bool accumulate) {
  const int row_tiles = (m + kTileRows - 1) / kTileRows;
  const int col_tiles = (n + kTileCols - 1) / kTileCols;
  const long work = static_cast<long>(m) * n * k;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
  for (int rt = 0; rt < row_tiles; ++rt) {
    for (int ct = 0; ct < col_tiles; ++ct) {
      const int i0 = rt * kTileRows;
      const int j0 = ct * kTileCols;
      const int mi = std::min(kTileRows, m - i0);
      const int nj = std::min(kTileCols, n - j0);
      const Real* ai = a + static_cast<std::size_t>(i0) * lda;
      const Real* bj = b + j0;
      Real* cij = c + static_cast<std::size_t>(i0) * ldc + j0;
      if (mi == kTileRows && nj == kTileCols)
        tile_full(k, ai, lda, bj, ldb, cij, ldc, accumulate);
      else
        tile_edge(mi, nj, k, ai, lda, bj, ldb, cij, ldc, accumulate);
    }
  }
}

// dst (cols x rows) = transpose of src (rows x cols, stride ld).
void transpose_into(int rows, int cols, const Real* src, int ld,
                    std::vector<Real>& dst) {
  dst.resize(static_cast<std::size_t>(rows) * cols);
  constexpr int kBlock = 32;
  for (int r0 = 0; r0 < rows; r0 += kBlock)
    for (int c0 = 0; c0 < cols; c0 += kBlock)
      for (int r = r0; r < std::min(rows, r0 + kBlock); ++r)
        for (int c = c0; c < std::min(cols, c0 + kBlock); ++c)
          dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * ld + c];
}

int visible_keys(const AttnLayout& layout, const AttnSegment& s, int i) {
  if (!layout.causal) return s.k_len;
  return std::clamp(i + s.causal_offset + 1, 0, s.k_len);
}

}  // namespace

void gemm(Trans ta, Trans tb, int m, int n, int k, const Real* a, int lda,
          const Real* b, int ldb, Real* c, int ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (int i = 0; i < m; ++i) std::fill_n(c + static_cast<std::size_t>(i) * ldc, n, Real(0));
    return;
  }
  thread_local std::vector<Real> a_t, b_t;
  const Real* ap = a;
  const Real* bp = b;
  int lda_eff = lda, ldb_eff = ldb;
  if (ta == Trans::kYes) {
    transpose_into(k, m, a, lda, a_t);
    ap = a_t.data();
    lda_eff = k;
  }
  if (tb == Trans::kYes) {
    transpose_into(n, k, b, ldb, b_t);
    bp = b_t.data();
    ldb_eff = n;
  }
  gemm_nn(m, n, k, ap, lda_eff, bp, ldb_eff, c, ldc, accumulate);
}

void layer_norm_forward(int rows, int cols, const Real* x, const Real* gamma,
                        const Real* beta, Real eps, Real* y, Real* mean,
                        Real* rstd) {
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > kParallelWork)
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
  const bool par = static_cast<long>(rows) * cols > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
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
    }
    sum_g /= cols;
    sum_gx /= cols;
    for (int c = 0; c < cols; ++c) {
      const Real xhat = (xr[c] - mean[r]) * rstd[r];
      dxr[c] += rstd[r] * (dyr[c] * gamma[c] - sum_g - xhat * sum_gx);
    }
  }
  // Column sums run row-ordered per column, so results do not depend on the
  // thread count.
#pragma omp parallel for schedule(static) if (par)
  for (int c = 0; c < cols; ++c) {
    Real sg = 0, sb = 0;
    for (int r = 0; r < rows; ++r) {
      const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
      const Real xhat = (x[idx] - mean[r]) * rstd[r];
      sg += dy[idx] * xhat;
      sb += dy[idx];
    }
    dgamma[c] += sg;
    dbeta[c] += sb;
  }
}

void softmax_cross_entropy(int rows, int cols, const Real* logits,
                           const int* targets, Real* probs, Real* row_loss) {
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > kParallelWork)
  for (int r = 0; r < rows; ++r) {
    if (targets[r] < 0) {
      row_loss[r] = 0;
      continue;
    }
    const Real* lr = logits + static_cast<std::size_t>(r) * cols;
    Real* pr = probs + static_cast<std::size_t>(r) * cols;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (int c = 0; c < cols; ++c) mx = std::max(mx, lr[c]);
    std::copy_n(lr, cols, pr);
    exp_shifted(pr, cols, mx);
    Real sum = 0;
    for (int c = 0; c < cols; ++c) sum += pr[c];
    const Real inv = Real(1) / sum;
    for (int c = 0; c < cols; ++c) pr[c] *= inv;
    row_loss[r] = mx + std::log(sum) - lr[targets[r]];
  }
}

namespace {

struct AttnTask {
  int segment;
  int head;
  std::size_t prob_offset;
};

std::vector<AttnTask> attention_tasks(const AttnLayout& layout) {
  std::vector<AttnTask> tasks;
  tasks.reserve(layout.segments.size() * layout.heads);
  std::size_t base = 0;
  for (int si = 0; si < static_cast<int>(layout.segments.size()); ++si) {
    const auto& s = layout.segments[si];
    for (int h = 0; h < layout.heads; ++h)
      tasks.push_back({si, h, base + static_cast<std::size_t>(h) * s.q_len * s.k_len});
    base += static_cast<std::size_t>(layout.heads) * s.q_len * s.k_len;
  }
  return tasks;
}

}  // namespace

namespace {

// Serial tile loop, used inside already-parallel attention tasks.
void gemm_nn_serial(int m, int n, int k, const Real* a, int lda, const Real* b, int ldb,
                    Real* c, int ldc, bool accumulate) {
  for (int i0 = 0; i0 < m; i0 += kTileRows) {
    for (int j0 = 0; j0 < n; j0 += kTileCols) {
      const int mi = std::min(kTileRows, m - i0);
      const int nj = std::min(kTileCols, n - j0);
      const Real* ai = a + static_cast<std::size_t>(i0) * lda;
      Real* cij = c + static_cast<std::size_t>(i0) * ldc + j0;
      if (mi == kTileRows && nj == kTileCols)
        tile_full(k, ai, lda, b + j0, ldb, cij, ldc, accumulate);
      else
        tile_edge(mi, nj, k, ai, lda, b + j0, ldb, cij, ldc, accumulate);
    }
  }
}

// Copies the head slice of a strided row group into a dense block.
void gather_head(const Real* src, int width, int begin, int len, int stride, int col, int dh,
                 Real* dst) {
  for (int r = 0; r < len; ++r)
    std::copy_n(src + static_cast<std::size_t>(begin + r * stride) * width + col, dh,
                dst + static_cast<std::size_t>(r) * dh);
}

void scatter_add_head(const Real* src, int width, int begin, int len, int stride, int col, int dh,
                      Real* dst) {
  for (int r = 0; r < len; ++r) {
    Real* d = dst + static_cast<std::size_t>(begin + r * stride) * width + col;
    const Real* s = src + static_cast<std::size_t>(r) * dh;
    for (int c = 0; c < dh; ++c) d[c] += s[c];
  }
}

void transpose_block(int rows, int cols, const Real* src, Real* dst) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
}

}  // namespace

void attention_forward(const AttnLayout& layout, int width, const Real* q,
                       const Real* k, const Real* v, Real* out, Real* probs) {
  const int dh = width / layout.heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  const auto tasks = attention_tasks(layout);
  const int ntasks = static_cast<int>(tasks.size());
#pragma omp parallel for schedule(dynamic, 4) if (ntasks > 8)
  for (int t = 0; t < ntasks; ++t) {
    const auto& s = layout.segments[tasks[t].segment];
    const int col = tasks[t].head * dh;
    const int ql = s.q_len, kl = s.k_len;
    if (ql == 0) continue;
    Real* p = probs + tasks[t].prob_offset;
    thread_local std::vector<Real> qb, kt, vb, ob;
    qb.resize(static_cast<std::size_t>(ql) * dh);
    kt.resize(static_cast<std::size_t>(kl) * dh);
    vb.resize(static_cast<std::size_t>(kl) * dh);
    ob.resize(static_cast<std::size_t>(ql) * dh);
    gather_head(q, width, s.q_begin, ql, s.q_stride, col, dh, qb.data());
    gather_head(k, width, s.k_begin, kl, s.k_stride, col, dh, vb.data());
    transpose_block(kl, dh, vb.data(), kt.data());
    gather_head(v, width, s.k_begin, kl, s.k_stride, col, dh, vb.data());
    if (kl > 0) gemm_nn_serial(ql, kl, dh, qb.data(), dh, kt.data(), kl, p, kl, false);
    for (int i = 0; i < ql; ++i) {
      Real* pi = p + static_cast<std::size_t>(i) * kl;
      const int lim = visible_keys(layout, s, i);
      Real mx = -std::numeric_limits<Real>::infinity();
      for (int j = 0; j < lim; ++j) {
        pi[j] *= scale;
        mx = std::max(mx, pi[j]);
      }
      exp_shifted(pi, lim, mx);
      Real sum = 0;
      for (int j = 0; j < lim; ++j) sum += pi[j];
      const Real inv = lim > 0 ? Real(1) / sum : Real(0);
      for (int j = 0; j < lim; ++j) pi[j] *= inv;
      for (int j = lim; j < kl; ++j) pi[j] = 0;
    }
    if (kl > 0)
      gemm_nn_serial(ql, dh, kl, p, kl, vb.data(), dh, ob.data(), dh, false);
    else
      std::fill(ob.begin(), ob.end(), Real(0));
    for (int i = 0; i < ql; ++i)
      std::copy_n(ob.data() + static_cast<std::size_t>(i) * dh, dh,
                  out + static_cast<std::size_t>(s.q_begin + i * s.q_stride) * width + col);
  }
}

void attention_backward(const AttnLayout& layout, int width, const Real* q,
                        const Real* k, const Real* v, const Real* probs,
                        const Real* dout, Real* dq, Real* dk, Real* dv) {
  const int dh = width / layout.heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  const auto tasks = attention_tasks(layout);
  const int ntasks = static_cast<int>(tasks.size());
#pragma omp parallel for schedule(dynamic, 4) if (ntasks > 8)
  for (int t = 0; t < ntasks; ++t) {
    const auto& s = layout.segments[tasks[t].segment];
    const int col = tasks[t].head * dh;
    const int ql = s.q_len, kl = s.k_len;
    if (ql == 0 || kl == 0) continue;
    const Real* p = probs + tasks[t].prob_offset;
    thread_local std::vector<Real> qb, kb, vt, gb, ds, pt, tmp, dst;
    qb.resize(static_cast<std::size_t>(ql) * dh);
    kb.resize(static_cast<std::size_t>(kl) * dh);
    vt.resize(static_cast<std::size_t>(kl) * dh);
    gb.resize(static_cast<std::size_t>(ql) * dh);
    ds.resize(static_cast<std::size_t>(ql) * kl);
    pt.resize(static_cast<std::size_t>(ql) * kl);
    dst.resize(static_cast<std::size_t>(ql) * kl);
    tmp.resize(static_cast<std::size_t>(std::max(ql, kl)) * dh);
    gather_head(q, width, s.q_begin, ql, s.q_stride, col, dh, qb.data());
    gather_head(k, width, s.k_begin, kl, s.k_stride, col, dh, kb.data());
    gather_head(v, width, s.k_begin, kl, s.k_stride, col, dh, tmp.data());
    transpose_block(kl, dh, tmp.data(), vt.data());
    gather_head(dout, width, s.q_begin, ql, s.q_stride, col, dh, gb.data());
    // dP = dO V^T
    gemm_nn_serial(ql, kl, dh, gb.data(), dh, vt.data(), kl, ds.data(), kl, false);
    for (int i = 0; i < ql; ++i) {
      const Real* pi = p + static_cast<std::size_t>(i) * kl;
      Real* di = ds.data() + static_cast<std::size_t>(i) * kl;
      Real weighted = 0;
      for (int j = 0; j < kl; ++j) weighted += pi[j] * di[j];
      for (int j = 0; j < kl; ++j) di[j] = pi[j] * (di[j] - weighted) * scale;
    }
    // dQ = dS K
    gemm_nn_serial(ql, dh, kl, ds.data(), kl, kb.data(), dh, tmp.data(), dh, false);
    scatter_add_head(tmp.data(), width, s.q_begin, ql, s.q_stride, col, dh, dq);
    // dK = dS^T Q
    transpose_block(ql, kl, ds.data(), dst.data());
    gemm_nn_serial(kl, dh, ql, dst.data(), ql, qb.data(), dh, tmp.data(), dh, false);
    scatter_add_head(tmp.data(), width, s.k_begin, kl, s.k_stride, col, dh, dk);
    // dV = P^T dO
    transpose_block(ql, kl, p, pt.data());
    gemm_nn_serial(kl, dh, ql, pt.data(), ql, gb.data(), dh, tmp.data(), dh, false);
    scatter_add_head(tmp.data(), width, s.k_begin, kl, s.k_stride, col, dh, dv);
  }
}

namespace {

constexpr float kGeluC = 0.7978845608028654f;
constexpr float kGeluA = 0.044715f;
constexpr double kGeluCd = 0.7978845608028654;
constexpr double kGeluAd = 0.044715;

// Applies `f` to 8-lane float vectors; the tail goes through a padded buffer.
template <typename F>
void map_lanes(long n, const float* x, float* y, F f) {
  constexpr int kW = 8;
  long i = 0;
  for (; i + kW <= n; i += kW) {
    VecF v;
    std::memcpy(&v, x + i, sizeof(v));
    v = f(v);
    std::memcpy(y + i, &v, sizeof(v));
  }
  if (i < n) {
    float tail[kW] = {};
    std::copy(x + i, x + n, tail);
    VecF v;
    std::memcpy(&v, tail, sizeof(v));
    v = f(v);
    std::memcpy(tail, &v, sizeof(v));
    std::copy(tail, tail + (n - i), y + i);
  }
}

inline VecF tanh_lanes(VecF u) {
  const VecF e = exp_lanes(u * 2.0f);
  return 1.0f - 2.0f / (e + 1.0f);
}

[[maybe_unused]] void gelu_fwd_impl(long n, const float* x, float* y) {
  map_lanes(n, x, y, [](VecF v) {
    return 0.5f * v * (1.0f + tanh_lanes(kGeluC * (v + kGeluA * v * v * v)));
  });
}

[[maybe_unused]] void gelu_fwd_impl(long n, const double* x, double* y) {
  for (long i = 0; i < n; ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kGeluCd * (v + kGeluAd * v * v * v)));
  }
}

[[maybe_unused]] void gelu_bwd_impl(long n, const float* x, const float* dy, float* dx) {
  constexpr long kChunk = 1024;
  float buf[kChunk];
  for (long b = 0; b < n; b += kChunk) {
    const long m = std::min(kChunk, n - b);
    map_lanes(m, x + b, buf, [](VecF v) {
      const VecF t = tanh_lanes(kGeluC * (v + kGeluA * v * v * v));
      const VecF du = kGeluC * (1.0f + 3.0f * kGeluA * v * v);
      return 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
    });
    for (long i = 0; i < m; ++i) dx[b + i] += dy[b + i] * buf[i];
  }
}

[[maybe_unused]] void gelu_bwd_impl(long n, const double* x, const double* dy, double* dx) {
  for (long i = 0; i < n; ++i) {
    const double v = x[i];
    const double t = std::tanh(kGeluCd * (v + kGeluAd * v * v * v));
    const double du = kGeluCd * (1.0 + 3.0 * kGeluAd * v * v);
    dx[i] += dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
  }
}

[[maybe_unused]] void sigmoid_impl(long n, const float* x, float* y) {
  map_lanes(n, x, y, [](VecF v) { return 1.0f / (1.0f + exp_lanes(-v)); });
}

[[maybe_unused]] void sigmoid_impl(long n, const double* x, double* y) {
  for (long i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

constexpr long kElemChunk = 1L << 14;

}  // namespace

void gelu_forward(long n, const Real* x, Real* y) {
#pragma omp parallel for schedule(static) if (n > 4 * kElemChunk)
  for (long b = 0; b < n; b += kElemChunk) gelu_fwd_impl(std::min(kElemChunk, n - b), x + b, y + b);
}

void gelu_backward(long n, const Real* x, const Real* dy, Real* dx) {
#pragma omp parallel for schedule(static) if (n > 4 * kElemChunk)
  for (long b = 0; b < n; b += kElemChunk)
    gelu_bwd_impl(std::min(kElemChunk, n - b), x + b, dy + b, dx + b);
}

void sigmoid_forward(long n, const Real* x, Real* y) {
#pragma omp parallel for schedule(static) if (n > 4 * kElemChunk)
  for (long b = 0; b < n; b += kElemChunk) sigmoid_impl(std::min(kElemChunk, n - b), x + b, y + b);
}

}  // namespace kernels
HDPPT_NAMESPACE_END
