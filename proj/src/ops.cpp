#include "hdppt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

HDPPT_NAMESPACE_BEGIN

namespace {

using kernels::Trans;

bool needs(const Var& v) { return v.defined() && v.requires_grad(); }

constexpr long kParallelWork = 1L << 14;

template <typename Fwd, typename Bwd>
Var unary(const Var& a, Fwd fwd, Bwd bwd) {
  const Mat& x = a.value();
  Mat y(x.rows, x.cols);
  const long n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (long i = 0; i < n; ++i) y.data[i] = fwd(x.data[i]);
  return make_result(std::move(y), {a}, [a, bwd](Node& self) {
    Var in = a;
    Mat& g = in.grad_buffer();
    const Mat& x = in.value();
    const long n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > kParallelWork)
    for (long i = 0; i < n; ++i)
      g.data[i] += self.grad.data[i] * bwd(x.data[i], self.value.data[i]);
  });
}

void check_same(const Mat& a, const Mat& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace

namespace ops {

Var constant(Mat m) { return Var(std::move(m), false); }

Var matmul(const Var& a, const Var& b) {
  const Mat& x = a.value();
  const Mat& w = b.value();
  if (x.cols != w.rows) throw ShapeError("matmul: inner dimensions differ");
  Mat y(x.rows, w.cols);
  kernels::gemm(Trans::kNo, Trans::kNo, x.rows, w.cols, x.cols, x.data.data(), x.cols,
                w.data.data(), w.cols, y.data.data(), y.cols, false);
  return make_result(std::move(y), {a, b}, [a, b](Node& self) {
    const Mat& g = self.grad;
    Var av = a, bv = b;
    const Mat& x = av.value();
    const Mat& w = bv.value();
    if (needs(av))
      kernels::gemm(Trans::kNo, Trans::kYes, x.rows, x.cols, w.cols, g.data.data(), g.cols,
                    w.data.data(), w.cols, av.grad_buffer().data.data(), x.cols, true);
    if (needs(bv))
      kernels::gemm(Trans::kYes, Trans::kNo, w.rows, w.cols, x.rows, x.data.data(), x.cols,
                    g.data.data(), g.cols, bv.grad_buffer().data.data(), w.cols, true);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Mat& x = a.value();
  const Mat& w = b.value();
  if (x.cols != w.cols) throw ShapeError("matmul_nt: inner dimensions differ");
  Mat y(x.rows, w.rows);
  kernels::gemm(Trans::kNo, Trans::kYes, x.rows, w.rows, x.cols, x.data.data(), x.cols,
                w.data.data(), w.cols, y.data.data(), y.cols, false);
  return make_result(std::move(y), {a, b}, [a, b](Node& self) {
    const Mat& g = self.grad;
    Var av = a, bv = b;
    const Mat& x = av.value();
    const Mat& w = bv.value();
    // y = x w^T: dx = g w, dw = g^T x
    if (needs(av))
      kernels::gemm(Trans::kNo, Trans::kNo, x.rows, x.cols, w.rows, g.data.data(), g.cols,
                    w.data.data(), w.cols, av.grad_buffer().data.data(), x.cols, true);
    if (needs(bv))
      kernels::gemm(Trans::kYes, Trans::kNo, w.rows, w.cols, x.rows, g.data.data(), g.cols,
                    x.data.data(), x.cols, bv.grad_buffer().data.data(), w.cols, true);
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  const Mat& xv = x.value();
  const Mat& wv = w.value();
  if (xv.cols != wv.rows) throw ShapeError("linear: input width does not match weight");
  Mat y(xv.rows, wv.cols);
  if (bias.defined()) {
    const Mat& bv = bias.value();
    if (bv.rows != 1 || bv.cols != wv.cols) throw ShapeError("linear: bias shape");
    for (int r = 0; r < y.rows; ++r) std::copy(bv.data.begin(), bv.data.end(), y.row(r).begin());
  }
  kernels::gemm(Trans::kNo, Trans::kNo, xv.rows, wv.cols, xv.cols, xv.data.data(), xv.cols,
                wv.data.data(), wv.cols, y.data.data(), y.cols, bias.defined());
  return make_result(std::move(y), {x, w, bias}, [x, w, bias](Node& self) {
    const Mat& g = self.grad;
    Var xv = x, wv = w, bv = bias;
    const Mat& in = xv.value();
    const Mat& wt = wv.value();
    if (needs(xv))
      kernels::gemm(Trans::kNo, Trans::kYes, in.rows, in.cols, wt.cols, g.data.data(), g.cols,
                    wt.data.data(), wt.cols, xv.grad_buffer().data.data(), in.cols, true);
    if (needs(wv))
      kernels::gemm(Trans::kYes, Trans::kNo, wt.rows, wt.cols, in.rows, in.data.data(), in.cols,
                    g.data.data(), g.cols, wv.grad_buffer().data.data(), wt.cols, true);
    if (needs(bv)) {
      Mat& gb = bv.grad_buffer();
      for (int r = 0; r < g.rows; ++r) {
        const auto gr = g.row(r);
        for (int c = 0; c < g.cols; ++c) gb.data[c] += gr[c];
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  const Mat& x = a.value();
  const Mat& y = b.value();
  const bool broadcast = y.rows == 1 && x.rows != 1 && y.cols == x.cols;
  if (!broadcast) check_same(x, y, "add");
  Mat out = x;
  for (int r = 0; r < out.rows; ++r) {
    auto orow = out.row(r);
    const auto yrow = y.row(broadcast ? 0 : r);
    for (int c = 0; c < out.cols; ++c) orow[c] += yrow[c];
  }
  return make_result(std::move(out), {a, b}, [a, b, broadcast](Node& self) {
    Var av = a, bv = b;
    const Mat& g = self.grad;
    if (needs(av)) {
      Mat& ga = av.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    }
    if (needs(bv)) {
      Mat& gb = bv.grad_buffer();
      if (broadcast) {
        for (int r = 0; r < g.rows; ++r) {
          const auto gr = g.row(r);
          for (int c = 0; c < g.cols; ++c) gb.data[c] += gr[c];
        }
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, Real(-1))); }

Var mul(const Var& a, const Var& b) {
  check_same(a.value(), b.value(), "mul");
  Mat out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    Var av = a, bv = b;
    const Mat& g = self.grad;
    if (needs(av)) {
      Mat& ga = av.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv.value().data[i];
    }
    if (needs(bv)) {
      Mat& gb = bv.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av.value().data[i];
    }
  });
}

Var scale(const Var& a, Real s) {
  return unary(a, [s](Real x) { return x * s; }, [s](Real, Real) { return s; });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw ShapeError("mul_scalar: scale must be 1x1");
  const Real sv = s.item();
  Mat out = a.value();
  for (auto& v : out.data) v *= sv;
  return make_result(std::move(out), {a, s}, [a, s](Node& self) {
    Var av = a, sv = s;
    const Mat& g = self.grad;
    if (needs(av)) {
      Mat& ga = av.grad_buffer();
      const Real k = sv.item();
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * k;
    }
    if (needs(sv)) {
      Real acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data[i] * av.value().data[i];
      sv.grad_buffer().data[0] += acc;
    }
  });
}

Var exp(const Var& a) {
  return unary(a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

Var tanh(const Var& a) {
  return unary(a, [](Real x) { return std::tanh(x); },
               [](Real, Real y) { return Real(1) - y * y; });
}

Var sigmoid(const Var& a) {
  const Mat& x = a.value();
  Mat y(x.rows, x.cols);
  kernels::sigmoid_forward(static_cast<long>(x.size()), x.data.data(), y.data.data());
  return make_result(std::move(y), {a}, [a](Node& self) {
    Var in = a;
    Mat& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      g.data[i] += self.grad.data[i] * self.value.data[i] * (Real(1) - self.value.data[i]);
  });
}

Var relu(const Var& a) {
  return unary(a, [](Real x) { return x > 0 ? x : Real(0); },
               [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

Var silu(const Var& a) {
  const Mat& x = a.value();
  auto sig = std::make_shared<Mat>(x.rows, x.cols);
  kernels::sigmoid_forward(static_cast<long>(x.size()), x.data.data(), sig->data.data());
  Mat y(x.rows, x.cols);
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = x.data[i] * sig->data[i];
  return make_result(std::move(y), {a}, [a, sig](Node& self) {
    Var in = a;
    Mat& g = in.grad_buffer();
    const Mat& x = in.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real s = sig->data[i];
      g.data[i] += self.grad.data[i] * s * (Real(1) + x.data[i] * (Real(1) - s));
    }
  });
}

Var gelu(const Var& a) {
  const Mat& x = a.value();
  Mat y(x.rows, x.cols);
  kernels::gelu_forward(static_cast<long>(x.size()), x.data.data(), y.data.data());
  return make_result(std::move(y), {a}, [a](Node& self) {
    Var in = a;
    kernels::gelu_backward(static_cast<long>(in.value().size()), in.value().data.data(),
                           self.grad.data.data(), in.grad_buffer().data.data());
  });
}

Var glu(const Var& a) {
  const Mat& x = a.value();
  if (x.cols % 2 != 0) throw ShapeError("glu: odd width");
  const int half = x.cols / 2;
  auto sig = std::make_shared<Mat>(x.rows, half);
  Mat out(x.rows, half);
  for (int r = 0; r < x.rows; ++r) {
    const auto xr = x.row(r);
    auto sr = sig->row(r);
    kernels::sigmoid_forward(half, xr.data() + half, sr.data());
    auto orow = out.row(r);
    for (int c = 0; c < half; ++c) orow[c] = xr[c] * sr[c];
  }
  return make_result(std::move(out), {a}, [a, half, sig](Node& self) {
    Var av = a;
    const Mat& x = av.value();
    Mat& gx = av.grad_buffer();
    for (int r = 0; r < x.rows; ++r) {
      const auto xr = x.row(r);
      const auto gr = self.grad.row(r);
      const auto sr = sig->row(r);
      auto gxr = gx.row(r);
      for (int c = 0; c < half; ++c) {
        const Real s = sr[c];
        gxr[c] += gr[c] * s;
        gxr[c + half] += gr[c] * xr[c] * s * (Real(1) - s);
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps) {
  const Mat& xv = x.value();
  if (gamma.cols() != xv.cols || beta.cols() != xv.cols) throw ShapeError("layer_norm: affine width");
  Mat y(xv.rows, xv.cols);
  auto stats = std::make_shared<std::vector<Real>>(2 * static_cast<std::size_t>(xv.rows));
  kernels::layer_norm_forward(xv.rows, xv.cols, xv.data.data(), gamma.value().data.data(),
                              beta.value().data.data(), eps, y.data.data(), stats->data(),
                              stats->data() + xv.rows);
  return make_result(std::move(y), {x, gamma, beta}, [x, gamma, beta, stats](Node& self) {
    Var xv = x, gv = gamma, bv = beta;
    const Mat& in = xv.value();
    Mat& dx = xv.grad_buffer();
    Mat& dg = gv.grad_buffer();
    Mat& db = bv.grad_buffer();
    kernels::layer_norm_backward(in.rows, in.cols, in.data.data(), gv.value().data.data(),
                                 stats->data(), stats->data() + in.rows, self.grad.data.data(),
                                 dx.data.data(), dg.data.data(), db.data.data());
  });
}

Var embedding(const Var& table, std::span<const int> ids) {
  const Mat& t = table.value();
  Mat out(static_cast<int>(ids.size()), t.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows) throw InvalidInput("embedding: id out of range");
    std::copy_n(t.row(ids[i]).begin(), t.cols, out.row(static_cast<int>(i)).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result(std::move(out), {table}, [table, idv = std::move(idv)](Node& self) {
    Var tv = table;
    Mat& g = tv.grad_buffer();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      auto gr = g.row(idv[i]);
      const auto sr = self.grad.row(static_cast<int>(i));
      for (int c = 0; c < g.cols; ++c) gr[c] += sr[c];
    }
  });
}

Var gather_rows(const Var& x, std::span<const int> rows) { return embedding(x, rows); }

Var slice_rows(const Var& x, int begin, int count) {
  const Mat& v = x.value();
  if (begin < 0 || count < 0 || begin + count > v.rows) throw ShapeError("slice_rows: out of range");
  Mat out(count, v.cols);
  std::copy_n(v.data.begin() + static_cast<std::ptrdiff_t>(begin) * v.cols, out.size(), out.data.begin());
  return make_result(std::move(out), {x}, [x, begin](Node& self) {
    Var xv = x;
    Mat& g = xv.grad_buffer();
    const std::size_t off = static_cast<std::size_t>(begin) * g.cols;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g.data[off + i] += self.grad.data[i];
  });
}

Var slice_cols(const Var& x, int begin, int end) {
  const Mat& v = x.value();
  if (begin < 0 || end > v.cols || begin > end) throw ShapeError("slice_cols: out of range");
  const int w = end - begin;
  Mat out(v.rows, w);
  for (int r = 0; r < v.rows; ++r)
    std::copy_n(v.row(r).begin() + begin, w, out.row(r).begin());
  return make_result(std::move(out), {x}, [x, begin, w](Node& self) {
    Var xv = x;
    Mat& g = xv.grad_buffer();
    for (int r = 0; r < g.rows; ++r) {
      auto gr = g.row(r);
      const auto sr = self.grad.row(r);
      for (int c = 0; c < w; ++c) gr[begin + c] += sr[c];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const int cols = parts[0].cols();
  int rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: width mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  std::vector<Var> pv(parts.begin(), parts.end());
  return make_result(std::move(out), pv, [pv](Node& self) {
    std::size_t off = 0;
    for (auto p : pv) {
      const std::size_t n = p.value().size();
      if (needs(p)) {
        Mat& g = p.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g.data[i] += self.grad.data[off + i];
      }
      off += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: height mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  int off = 0;
  for (const auto& p : parts) {
    for (int r = 0; r < rows; ++r)
      std::copy_n(p.value().row(r).begin(), p.cols(), out.row(r).begin() + off);
    off += p.cols();
  }
  std::vector<Var> pv(parts.begin(), parts.end());
  return make_result(std::move(out), pv, [pv](Node& self) {
    int off = 0;
    for (auto p : pv) {
      const int w = p.cols();
      if (needs(p)) {
        Mat& g = p.grad_buffer();
        for (int r = 0; r < g.rows; ++r) {
          auto gr = g.row(r);
          const auto sr = self.grad.row(r);
          for (int c = 0; c < w; ++c) gr[c] += sr[off + c];
        }
      }
      off += w;
    }
  });
}

Var transpose(const Var& x) {
  const Mat& v = x.value();
  Mat out(v.cols, v.rows);
  for (int r = 0; r < v.rows; ++r)
    for (int c = 0; c < v.cols; ++c) out(c, r) = v(r, c);
  return make_result(std::move(out), {x}, [x](Node& self) {
    Var xv = x;
    Mat& g = xv.grad_buffer();
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) g(r, c) += self.grad(c, r);
  });
}

Var repeat_rows(const Var& x, int times) {
  const Mat& v = x.value();
  Mat out(v.rows * times, v.cols);
  for (int t = 0; t < times; ++t)
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(t) * v.size());
  return make_result(std::move(out), {x}, [x, times](Node& self) {
    Var xv = x;
    Mat& g = xv.grad_buffer();
    for (int t = 0; t < times; ++t)
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[t * g.size() + i];
  });
}

Var replace_rows(const Var& x, const Var& fill, std::span<const std::uint8_t> which) {
  const Mat& v = x.value();
  if (static_cast<int>(which.size()) != v.rows) throw ShapeError("replace_rows: mask length");
  if (fill.rows() != 1 || fill.cols() != v.cols) throw ShapeError("replace_rows: fill shape");
  Mat out = v;
  for (int r = 0; r < v.rows; ++r)
    if (which[r]) std::copy_n(fill.value().data.begin(), v.cols, out.row(r).begin());
  std::vector<std::uint8_t> mask(which.begin(), which.end());
  return make_result(std::move(out), {x, fill}, [x, fill, mask = std::move(mask)](Node& self) {
    Var xv = x, fv = fill;
    const Mat& g = self.grad;
    if (needs(xv)) {
      Mat& gx = xv.grad_buffer();
      for (int r = 0; r < g.rows; ++r) {
        if (mask[r]) continue;
        auto gr = gx.row(r);
        const auto sr = g.row(r);
        for (int c = 0; c < g.cols; ++c) gr[c] += sr[c];
      }
    }
    if (needs(fv)) {
      Mat& gf = fv.grad_buffer();
      for (int r = 0; r < g.rows; ++r) {
        if (!mask[r]) continue;
        const auto sr = g.row(r);
        for (int c = 0; c < g.cols; ++c) gf.data[c] += sr[c];
      }
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v,
              std::shared_ptr<const kernels::AttnLayout> layout) {
  const int width = q.cols();
  if (k.cols() != width || v.cols() != width || width % layout->heads != 0)
    throw ShapeError("attention: width mismatch");
  if (k.rows() != v.rows()) throw ShapeError("attention: key/value rows differ");
  Mat out(q.rows(), width);
  auto probs = std::make_shared<std::vector<Real>>(layout->prob_size());
  kernels::attention_forward(*layout, width, q.value().data.data(), k.value().data.data(),
                             v.value().data.data(), out.data.data(), probs->data());
  return make_result(std::move(out), {q, k, v}, [q, k, v, layout, probs](Node& self) {
    Var qv = q, kv = k, vv = v;
    const int width = qv.cols();
    kernels::attention_backward(*layout, width, qv.value().data.data(), kv.value().data.data(),
                                vv.value().data.data(), probs->data(), self.grad.data.data(),
                                qv.grad_buffer().data.data(), kv.grad_buffer().data.data(),
                                vv.grad_buffer().data.data());
  });
}

Var depthwise_conv1d(const Var& x, const Var& weight, const Var& bias,
                     std::span<const RowSegment> segments) {
  const Mat& xv = x.value();
  const Mat& w = weight.value();
  const int channels = xv.cols;
  const int ksize = w.rows;
  if (w.cols != channels || bias.cols() != channels || ksize % 2 == 0)
    throw ShapeError("depthwise_conv1d: weight/bias shape");
  const int half = ksize / 2;
  Mat out(xv.rows, channels);
  std::vector<RowSegment> segs(segments.begin(), segments.end());
  for (const auto& s : segs) {
    for (int t = 0; t < s.length; ++t) {
      auto orow = out.row(s.begin + t);
      std::copy_n(bias.value().data.begin(), channels, orow.begin());
      for (int j = 0; j < ksize; ++j) {
        const int src = t + j - half;
        if (src < 0 || src >= s.length) continue;
        const auto xr = xv.row(s.begin + src);
        const auto wr = w.row(j);
        for (int c = 0; c < channels; ++c) orow[c] += wr[c] * xr[c];
      }
    }
  }
  return make_result(std::move(out), {x, weight, bias}, [x, weight, bias, segs, half](Node& self) {
    Var xv = x, wv = weight, bv = bias;
    const Mat& in = xv.value();
    const Mat& w = wv.value();
    const int channels = in.cols;
    const int ksize = w.rows;
    Mat& gx = xv.grad_buffer();
    Mat& gw = wv.grad_buffer();
    Mat& gb = bv.grad_buffer();
    for (const auto& s : segs) {
      for (int t = 0; t < s.length; ++t) {
        const auto gr = self.grad.row(s.begin + t);
        for (int c = 0; c < channels; ++c) gb.data[c] += gr[c];
        for (int j = 0; j < ksize; ++j) {
          const int src = t + j - half;
          if (src < 0 || src >= s.length) continue;
          const auto xr = in.row(s.begin + src);
          auto gxr = gx.row(s.begin + src);
          const auto wr = w.row(j);
          auto gwr = gw.row(j);
          for (int c = 0; c < channels; ++c) {
            gxr[c] += wr[c] * gr[c];
            gwr[c] += xr[c] * gr[c];
          }
        }
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  const Mat& l = logits.value();
  if (static_cast<int>(targets.size()) != l.rows) throw ShapeError("cross_entropy: target count");
  for (int t : targets)
    if (t >= l.cols) throw InvalidInput("cross_entropy: target out of range");
  auto probs = std::make_shared<Mat>(l.rows, l.cols);
  std::vector<Real> row_loss(l.rows);
  kernels::softmax_cross_entropy(l.rows, l.cols, l.data.data(), targets.data(),
                                 probs->data.data(), row_loss.data());
  int count = 0;
  double total = 0;
  for (int r = 0; r < l.rows; ++r) {
    if (targets[r] < 0) continue;
    ++count;
    total += row_loss[r];
  }
  if (count == 0) throw InvalidInput("cross_entropy: no valid targets");
  Mat out(1, 1, static_cast<Real>(total / count));
  std::vector<int> tv(targets.begin(), targets.end());
  return make_result(std::move(out), {logits},
                     [logits, probs, tv = std::move(tv), count](Node& self) {
                       Var lv = logits;
                       Mat& g = lv.grad_buffer();
                       const Real k = self.grad.data[0] / static_cast<Real>(count);
                       const int rows = g.rows;
                       const int cols = g.cols;
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > kParallelWork)
                       for (int r = 0; r < rows; ++r) {
                         if (tv[r] < 0) continue;
                         auto gr = g.row(r);
                         const auto pr = probs->row(r);
                         for (int c = 0; c < cols; ++c) gr[c] += k * pr[c];
                         gr[tv[r]] -= k;
                       }
                     });
}

Var segment_mean(const Var& x, std::span<const RowSegment> segments) {
  const Mat& v = x.value();
  Mat out(static_cast<int>(segments.size()), v.cols);
  std::vector<RowSegment> segs(segments.begin(), segments.end());
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (segs[s].length <= 0) throw InvalidInput("segment_mean: empty segment");
    auto orow = out.row(static_cast<int>(s));
    for (int t = 0; t < segs[s].length; ++t) {
      const auto xr = v.row(segs[s].begin + t);
      for (int c = 0; c < v.cols; ++c) orow[c] += xr[c];
    }
    for (auto& o : orow) o /= static_cast<Real>(segs[s].length);
  }
  return make_result(std::move(out), {x}, [x, segs](Node& self) {
    Var xv = x;
    Mat& g = xv.grad_buffer();
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const auto sr = self.grad.row(static_cast<int>(s));
      const Real inv = Real(1) / static_cast<Real>(segs[s].length);
      for (int t = 0; t < segs[s].length; ++t) {
        auto gr = g.row(segs[s].begin + t);
        for (int c = 0; c < g.cols; ++c) gr[c] += sr[c] * inv;
      }
    }
  });
}

Var l2_normalize_rows(const Var& x, Real eps) {
  const Mat& v = x.value();
  Mat out(v.rows, v.cols);
  auto norms = std::make_shared<std::vector<Real>>(v.rows);
  for (int r = 0; r < v.rows; ++r) {
    const auto xr = v.row(r);
    Real ss = 0;
    for (Real a : xr) ss += a * a;
    const Real n = std::max(std::sqrt(ss), eps);
    (*norms)[r] = n;
    auto orow = out.row(r);
    for (int c = 0; c < v.cols; ++c) orow[c] = xr[c] / n;
  }
  return make_result(std::move(out), {x}, [x, norms](Node& self) {
    Var xv = x;
    Mat& g = xv.grad_buffer();
    for (int r = 0; r < g.rows; ++r) {
      const auto yr = self.value.row(r);
      const auto dyr = self.grad.row(r);
      Real dot = 0;
      for (int c = 0; c < g.cols; ++c) dot += yr[c] * dyr[c];
      auto gr = g.row(r);
      const Real inv = Real(1) / (*norms)[r];
      for (int c = 0; c < g.cols; ++c) gr[c] += (dyr[c] - yr[c] * dot) * inv;
    }
  });
}

Var sum(const Var& x) {
  double s = 0;
  for (Real v : x.value().data) s += v;
  return make_result(Mat(1, 1, static_cast<Real>(s)), {x}, [x](Node& self) {
    Var xv = x;
    Mat& g = xv.grad_buffer();
    for (auto& v : g.data) v += self.grad.data[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), Real(1) / static_cast<Real>(x.value().size())); }

}  // namespace ops

std::vector<int> argmax_rows(const Mat& m) {
  std::vector<int> out(m.rows);
  for (int r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

HDPPT_NAMESPACE_END
