#include <memory>

#include "doctest.h"
#include "gradcheck.hpp"
#include "hdppt/fsq.hpp"
#include "hdppt/nn.hpp"
#include "hdppt/ops.hpp"

using namespace hdppt;
using gradcheck::random_param;

static_assert(std::is_same_v<Real, double>, "gradient checks run on the double build");

namespace {

// Contracts an output against a fixed random matrix so every entry matters.
Var probe_loss(const Var& y, std::uint64_t seed) {
  Rng rng(seed);
  Mat w(y.rows(), y.cols());
  for (auto& v : w.data) v = rng.normal();
  return ops::sum(ops::mul(y, ops::constant(std::move(w))));
}

void expect_ok(const std::function<Var()>& f, std::vector<Var> in) {
  const auto r = gradcheck::check(f, std::move(in));
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error <= 1e-5);
}

}  // namespace

TEST_CASE("elementwise ops") {
  Rng rng(1);
  auto a = random_param(5, 6, rng);
  auto b = random_param(5, 6, rng);
  auto row = random_param(1, 6, rng);
  auto s = random_param(1, 1, rng);
  expect_ok([&] { return probe_loss(ops::add(a, b), 1); }, {a, b});
  expect_ok([&] { return probe_loss(ops::add(a, row), 2); }, {a, row});
  expect_ok([&] { return probe_loss(ops::mul(a, b), 3); }, {a, b});
  expect_ok([&] { return probe_loss(ops::mul_scalar(a, s), 4); }, {a, s});
  expect_ok([&] { return probe_loss(ops::gelu(a), 5); }, {a});
  expect_ok([&] { return probe_loss(ops::silu(a), 6); }, {a});
  expect_ok([&] { return probe_loss(ops::tanh(a), 7); }, {a});
  expect_ok([&] { return probe_loss(ops::sigmoid(a), 8); }, {a});
  expect_ok([&] { return probe_loss(ops::exp(ops::scale(a, 0.3)), 9); }, {a});
  expect_ok([&] { return probe_loss(ops::glu(a), 10); }, {a});
}

TEST_CASE("linear algebra and layout ops") {
  Rng rng(2);
  auto x = random_param(7, 5, rng);
  auto w = random_param(5, 4, rng);
  auto bias = random_param(1, 4, rng);
  auto y = random_param(3, 5, rng);
  expect_ok([&] { return probe_loss(ops::linear(x, w, bias), 11); }, {x, w, bias});
  expect_ok([&] { return probe_loss(ops::matmul(x, w), 12); }, {x, w});
  expect_ok([&] { return probe_loss(ops::matmul_nt(x, y), 13); }, {x, y});
  expect_ok([&] { return probe_loss(ops::transpose(x), 14); }, {x});
  expect_ok([&] {
    const Var parts[] = {x, y};
    return probe_loss(ops::concat_rows(parts), 15);
  }, {x, y});
  expect_ok([&] {
    const Var parts[] = {x, ops::slice_cols(x, 1, 3)};
    return probe_loss(ops::concat_cols(parts), 16);
  }, {x});
  expect_ok([&] { return probe_loss(ops::slice_rows(x, 2, 3), 17); }, {x});
  expect_ok([&] { return probe_loss(ops::repeat_rows(y, 3), 18); }, {y});
  const int ids[] = {4, 0, 4, 6};
  expect_ok([&] { return probe_loss(ops::embedding(x, ids), 19); }, {x});
  const std::uint8_t which[] = {0, 1, 0, 0, 1, 1, 0};
  auto fill = random_param(1, 5, rng);
  expect_ok([&] { return probe_loss(ops::replace_rows(x, fill, which), 20); }, {x, fill});
}

TEST_CASE("normalisation, pooling and losses") {
  Rng rng(3);
  auto x = random_param(6, 8, rng);
  auto gamma = random_param(1, 8, rng);
  auto beta = random_param(1, 8, rng);
  expect_ok([&] { return probe_loss(ops::layer_norm(x, gamma, beta), 21); }, {x, gamma, beta});
  const RowSegment segs[] = {{0, 2}, {2, 4}};
  expect_ok([&] { return probe_loss(ops::segment_mean(x, segs), 22); }, {x});
  expect_ok([&] { return probe_loss(ops::l2_normalize_rows(x), 23); }, {x});
  const int targets[] = {3, -1, 0, 7, 7, 2};
  expect_ok([&] { return ops::cross_entropy(x, targets); }, {x});
}

TEST_CASE("attention and depthwise convolution") {
  Rng rng(4);
  auto q = random_param(7, 8, rng);
  auto k = random_param(9, 8, rng);
  auto v = random_param(9, 8, rng);
  auto self_layout = self_attention_layout({{0, 3}, {3, 4}}, 2, true);
  expect_ok([&] { return probe_loss(ops::attention(q, q, q, self_layout), 24); }, {q});
  auto cross = cross_attention_layout({{0, 3}, {3, 4}}, {{0, 5}, {5, 4}}, 2);
  expect_ok([&] { return probe_loss(ops::attention(q, k, v, cross), 25); }, {q, k, v});
  auto w = random_param(3, 8, rng);
  auto b = random_param(1, 8, rng);
  const RowSegment segs[] = {{0, 3}, {3, 4}};
  expect_ok([&] { return probe_loss(ops::depthwise_conv1d(q, w, b, segs), 26); }, {q, w, b});
}

TEST_CASE("straight-through quantizer passes gradients through tanh only") {
  Rng rng(5);
  auto z = random_param(6, 3, rng, 0.5);
  const FsqLevels levels({4, 4, 4});
  z.zero_grad();
  Var y = fsq_quantize_ste(z, levels);
  backward(probe_loss(y, 27));
  const Mat ste = z.grad();
  z.zero_grad();
  backward(probe_loss(ops::tanh(z), 27));
  for (std::size_t i = 0; i < ste.size(); ++i) CHECK(ste.data[i] == z.grad().data[i]);
}
