#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "hdppt/fsq.hpp"
#include "hdppt/ops.hpp"
#include "hdppt/rng.hpp"

using namespace hdppt;

TEST_CASE("bound squashes into the open interval") {
  const Real zero[] = {0, 0, 0};
  for (Real v : fsq_bound(zero)) CHECK(v == 0);
  const Real half[] = {Real(0.5)};
  CHECK(fsq_bound(half)[0] == doctest::Approx(0.46211715726).epsilon(1e-6));
  const Real big[] = {Real(1e30), Real(-1e30)};
  const auto b = fsq_bound(big);
  CHECK(b[0] <= 1);
  CHECK(b[1] >= -1);
  const Real bad[] = {std::numeric_limits<Real>::quiet_NaN()};
  CHECK_THROWS_AS(fsq_bound(bad), InvalidInput);
  const Real inf[] = {std::numeric_limits<Real>::infinity()};
  CHECK_THROWS_AS(fsq_bound(inf), InvalidInput);
}

TEST_CASE("bound is monotone") {
  Real prev = -2;
  for (int i = -200; i <= 200; ++i) {
    const Real z[] = {static_cast<Real>(i) / 40};
    const Real v = fsq_bound(z)[0];
    CHECK(v >= prev);
    CHECK(std::abs(v) < 1);
    prev = v;
  }
}

TEST_CASE("nearest grid point, ties to the lower code") {
  CHECK(fsq_snap(std::vector<Real>{Real(0.3)}, FsqLevels({4})).code == FsqCode{2});
  CHECK(fsq_snap(std::vector<Real>{Real(0.3)}, FsqLevels({4})).value[0] == Real(0.25));
  const Quantized q = fsq_snap(std::vector<Real>{Real(-0.9), 0, Real(0.9)}, FsqLevels({4, 4, 4}));
  CHECK(q.code == FsqCode{0, 1, 3});
  CHECK(q.value[1] == Real(-0.25));
  // Every midpoint between neighbouring grid values goes down (power-of-two
  // level counts keep the midpoint exactly representable).
  for (int levels : {2, 4, 8, 16}) {
    for (int k = 0; k + 1 < levels; ++k) {
      const Real mid = (fsq_grid_value(k, levels) + fsq_grid_value(k + 1, levels)) / 2;
      CHECK(fsq_nearest_code(mid, levels) == k);
    }
  }
}

TEST_CASE("quantize rejects a length mismatch") {
  const Real z[] = {0, 0};
  CHECK_THROWS_AS(fsq_quantize(z, FsqLevels({4, 4, 4})), ShapeError);
}

TEST_CASE("level validation and codebook sizes") {
  CHECK(FsqLevels({4, 4, 4}).codebook_size() == 64);
  CHECK(FsqLevels({6, 6, 6, 6}).codebook_size() == 1296);
  CHECK(FsqLevels({2}).codebook_size() == 2);
  CHECK_THROWS_AS(FsqLevels({4, 1}), ConfigError);
  CHECK_THROWS_AS(FsqLevels(std::vector<int>{}), ConfigError);
}

TEST_CASE("mixed-radix index examples") {
  const FsqLevels l3({4, 4, 4});
  const FsqLevels l4({6, 6, 6, 6});
  CHECK(fsq_code_to_index(FsqCode{0, 0, 0}, l3) == 0);
  CHECK(fsq_code_to_index(FsqCode{3, 3, 3}, l3) == 63);
  CHECK(fsq_code_to_index(FsqCode{1, 2, 3}, l3) == 27);
  CHECK(fsq_index_to_code(0, l4) == FsqCode{0, 0, 0, 0});
  CHECK(fsq_index_to_code(1295, l4) == FsqCode{5, 5, 5, 5});
  CHECK(fsq_index_to_code(27, l3) == FsqCode{1, 2, 3});
  CHECK_THROWS_AS(fsq_code_to_index(FsqCode{4, 0, 0}, l3), InvalidInput);
  CHECK_THROWS_AS(fsq_code_to_index(FsqCode{0, -1, 0}, l3), InvalidInput);
  CHECK_THROWS_AS(fsq_index_to_code(64, l3), InvalidInput);
  CHECK_THROWS_AS(fsq_index_to_code(-1, l3), InvalidInput);
}

TEST_CASE("exhaustive bijection, idempotence and grid coverage") {
  for (const auto& levels : {FsqLevels({4, 4, 4}), FsqLevels({6, 6, 6, 6})}) {
    std::vector<std::set<double>> seen(levels.dims());
    for (std::int64_t i = 0; i < levels.codebook_size(); ++i) {
      const FsqCode code = fsq_index_to_code(i, levels);
      REQUIRE(fsq_code_to_index(code, levels) == i);
      const auto value = fsq_index_to_value(i, levels);
      const Quantized again = fsq_snap(value, levels);
      CHECK(again.code == code);
      CHECK(again.value == value);
      for (int d = 0; d < levels.dims(); ++d) seen[d].insert(value[d]);
    }
    for (int d = 0; d < levels.dims(); ++d) {
      REQUIRE(static_cast<int>(seen[d].size()) == levels[d]);
      int k = 0;
      for (double v : seen[d]) {
        CHECK(v == doctest::Approx(-1.0 + (2.0 * k + 1.0) / levels[d]).epsilon(1e-6));
        ++k;
      }
    }
  }
}

TEST_CASE("row helpers round-trip") {
  const FsqLevels levels({6, 6, 6, 6});
  std::vector<int> idx = {0, 1295, 27, 640};
  const Mat rows = fsq_indices_to_rows(idx, levels);
  CHECK(fsq_rows_to_indices(rows, levels) == idx);
}

TEST_CASE("straight-through gradient equals the gradient through tanh") {
  const FsqLevels levels({6, 6, 6, 6});
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Mat zm(5, 4), wm(5, 4);
    for (auto& v : zm.data) v = static_cast<Real>(rng.normal() * 2);
    for (auto& v : wm.data) v = static_cast<Real>(rng.normal());
    Var z = Var::parameter(zm);
    const Var w = ops::constant(wm);
    backward(ops::sum(ops::mul(ops::mul(fsq_quantize_ste(z, levels), w), w)));
    const Mat ste = z.grad();
    // Same downstream loss on the snapped value, but with the snap treated as
    // identity: the upstream gradient must be evaluated at the quantized value.
    Var z2 = Var::parameter(zm);
    const Var q = fsq_quantize_ste(z2, levels);
    const Var t = ops::tanh(z2);
    const Var shift = ops::constant([&] {
      Mat d(5, 4);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] = q.value().data[i] - t.value().data[i];
      return d;
    }());
    backward(ops::sum(ops::mul(ops::mul(ops::add(t, shift), w), w)));
    for (std::size_t i = 0; i < ste.size(); ++i) CHECK(ste.data[i] == z2.grad().data[i]);
  }
}

TEST_CASE("forward value of the straight-through op is on the grid") {
  const FsqLevels levels({4, 4, 4});
  Rng rng(3);
  Mat zm(50, 3);
  for (auto& v : zm.data) v = static_cast<Real>(rng.normal() * 3);
  const Var q = fsq_quantize_ste(ops::constant(zm), levels);
  for (int r = 0; r < 50; ++r) {
    const Quantized ref = fsq_quantize(zm.row(r), levels);
    for (int c = 0; c < 3; ++c) CHECK(q.value()(r, c) == ref.value[c]);
  }
}
