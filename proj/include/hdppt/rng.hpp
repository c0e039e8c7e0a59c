#pragma once

#include <cstdint>
#include <string_view>

#include "hdppt/common.hpp"

HDPPT_NAMESPACE_BEGIN

/// SplitMix64 finalizer (Steele, Lea & Flood constants).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream key from a parent seed and a stream label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Counter-based generator: draw i of stream `key` is splitmix64(key + i * phi).
///
/// Every derived quantity is specified in terms of next_u64() so that corpora
/// are reproducible across implementations:
///   uniform()      = (next_u64() >> 11) * 2^-53            in [0, 1)
///   below(n)       = floor(uniform() * n)
///   normal()       = Box-Muller on (1 - uniform(), uniform()), cosine branch
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() {
    const std::uint64_t x = key_ + counter_ * 0x9E3779B97F4A7C15ULL;
    ++counter_;
    return splitmix64(x);
  }
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

HDPPT_NAMESPACE_END
