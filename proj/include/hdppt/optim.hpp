#pragma once

#include <vector>

#include "hdppt/nn.hpp"

HDPPT_NAMESPACE_BEGIN

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

/// Adam with decoupled weight decay. Decay applies to matrices only; vectors
/// (biases, norm scales) are left undecayed.
class AdamW {
 public:
  AdamW(const ParamStore& store, AdamWConfig cfg);

  /// Applies one update from the accumulated gradients, then zeroes them.
  /// Returns the pre-clipping global gradient norm.
  double step();
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamWConfig& config() const { return cfg_; }
  long steps() const { return t_; }

 private:
  struct Slot {
    Var param;
    std::vector<double> m, v;
    bool decay;
  };
  std::vector<Slot> slots_;
  AdamWConfig cfg_;
  long t_ = 0;
};

HDPPT_NAMESPACE_END
