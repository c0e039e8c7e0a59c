#include "hdppt/optim.hpp"

#include <cmath>

HDPPT_NAMESPACE_BEGIN

AdamW::AdamW(const ParamStore& store, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& [name, p] : store.params()) {
    const std::size_t n = p.value().size();
    slots_.push_back({p, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), p.rows() > 1});
  }
}

double AdamW::step() {
  double sq = 0;
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    for (Real g : s.param.grad().data) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  const double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    Mat& w = s.param.mutable_value();
    Mat& g = s.param.grad_buffer();
    const double decay = s.decay ? cfg_.lr * cfg_.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.data[i] * clip;
      s.m[i] = cfg_.beta1 * s.m[i] + (1 - cfg_.beta1) * gi;
      s.v[i] = cfg_.beta2 * s.v[i] + (1 - cfg_.beta2) * gi * gi;
      const double update = (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + cfg_.eps);
      w.data[i] = static_cast<Real>(w.data[i] - decay * w.data[i] - cfg_.lr * update);
      g.data[i] = 0;
    }
  }
  return norm;
}

HDPPT_NAMESPACE_END
