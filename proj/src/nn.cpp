#include "hdppt/nn.hpp"

#include <cmath>

HDPPT_NAMESPACE_BEGIN

Var ParamStore::create(const std::string& name, Mat init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  Var p = Var::parameter(std::move(init));
  index_[name] = params_.size();
  params_.emplace_back(name, p);
  return p;
}

Var ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second].second;
}

std::vector<std::pair<std::string, Var>> ParamStore::with_prefix(const std::string& prefix) const {
  std::vector<std::pair<std::string, Var>> out;
  for (const auto& p : params_)
    if (p.first.compare(0, prefix.size(), prefix) == 0) out.push_back(p);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.second.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.second.zero_grad();
}

Mat normal_mat(int rows, int cols, double stddev, Rng& rng) {
  Mat m(rows, cols);
  for (auto& v : m.data) v = static_cast<Real>(rng.normal() * stddev);
  return m;
}

LayoutPtr self_attention_layout(const std::vector<RowSegment>& segments, int heads, bool causal) {
  auto layout = std::make_shared<kernels::AttnLayout>();
  layout->heads = heads;
  layout->causal = causal;
  layout->segments.reserve(segments.size());
  for (const auto& s : segments) {
    kernels::AttnSegment a;
    a.q_begin = a.k_begin = s.begin;
    a.q_len = a.k_len = s.length;
    layout->segments.push_back(a);
  }
  return layout;
}

LayoutPtr cross_attention_layout(const std::vector<RowSegment>& queries,
                                 const std::vector<RowSegment>& keys, int heads) {
  if (queries.size() != keys.size()) throw ShapeError("cross attention: segment count mismatch");
  auto layout = std::make_shared<kernels::AttnLayout>();
  layout->heads = heads;
  layout->causal = false;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    kernels::AttnSegment a;
    a.q_begin = queries[i].begin;
    a.q_len = queries[i].length;
    a.k_begin = keys[i].begin;
    a.k_len = keys[i].length;
    layout->segments.push_back(a);
  }
  return layout;
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool bias) {
  weight_ = store.create(name + ".weight", normal_mat(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  if (bias) bias_ = store.create(name + ".bias", Mat(1, out));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int width) {
  gamma_ = store.create(name + ".gamma", Mat(1, width, Real(1)));
  beta_ = store.create(name + ".beta", Mat(1, width));
}

Embedding::Embedding(ParamStore& store, const std::string& name, int count, int width, Rng& rng) {
  table_ = store.create(name + ".table", normal_mat(count, width, 1.0 / std::sqrt(static_cast<double>(width)), rng));
}

FeedForward::FeedForward(ParamStore& store, const std::string& name, int width, int hidden, Rng& rng)
    : up_(store, name + ".up", width, hidden, rng), down_(store, name + ".down", hidden, width, rng) {}

void KvCache::append(const Var& k, const Var& v) {
  if (!keys.defined()) {
    keys = k;
    values = v;
    return;
  }
  const Var kp[] = {keys, k};
  const Var vp[] = {values, v};
  keys = ops::concat_rows(kp);
  values = ops::concat_rows(vp);
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, int width,
                                       int heads, Rng& rng)
    : q_(store, name + ".q", width, width, rng),
      k_(store, name + ".k", width, width, rng),
      v_(store, name + ".v", width, width, rng),
      o_(store, name + ".o", width, width, rng),
      heads_(heads) {
  if (width % heads != 0) throw ConfigError("attention width must be divisible by heads");
}

Var MultiHeadAttention::operator()(const Var& queries, const Var& memory,
                                   const LayoutPtr& layout) const {
  return o_(ops::attention(q_(queries), k_(memory), v_(memory), layout));
}

Var MultiHeadAttention::cached(const Var& x, KvCache& cache, const LayoutPtr& layout) const {
  cache.append(k_(x), v_(x));
  return o_(ops::attention(q_(x), cache.keys, cache.values, layout));
}

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& name, int width,
                                   int heads, int ffn_hidden, bool cross_attention, Rng& rng)
    : ln_self_(store, name + ".ln_self", width),
      ln_ffn_(store, name + ".ln_ffn", width),
      self_attn_(store, name + ".self_attn", width, heads, rng),
      ffn_(store, name + ".ffn", width, ffn_hidden, rng),
      has_cross_(cross_attention) {
  if (has_cross_) {
    ln_cross_ = LayerNorm(store, name + ".ln_cross", width);
    cross_attn_ = MultiHeadAttention(store, name + ".cross_attn", width, heads, rng);
  }
}

Var TransformerBlock::tail(Var x, const Var& memory, const LayoutPtr& cross_layout) const {
  if (has_cross_) {
    if (!memory.defined() || !cross_layout) throw ShapeError("cross-attention block needs memory");
    x = ops::add(x, cross_attn_(ln_cross_(x), memory, cross_layout));
  }
  return ops::add(x, ffn_(ln_ffn_(x)));
}

Var TransformerBlock::operator()(const Var& x, const LayoutPtr& self_layout, const Var& memory,
                                 const LayoutPtr& cross_layout) const {
  const Var h = ln_self_(x);
  return tail(ops::add(x, self_attn_(h, h, self_layout)), memory, cross_layout);
}

Var TransformerBlock::cached(const Var& x, KvCache& cache, const LayoutPtr& self_layout,
                             const Var& memory, const LayoutPtr& cross_layout) const {
  return tail(ops::add(x, self_attn_.cached(ln_self_(x), cache, self_layout)), memory, cross_layout);
}

ConformerBlock::ConformerBlock(ParamStore& store, const std::string& name, int width, int heads,
                               int ffn_hidden, int conv_kernel, Rng& rng)
    : ln_ff1_(store, name + ".ln_ff1", width),
      ln_attn_(store, name + ".ln_attn", width),
      ln_conv_(store, name + ".ln_conv", width),
      ln_conv_inner_(store, name + ".ln_conv_inner", width),
      ln_ff2_(store, name + ".ln_ff2", width),
      ln_out_(store, name + ".ln_out", width),
      ff1_(store, name + ".ff1", width, ffn_hidden, rng),
      ff2_(store, name + ".ff2", width, ffn_hidden, rng),
      attn_(store, name + ".attn", width, heads, rng),
      pw_in_(store, name + ".pw_in", width, 2 * width, rng),
      pw_out_(store, name + ".pw_out", width, width, rng) {
  dw_weight_ = store.create(name + ".dw.weight",
                            normal_mat(conv_kernel, width, 1.0 / std::sqrt(static_cast<double>(conv_kernel)), rng));
  dw_bias_ = store.create(name + ".dw.bias", Mat(1, width));
}

Var ConformerBlock::operator()(const Var& x, const LayoutPtr& layout,
                               const std::vector<RowSegment>& segments) const {
  Var y = ops::add(x, ops::scale(ff1_(ln_ff1_(x)), Real(0.5)));
  const Var h = ln_attn_(y);
  y = ops::add(y, attn_(h, h, layout));
  Var c = ops::glu(pw_in_(ln_conv_(y)));
  c = ops::depthwise_conv1d(c, dw_weight_, dw_bias_, segments);
  c = pw_out_(ops::silu(ln_conv_inner_(c)));
  y = ops::add(y, c);
  y = ops::add(y, ops::scale(ff2_(ln_ff2_(y)), Real(0.5)));
  return ln_out_(y);
}

HDPPT_NAMESPACE_END
