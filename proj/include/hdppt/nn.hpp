#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hdppt/autograd.hpp"
#include "hdppt/ops.hpp"
#include "hdppt/rng.hpp"

HDPPT_NAMESPACE_BEGIN

using LayoutPtr = std::shared_ptr<const kernels::AttnLayout>;

/// Named, ordered registry of trainable parameters.
class ParamStore {
 public:
  Var create(const std::string& name, Mat init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Var>>& params() const { return params_; }
  std::vector<std::pair<std::string, Var>> with_prefix(const std::string& prefix) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> params_;
  std::map<std::string, std::size_t> index_;
};

Mat normal_mat(int rows, int cols, double stddev, Rng& rng);

/// Layouts for packed batches of independent sequences.
LayoutPtr self_attention_layout(const std::vector<RowSegment>& segments, int heads, bool causal);
LayoutPtr cross_attention_layout(const std::vector<RowSegment>& queries,
                                 const std::vector<RowSegment>& keys, int heads);

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool bias = true);
  Var operator()(const Var& x) const { return ops::linear(x, weight_, bias_); }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }
  int in_features() const { return weight_.rows(); }
  int out_features() const { return weight_.cols(); }

 private:
  Var weight_;
  Var bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int width);
  Var operator()(const Var& x) const { return ops::layer_norm(x, gamma_, beta_); }

 private:
  Var gamma_;
  Var beta_;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, int count, int width, Rng& rng);
  Var operator()(std::span<const int> ids) const { return ops::embedding(table_, ids); }
  const Var& table() const { return table_; }
  int count() const { return table_.rows(); }

 private:
  Var table_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, int width, int hidden, Rng& rng);
  Var operator()(const Var& x) const { return down_(ops::gelu(up_(x))); }

 private:
  Linear up_;
  Linear down_;
};

/// Rows of keys and values accumulated for incremental decoding.
struct KvCache {
  Var keys;
  Var values;
  int length() const { return keys.defined() ? keys.rows() : 0; }
  void append(const Var& k, const Var& v);
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, int width, int heads, Rng& rng);

  Var operator()(const Var& queries, const Var& memory, const LayoutPtr& layout) const;
  /// Projects `x` to keys/values, appends them to `cache` and attends over
  /// the whole cache.
  Var cached(const Var& x, KvCache& cache, const LayoutPtr& layout) const;
  int heads() const { return heads_; }

 private:
  Linear q_, k_, v_, o_;
  int heads_ = 1;
};

/// Pre-norm transformer block with optional cross-attention.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParamStore& store, const std::string& name, int width, int heads,
                   int ffn_hidden, bool cross_attention, Rng& rng);

  Var operator()(const Var& x, const LayoutPtr& self_layout, const Var& memory = {},
                 const LayoutPtr& cross_layout = nullptr) const;
  Var cached(const Var& x, KvCache& cache, const LayoutPtr& self_layout,
             const Var& memory = {}, const LayoutPtr& cross_layout = nullptr) const;

 private:
  Var tail(Var x, const Var& memory, const LayoutPtr& cross_layout) const;

  LayerNorm ln_self_, ln_cross_, ln_ffn_;
  MultiHeadAttention self_attn_, cross_attn_;
  FeedForward ffn_;
  bool has_cross_ = false;
};

/// Conformer-style block: half-step FFN, self-attention, convolution module
/// (pointwise + GLU, depthwise, SiLU, pointwise), half-step FFN, final norm.
class ConformerBlock {
 public:
  ConformerBlock() = default;
  ConformerBlock(ParamStore& store, const std::string& name, int width, int heads,
                 int ffn_hidden, int conv_kernel, Rng& rng);

  Var operator()(const Var& x, const LayoutPtr& layout,
                 const std::vector<RowSegment>& segments) const;

 private:
  LayerNorm ln_ff1_, ln_attn_, ln_conv_, ln_conv_inner_, ln_ff2_, ln_out_;
  FeedForward ff1_, ff2_;
  MultiHeadAttention attn_;
  Linear pw_in_, pw_out_;
  Var dw_weight_, dw_bias_;
};

HDPPT_NAMESPACE_END
