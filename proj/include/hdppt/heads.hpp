#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hdppt/nn.hpp"

HDPPT_NAMESPACE_BEGIN

struct LossWeights {
  double lambda_asr = 2.0;
  double lambda_clap = 0.8;
};

struct HeadsConfig {
  int asr_dim = 128;
  int asr_layers = 2;
  int asr_heads = 4;
  int max_text = 64;
  int clap_dim = 128;
  int clap_queries = 4;
  int clap_heads = 4;
  int embed_dim = 128;
  double tau_init = 0.07;
  std::uint64_t text_encoder_seed = 0x7e57;
  LossWeights weights;

  void validate() const;
};

/// Autoregressive character decoder cross-attending to content-branch
/// features. Input is [BOS] + text, target is text + [EOS].
class AsrHead {
 public:
  AsrHead(ParamStore& store, const HeadsConfig& cfg, int feature_dim, int max_frames, Rng& rng);

  /// Per-row logits over text::kVocab for the packed teacher-forced inputs.
  Var logits(const Var& features, const std::vector<RowSegment>& frame_segments,
             std::span<const std::string> texts) const;
  /// Throws InvalidInput on an empty text.
  Var loss(const Var& features, const std::vector<RowSegment>& frame_segments,
           std::span<const std::string> texts) const;

 private:
  HeadsConfig cfg_;
  int max_frames_;
  Linear in_;
  Var frame_pos_, text_pos_;
  Embedding text_emb_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm ln_;
  Linear out_;
};

/// Learned-query cross-attention pool over prompt-branch features, mapped to
/// a unit-norm embedding. Holds the learnable log temperature.
class ClapHead {
 public:
  ClapHead(ParamStore& store, const HeadsConfig& cfg, int feature_dim, Rng& rng);

  /// One unit-norm row per segment. Throws InvalidInput on an empty segment.
  Var pool(const Var& features, const std::vector<RowSegment>& frame_segments) const;
  const Var& log_tau() const { return log_tau_; }

 private:
  HeadsConfig cfg_;
  Linear in_;
  Var queries_;
  MultiHeadAttention attn_;
  Linear out_;
  Var log_tau_;
};

/// Frozen bag-of-words text embedding: every whitespace token maps to a
/// seeded Gaussian vector; the sum is L2-normalised.
class PromptTextEncoder {
 public:
  PromptTextEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  std::vector<Real> embed(std::string_view prompt) const;
  Mat embed_batch(std::span<const std::string> prompts) const;
  int dim() const { return dim_; }

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Symmetric InfoNCE over the B x B cosine similarity matrix scaled by
/// exp(-log_tau). Throws InvalidInput when B < 2.
Var clap_loss(const Var& audio, const Var& text, const Var& log_tau);
double clap_loss_value(const Mat& audio, const Mat& text, double tau);

/// rec + lambda_asr * asr + lambda_clap * clap. Throws NumericError on a
/// non-finite component.
Var total_codec_loss(const Var& rec, const Var& asr, const Var& clap, const LossWeights& w);
double total_codec_loss(double rec, double asr, double clap, const LossWeights& w);

HDPPT_NAMESPACE_END
