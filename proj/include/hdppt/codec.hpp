#pragma once

#include <span>
#include <vector>

#include "hdppt/fsq.hpp"
#include "hdppt/nn.hpp"

HDPPT_NAMESPACE_BEGIN

struct CodecConfig {
  int speech_vocab = 512;
  int model_dim = 256;
  int heads = 4;
  int ffn_mult = 4;
  int conv_kernel = 5;
  int extractor_layers = 5;
  int combiner_layers = 4;
  int max_frames = 128;
  double noise_std = 0.01;
  std::vector<int> content_levels{6, 6, 6, 6};
  std::vector<int> prompt_levels{4, 4, 4};

  void validate() const;
};

/// Time-aligned content/prompt codebook indices.
struct PreferenceTokens {
  std::vector<int> content;
  std::vector<int> prompt;
};

/// Differentiable outputs of the two quantizer branches, one row per frame.
struct BranchValues {
  Var content;
  Var prompt;
};

/// Speech-token codec: a non-causal conformer extractor produces Z; two
/// independent linear + FSQ branches quantize it; a causal transformer
/// combiner reconstructs the speech tokens from the dequantized codes.
///
/// All sequence-level methods work on packed batches: rows of every
/// utterance are concatenated and `segments` delimit them.
class PreferenceCodec {
 public:
  PreferenceCodec(ParamStore& store, const CodecConfig& cfg, Rng& rng);

  const CodecConfig& config() const { return cfg_; }
  const FsqLevels& content_levels() const { return content_levels_; }
  const FsqLevels& prompt_levels() const { return prompt_levels_; }

  Var extract(std::span<const int> speech, const std::vector<RowSegment>& segments) const;
  BranchValues quantize_branches(const Var& z) const;
  /// Pre-quantization branch inputs (projections of Z).
  Var content_projection(const Var& z) const { return content_proj_(z); }
  Var prompt_projection(const Var& z) const { return prompt_proj_(z); }
  PreferenceTokens encode_preferences(const Var& z) const;
  Var combine_values(const Var& content, const Var& prompt,
                     const std::vector<RowSegment>& segments) const;
  /// Throws ShapeError when the two streams are not aligned.
  Var combine(const PreferenceTokens& tokens, const std::vector<RowSegment>& segments) const;
  /// Eval-mode extract -> quantize, no noise and no graph.
  PreferenceTokens encode(std::span<const int> speech,
                          const std::vector<RowSegment>& segments) const;
  PreferenceTokens encode(std::span<const int> speech) const;

 private:
  Var add_positions(const Var& x, const std::vector<RowSegment>& segments, const Var& table) const;

  CodecConfig cfg_;
  FsqLevels content_levels_, prompt_levels_;
  Embedding token_emb_;
  Var extractor_pos_, combiner_pos_;
  std::vector<ConformerBlock> extractor_;
  Linear content_proj_, prompt_proj_;
  Linear content_in_, prompt_in_;
  std::vector<TransformerBlock> combiner_;
  LayerNorm combiner_ln_;
  Linear combiner_out_;
};

/// Z + eps with eps ~ N(0, std^2) elementwise. Throws ConfigError on a
/// negative std.
Var inject_noise(const Var& z, double stddev, Rng& rng);

/// Mean token cross-entropy of the combiner logits.
Var reconstruction_loss(const Var& logits, std::span<const int> targets);

std::vector<RowSegment> segments_from_lengths(std::span<const int> lengths);

HDPPT_NAMESPACE_END
