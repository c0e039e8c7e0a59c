#include "hdppt/codec.hpp"

#include <cmath>
#include <string>

HDPPT_NAMESPACE_BEGIN

void CodecConfig::validate() const {
  if (speech_vocab < 2) throw ConfigError("codec.speech_vocab must be >= 2");
  if (model_dim < 1 || heads < 1 || model_dim % heads != 0)
    throw ConfigError("codec.model_dim must be a positive multiple of codec.heads");
  if (extractor_layers < 0 || combiner_layers < 0) throw ConfigError("codec layer counts must be >= 0");
  if (ffn_mult < 1 || conv_kernel < 1 || conv_kernel % 2 == 0)
    throw ConfigError("codec.ffn_mult must be >= 1 and codec.conv_kernel odd");
  if (max_frames < 1) throw ConfigError("codec.max_frames must be >= 1");
  if (!(noise_std >= 0)) throw ConfigError("codec.noise_std must be >= 0");
}

std::vector<RowSegment> segments_from_lengths(std::span<const int> lengths) {
  std::vector<RowSegment> segs;
  segs.reserve(lengths.size());
  int begin = 0;
  for (int len : lengths) {
    segs.push_back({begin, len});
    begin += len;
  }
  return segs;
}

PreferenceCodec::PreferenceCodec(ParamStore& store, const CodecConfig& cfg, Rng& rng)
    : cfg_(cfg), content_levels_(cfg.content_levels), prompt_levels_(cfg.prompt_levels) {
  cfg_.validate();
  const int d = cfg.model_dim;
  token_emb_ = Embedding(store, "codec.token_emb", cfg.speech_vocab, d, rng);
  extractor_pos_ = store.create("codec.extractor_pos", normal_mat(cfg.max_frames, d, 0.02, rng));
  for (int l = 0; l < cfg.extractor_layers; ++l) {
    extractor_.emplace_back(store, "codec.extractor." + std::to_string(l), d, cfg.heads,
                            cfg.ffn_mult * d, cfg.conv_kernel, rng);
  }
  content_proj_ = Linear(store, "codec.content_proj", d, content_levels_.dims(), rng);
  prompt_proj_ = Linear(store, "codec.prompt_proj", d, prompt_levels_.dims(), rng);
  content_in_ = Linear(store, "codec.content_in", content_levels_.dims(), d, rng);
  prompt_in_ = Linear(store, "codec.prompt_in", prompt_levels_.dims(), d, rng, false);
  combiner_pos_ = store.create("codec.combiner_pos", normal_mat(cfg.max_frames, d, 0.02, rng));
  for (int l = 0; l < cfg.combiner_layers; ++l) {
    combiner_.emplace_back(store, "codec.combiner." + std::to_string(l), d, cfg.heads,
                           cfg.ffn_mult * d, false, rng);
  }
  combiner_ln_ = LayerNorm(store, "codec.combiner_ln", d);
  combiner_out_ = Linear(store, "codec.combiner_out", d, cfg.speech_vocab, rng);
}

Var PreferenceCodec::add_positions(const Var& x, const std::vector<RowSegment>& segments,
                                   const Var& table) const {
  std::vector<int> pos;
  pos.reserve(x.rows());
  for (const auto& s : segments) {
    if (s.length > cfg_.max_frames)
      throw InvalidInput("utterance longer than codec.max_frames (" + std::to_string(s.length) + ")");
    for (int t = 0; t < s.length; ++t) pos.push_back(t);
  }
  if (static_cast<int>(pos.size()) != x.rows()) throw ShapeError("segments do not cover the batch");
  return ops::add(x, ops::embedding(table, pos));
}

Var PreferenceCodec::extract(std::span<const int> speech,
                             const std::vector<RowSegment>& segments) const {
  for (int t : speech) {
    if (t < 0 || t >= cfg_.speech_vocab)
      throw InvalidInput("speech token " + std::to_string(t) + " outside the codec vocabulary");
  }
  Var x = add_positions(token_emb_(speech), segments, extractor_pos_);
  const auto layout = self_attention_layout(segments, cfg_.heads, false);
  for (const auto& block : extractor_) x = block(x, layout, segments);
  return x;
}

BranchValues PreferenceCodec::quantize_branches(const Var& z) const {
  return {fsq_quantize_ste(content_proj_(z), content_levels_),
          fsq_quantize_ste(prompt_proj_(z), prompt_levels_)};
}

PreferenceTokens PreferenceCodec::encode_preferences(const Var& z) const {
  NoGradGuard no_grad;
  const BranchValues b = quantize_branches(z);
  return {fsq_rows_to_indices(b.content.value(), content_levels_),
          fsq_rows_to_indices(b.prompt.value(), prompt_levels_)};
}

Var PreferenceCodec::combine_values(const Var& content, const Var& prompt,
                                    const std::vector<RowSegment>& segments) const {
  if (content.rows() != prompt.rows())
    throw ShapeError("combine: content and prompt streams are not aligned");
  Var x = add_positions(ops::add(content_in_(content), prompt_in_(prompt)), segments, combiner_pos_);
  const auto layout = self_attention_layout(segments, cfg_.heads, true);
  for (const auto& block : combiner_) x = block(x, layout);
  return combiner_out_(combiner_ln_(x));
}

Var PreferenceCodec::combine(const PreferenceTokens& tokens,
                             const std::vector<RowSegment>& segments) const {
  if (tokens.content.size() != tokens.prompt.size())
    throw ShapeError("combine: content and prompt streams are not aligned");
  return combine_values(ops::constant(fsq_indices_to_rows(tokens.content, content_levels_)),
                        ops::constant(fsq_indices_to_rows(tokens.prompt, prompt_levels_)), segments);
}

PreferenceTokens PreferenceCodec::encode(std::span<const int> speech,
                                         const std::vector<RowSegment>& segments) const {
  NoGradGuard no_grad;
  return encode_preferences(extract(speech, segments));
}

PreferenceTokens PreferenceCodec::encode(std::span<const int> speech) const {
  if (speech.empty()) throw InvalidInput("encode: empty speech");
  return encode(speech, {{0, static_cast<int>(speech.size())}});
}

Var inject_noise(const Var& z, double stddev, Rng& rng) {
  if (!(stddev >= 0)) throw ConfigError("noise std must be >= 0");
  if (stddev == 0) return z;
  Mat eps(z.rows(), z.cols());
  for (auto& v : eps.data) v = static_cast<Real>(rng.normal() * stddev);
  return ops::add(z, ops::constant(std::move(eps)));
}

Var reconstruction_loss(const Var& logits, std::span<const int> targets) {
  if (static_cast<int>(targets.size()) != logits.rows())
    throw ShapeError("reconstruction_loss: target count does not match logits rows");
  return ops::cross_entropy(logits, targets);
}

HDPPT_NAMESPACE_END
