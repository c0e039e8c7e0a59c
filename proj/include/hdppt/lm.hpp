#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hdppt/nn.hpp"

HDPPT_NAMESPACE_BEGIN

/// How the per-timestep decoder is wired.
///   hierarchical  content -> prompt -> speech, each conditioned on the last
///   no_content    prompt -> speech
///   no_prompt     content -> speech
///   parallel      all three heads read the first decoder position only
///   single_step   speech only, from the first decoder position
///   no_dual       no preference streams; same wiring as single_step
enum class DecodingMode { kHierarchical, kNoContent, kNoPrompt, kParallel, kSingleStep, kNoDual };

std::string to_string(DecodingMode m);
/// Throws ConfigError on an unknown name.
DecodingMode decoding_mode_from_string(const std::string& s);

enum class Stream { kContent, kPrompt, kSpeech };

struct LmConfig {
  int speech_vocab = 512;
  int content_vocab = 1296;
  int prompt_vocab = 64;
  int width = 256;
  int heads = 4;
  int layers = 4;
  int ffn_mult = 4;
  int max_context = 1024;
  int decoder_layers = 2;
  int decoder_ffn_mult = 2;
  DecodingMode mode = DecodingMode::kHierarchical;
  bool use_instruction = true;
  double mask_prob_hidden = 0.15;
  double mask_prob_prompt = 0.15;
  double aux_weight = 0.5;
  double weight_content = 0.5;
  double weight_prompt = 0.5;
  double weight_speech = 1.0;

  void validate() const;
  int eos() const { return speech_vocab; }
};

/// Streams produced at the decoder positions, in order.
std::vector<Stream> decoder_chain(DecodingMode mode);

struct LmExample {
  std::string instruction;
  std::string content_text;
  std::vector<int> content;  // preference tokens, aligned with speech
  std::vector<int> prompt;
  std::vector<int> speech;
};

struct DecoderLogits {
  Var content, prompt, speech;  // undefined when the mode lacks the stream
};

/// Per-step replacement flags for the decoder's hidden-state input and for
/// the prompt embedding that feeds the speech position.
struct MaskPlan {
  std::vector<std::uint8_t> hidden;
  std::vector<std::uint8_t> prompt;
};
/// Independent Bernoulli draws per step. Throws ConfigError on
/// probabilities outside [0, 1].
MaskPlan sample_masks(int steps, double p_hidden, double p_prompt, Rng& rng);

struct LossRecord {
  Var total;
  std::vector<std::pair<std::string, Var>> components;  // unweighted CE terms
  std::vector<std::pair<std::string, double>> weights;
};

enum class SamplingKind { kGreedy, kTopK, kTemperature };

struct Sampling {
  SamplingKind kind = SamplingKind::kGreedy;
  int top_k = 10;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

struct StepTokens {
  int content = -1;  // -1 when the mode has no such stream
  int prompt = -1;
  int speech = -1;
};

enum class StopReason { kEndOfSpeech, kMaxLen };

struct GenerationOutput {
  std::vector<StepTokens> steps;
  std::vector<int> speech;  // without the terminator
  StopReason stop = StopReason::kMaxLen;
};

/// Autoregressive backbone over [instruction] SEP [content] BOS s_0 .. s_{n-1}
/// plus the per-step decoder and the auxiliary linear speech head.
class HierarchicalLm {
 public:
  HierarchicalLm(ParamStore& store, const LmConfig& cfg, Rng& rng);

  const LmConfig& config() const { return cfg_; }
  const std::vector<Stream>& chain() const { return chain_; }

  /// Backbone hidden states at the n + 1 step positions of every example
  /// (BOS and each fed speech token), packed in example order.
  Var hidden_states(std::span<const LmExample> batch) const;
  /// Hidden state for the next step after `prefix`; eval mode.
  Mat hidden_step(const std::string& instruction, const std::string& content_text,
                  std::span<const int> prefix) const;

  /// Teacher-forced decoder over rows of h. content_in / prompt_in hold the
  /// tokens fed forward; a negative entry feeds the model's own argmax.
  /// `masks` (optional) applies the training-time replacements.
  DecoderLogits decode(const Var& h, std::span<const int> content_in,
                       std::span<const int> prompt_in, const MaskPlan* masks) const;

  Var aux_logits(const Var& h) const { return aux_(h); }

  /// Teacher-forced objective. Masking draws from `rng` when given.
  LossRecord loss(std::span<const LmExample> batch, Rng* rng) const;

  /// Throws ConfigError when max_len <= 0. With `ignore_eos` the loop always
  /// runs max_len steps (used for latency measurement).
  GenerationOutput generate(const std::string& instruction, const std::string& content_text,
                            int max_len, const Sampling& sampling, bool ignore_eos = false) const;

 private:
  struct Context {
    std::vector<int> text_ids;
    std::vector<int> speech_ids;
    int instruction_len = 0;
  };
  Context build_context(const std::string& instruction, const std::string& content_text,
                        std::span<const int> speech) const;
  Var embed_context(const Context& ctx) const;
  Var stream_input(Stream s, const Var& logits, std::span<const int> tokens,
                   const std::vector<std::uint8_t>* prompt_mask) const;
  Var decoder_pass(const Var& x, std::vector<KvCache>& caches, int position, int steps) const;
  const Linear& head(Stream s) const;
  int vocab(Stream s) const;

  LmConfig cfg_;
  std::vector<Stream> chain_;
  static constexpr int kSegments = 3;
  Var text_emb_, speech_emb_, pos_emb_, segment_emb_;
  std::vector<TransformerBlock> backbone_;
  LayerNorm backbone_ln_;
  Var inner_pos_, hidden_mask_, prompt_mask_;
  Var content_emb_, prompt_emb_;
  Linear content_in_, prompt_in_;
  std::vector<TransformerBlock> decoder_;
  LayerNorm decoder_ln_;
  Linear content_head_, prompt_head_, speech_head_;
  Linear aux_;
};

/// Draws one token from a logits row under the sampling rule.
int sample_token(std::span<const Real> logits, const Sampling& sampling, Rng& rng);

struct LatencyStats {
  double median_ms = 0;  // per emitted speech token
  double mean_ms = 0;
  int tokens = 0;
};

/// Generates `steps_per_text` tokens (terminator ignored) for every
/// instruction/content pair after one warm-up pass, timing each call.
LatencyStats benchmark_latency(const HierarchicalLm& lm,
                               std::span<const std::pair<std::string, std::string>> texts,
                               int steps_per_text, int repeats);

HDPPT_NAMESPACE_END
