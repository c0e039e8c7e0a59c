#include "hdppt/lm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "hdppt/text.hpp"

HDPPT_NAMESPACE_BEGIN

std::string to_string(DecodingMode m) {
  switch (m) {
    case DecodingMode::kHierarchical: return "hierarchical";
    case DecodingMode::kNoContent: return "no_content";
    case DecodingMode::kNoPrompt: return "no_prompt";
    case DecodingMode::kParallel: return "parallel";
    case DecodingMode::kSingleStep: return "single_step";
    case DecodingMode::kNoDual: return "no_dual";
  }
  return "?";
}

DecodingMode decoding_mode_from_string(const std::string& s) {
  for (auto m : {DecodingMode::kHierarchical, DecodingMode::kNoContent, DecodingMode::kNoPrompt,
                 DecodingMode::kParallel, DecodingMode::kSingleStep, DecodingMode::kNoDual}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown decoding mode: " + s);
}

std::vector<Stream> decoder_chain(DecodingMode mode) {
  switch (mode) {
    case DecodingMode::kHierarchical: return {Stream::kContent, Stream::kPrompt, Stream::kSpeech};
    case DecodingMode::kNoContent: return {Stream::kPrompt, Stream::kSpeech};
    case DecodingMode::kNoPrompt: return {Stream::kContent, Stream::kSpeech};
    case DecodingMode::kParallel: return {Stream::kContent, Stream::kPrompt, Stream::kSpeech};
    case DecodingMode::kSingleStep:
    case DecodingMode::kNoDual: return {Stream::kSpeech};
  }
  return {};
}

void LmConfig::validate() const {
  if (speech_vocab < 1 || content_vocab < 1 || prompt_vocab < 1) throw ConfigError("lm vocab sizes must be >= 1");
  if (width < 1 || heads < 1 || width % heads != 0) throw ConfigError("lm.width must be a positive multiple of lm.heads");
  if (layers < 0 || decoder_layers < 0 || ffn_mult < 1 || decoder_ffn_mult < 1)
    throw ConfigError("lm layer settings must be non-negative");
  if (max_context < 2) throw ConfigError("lm.max_context must be >= 2");
  for (double p : {mask_prob_hidden, mask_prob_prompt}) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("lm masking probabilities must be in [0, 1]");
  }
  if (aux_weight < 0 || weight_content < 0 || weight_prompt < 0 || weight_speech < 0)
    throw ConfigError("lm loss weights must be >= 0");
}

MaskPlan sample_masks(int steps, double p_hidden, double p_prompt, Rng& rng) {
  if (!(p_hidden >= 0 && p_hidden <= 1) || !(p_prompt >= 0 && p_prompt <= 1))
    throw ConfigError("masking probabilities must be in [0, 1]");
  MaskPlan plan;
  plan.hidden.resize(steps);
  plan.prompt.resize(steps);
  for (int i = 0; i < steps; ++i) {
    plan.hidden[i] = rng.bernoulli(p_hidden);
    plan.prompt[i] = rng.bernoulli(p_prompt);
  }
  return plan;
}

HierarchicalLm::HierarchicalLm(ParamStore& store, const LmConfig& cfg, Rng& rng)
    : cfg_(cfg), chain_(decoder_chain(cfg.mode)) {
  cfg_.validate();
  const int d = cfg.width;
  text_emb_ = store.create("lm.text_emb", normal_mat(text::kVocab, d, 1.0 / std::sqrt(d), rng));
  // Row speech_vocab doubles as the begin-of-speech marker.
  speech_emb_ = store.create("lm.speech_emb", normal_mat(cfg.speech_vocab + 1, d, 1.0 / std::sqrt(d), rng));
  pos_emb_ = store.create("lm.pos_emb", normal_mat(cfg.max_context, d, 0.02, rng));
  segment_emb_ = store.create("lm.segment_emb", normal_mat(kSegments, d, 0.02, rng));
  for (int l = 0; l < cfg.layers; ++l)
    backbone_.emplace_back(store, "lm.backbone." + std::to_string(l), d, cfg.heads, cfg.ffn_mult * d, false, rng);
  backbone_ln_ = LayerNorm(store, "lm.backbone_ln", d);

  inner_pos_ = store.create("lm.decoder.inner_pos", normal_mat(3, d, 0.02, rng));
  hidden_mask_ = store.create("lm.decoder.hidden_mask", normal_mat(1, d, 0.02, rng));
  const bool has_c = std::count(chain_.begin(), chain_.end(), Stream::kContent) > 0;
  const bool has_p = std::count(chain_.begin(), chain_.end(), Stream::kPrompt) > 0;
  const bool conditioned = cfg.mode != DecodingMode::kParallel && chain_.size() > 1;
  if (conditioned && has_c) {
    content_emb_ = store.create("lm.decoder.content_emb", normal_mat(cfg.content_vocab, d, 1.0 / std::sqrt(d), rng));
    content_in_ = Linear(store, "lm.decoder.content_in", d + cfg.content_vocab, d, rng);
  }
  if (conditioned && has_p) {
    prompt_emb_ = store.create("lm.decoder.prompt_emb", normal_mat(cfg.prompt_vocab, d, 1.0 / std::sqrt(d), rng));
    prompt_mask_ = store.create("lm.decoder.prompt_mask", normal_mat(1, d, 0.02, rng));
    prompt_in_ = Linear(store, "lm.decoder.prompt_in", d + cfg.prompt_vocab, d, rng);
  }
  for (int l = 0; l < cfg.decoder_layers; ++l)
    decoder_.emplace_back(store, "lm.decoder." + std::to_string(l), d, cfg.heads,
                          cfg.decoder_ffn_mult * d, false, rng);
  decoder_ln_ = LayerNorm(store, "lm.decoder.ln", d);
  if (has_c) content_head_ = Linear(store, "lm.decoder.content_head", d, cfg.content_vocab, rng);
  if (has_p) prompt_head_ = Linear(store, "lm.decoder.prompt_head", d, cfg.prompt_vocab, rng);
  speech_head_ = Linear(store, "lm.decoder.speech_head", d, cfg.speech_vocab + 1, rng);
  aux_ = Linear(store, "lm.aux_head", d, cfg.speech_vocab + 1, rng);
}

const Linear& HierarchicalLm::head(Stream s) const {
  return s == Stream::kContent ? content_head_ : s == Stream::kPrompt ? prompt_head_ : speech_head_;
}

int HierarchicalLm::vocab(Stream s) const {
  return s == Stream::kContent ? cfg_.content_vocab
         : s == Stream::kPrompt ? cfg_.prompt_vocab
                                : cfg_.speech_vocab + 1;
}

HierarchicalLm::Context HierarchicalLm::build_context(const std::string& instruction,
                                                      const std::string& content_text,
                                                      std::span<const int> speech) const {
  Context ctx;
  if (cfg_.use_instruction) ctx.text_ids = text::encode(instruction);
  ctx.instruction_len = static_cast<int>(ctx.text_ids.size());
  ctx.text_ids.push_back(text::kSep);
  for (int c : text::encode(content_text)) ctx.text_ids.push_back(c);
  ctx.speech_ids.push_back(cfg_.speech_vocab);
  for (int s : speech) {
    if (s < 0 || s >= cfg_.speech_vocab) throw InvalidInput("speech token outside the LM vocabulary");
    ctx.speech_ids.push_back(s);
  }
  const std::size_t len = ctx.text_ids.size() + ctx.speech_ids.size();
  if (len > static_cast<std::size_t>(cfg_.max_context))
    throw InvalidInput("context overflow: " + std::to_string(len) + " positions exceed lm.max_context");
  return ctx;
}

// Positions restart at every segment (instruction, separator + content
// text, speech), so speech frame j and content character k sit at fixed
// indices regardless of how long the instruction is.
Var HierarchicalLm::embed_context(const Context& ctx) const {
  const Var parts[] = {ops::embedding(text_emb_, ctx.text_ids), ops::embedding(speech_emb_, ctx.speech_ids)};
  std::vector<int> pos, seg;
  const int text_len = static_cast<int>(ctx.text_ids.size());
  for (int i = 0; i < text_len; ++i) {
    const bool instr = i < ctx.instruction_len;
    pos.push_back(instr ? i : i - ctx.instruction_len);
    seg.push_back(instr ? 0 : 1);
  }
  for (std::size_t j = 0; j < ctx.speech_ids.size(); ++j) {
    pos.push_back(static_cast<int>(j));
    seg.push_back(2);
  }
  return ops::add(ops::add(ops::concat_rows(parts), ops::embedding(pos_emb_, pos)),
                  ops::embedding(segment_emb_, seg));
}

Var HierarchicalLm::hidden_states(std::span<const LmExample> batch) const {
  std::vector<Var> rows;
  std::vector<RowSegment> segments;
  std::vector<int> step_rows;
  int offset = 0;
  for (const auto& ex : batch) {
    const Context ctx = build_context(ex.instruction, ex.content_text, ex.speech);
    rows.push_back(embed_context(ctx));
    const int len = static_cast<int>(ctx.text_ids.size() + ctx.speech_ids.size());
    segments.push_back({offset, len});
    for (std::size_t j = 0; j < ctx.speech_ids.size(); ++j)
      step_rows.push_back(offset + static_cast<int>(ctx.text_ids.size() + j));
    offset += len;
  }
  Var x = ops::concat_rows(rows);
  const auto layout = self_attention_layout(segments, cfg_.heads, true);
  for (const auto& b : backbone_) x = b(x, layout);
  return ops::gather_rows(backbone_ln_(x), step_rows);
}

Mat HierarchicalLm::hidden_step(const std::string& instruction, const std::string& content_text,
                                std::span<const int> prefix) const {
  NoGradGuard no_grad;
  LmExample ex{instruction, content_text, {}, {}, {prefix.begin(), prefix.end()}};
  const Var h = hidden_states(std::span<const LmExample>(&ex, 1));
  Mat last(1, h.cols());
  const auto r = h.value().row(h.rows() - 1);
  std::copy(r.begin(), r.end(), last.data.begin());
  return last;
}

Var HierarchicalLm::decoder_pass(const Var& x, std::vector<KvCache>& caches, int position,
                                 int steps) const {
  auto layout = std::make_shared<kernels::AttnLayout>();
  layout->heads = cfg_.heads;
  layout->segments.resize(steps);
  for (int i = 0; i < steps; ++i) {
    auto& s = layout->segments[i];
    s.q_begin = i;
    s.q_len = 1;
    s.k_begin = i;
    s.k_len = position + 1;
    s.k_stride = steps;
  }
  Var y = ops::add(x, ops::slice_rows(inner_pos_, position, 1));
  for (std::size_t l = 0; l < decoder_.size(); ++l) y = decoder_[l].cached(y, caches[l], layout);
  return decoder_ln_(y);
}

Var HierarchicalLm::stream_input(Stream s, const Var& logits, std::span<const int> tokens,
                                 const std::vector<std::uint8_t>* prompt_mask) const {
  const int v = vocab(s);
  for (int t : tokens) {
    if (t < 0 || t >= v) throw InvalidInput("decoder input token out of range");
  }
  Var emb = ops::embedding(s == Stream::kContent ? content_emb_ : prompt_emb_, tokens);
  if (prompt_mask) emb = ops::replace_rows(emb, prompt_mask_, *prompt_mask);
  const Var parts[] = {emb, logits};
  return (s == Stream::kContent ? content_in_ : prompt_in_)(ops::concat_cols(parts));
}

DecoderLogits HierarchicalLm::decode(const Var& h, std::span<const int> content_in,
                                     std::span<const int> prompt_in, const MaskPlan* masks) const {
  const int steps = h.rows();
  std::vector<KvCache> caches(decoder_.size());
  Var x = h;
  if (masks) x = ops::replace_rows(h, hidden_mask_, masks->hidden);
  Var out = decoder_pass(x, caches, 0, steps);
  DecoderLogits result;
  auto assign = [&](Stream s, const Var& logits) {
    (s == Stream::kContent ? result.content : s == Stream::kPrompt ? result.prompt : result.speech) = logits;
  };
  if (cfg_.mode == DecodingMode::kParallel) {
    for (Stream s : chain_) assign(s, head(s)(out));
    return result;
  }
  Var logits = head(chain_[0])(out);
  assign(chain_[0], logits);
  for (std::size_t k = 1; k < chain_.size(); ++k) {
    const Stream prev = chain_[k - 1];
    const auto given = prev == Stream::kContent ? content_in : prompt_in;
    if (static_cast<int>(given.size()) != steps) throw ShapeError("decoder inputs are not aligned with the steps");
    std::vector<int> tokens(given.begin(), given.end());
    std::vector<int> fallback;
    for (int i = 0; i < steps; ++i) {
      if (tokens[i] < 0) {
        if (fallback.empty()) fallback = argmax_rows(logits.value());
        tokens[i] = fallback[i];
      }
    }
    const bool mask_prompt = masks && prev == Stream::kPrompt && chain_[k] == Stream::kSpeech;
    const Var input = stream_input(prev, logits, tokens, mask_prompt ? &masks->prompt : nullptr);
    out = decoder_pass(input, caches, static_cast<int>(k), steps);
    logits = head(chain_[k])(out);
    assign(chain_[k], logits);
  }
  return result;
}

LossRecord HierarchicalLm::loss(std::span<const LmExample> batch, Rng* rng) const {
  const bool has_c = std::count(chain_.begin(), chain_.end(), Stream::kContent) > 0;
  const bool has_p = std::count(chain_.begin(), chain_.end(), Stream::kPrompt) > 0;
  std::vector<int> speech_t, content_t, prompt_t;
  for (const auto& ex : batch) {
    const std::size_t n = ex.speech.size();
    if ((has_c && ex.content.size() != n) || (has_p && ex.prompt.size() != n))
      throw ShapeError("preference token streams are not aligned with the speech tokens");
    for (std::size_t j = 0; j < n; ++j) {
      speech_t.push_back(ex.speech[j]);
      content_t.push_back(has_c ? ex.content[j] : -1);
      prompt_t.push_back(has_p ? ex.prompt[j] : -1);
    }
    speech_t.push_back(cfg_.eos());
    content_t.push_back(-1);
    prompt_t.push_back(-1);
  }
  const Var h = hidden_states(batch);
  MaskPlan plan;
  if (rng) plan = sample_masks(h.rows(), cfg_.mask_prob_hidden, cfg_.mask_prob_prompt, *rng);
  const DecoderLogits logits = decode(h, content_t, prompt_t, rng ? &plan : nullptr);

  LossRecord rec;
  auto add = [&](const char* name, const Var& ce, double w) {
    rec.components.emplace_back(name, ce);
    rec.weights.emplace_back(name, w);
    const Var term = ops::scale(ce, static_cast<Real>(w));
    rec.total = rec.total.defined() ? ops::add(rec.total, term) : term;
  };
  if (has_c) add("content", ops::cross_entropy(logits.content, content_t), cfg_.weight_content);
  if (has_p) add("prompt", ops::cross_entropy(logits.prompt, prompt_t), cfg_.weight_prompt);
  add("speech", ops::cross_entropy(logits.speech, speech_t), cfg_.weight_speech);
  if (cfg_.aux_weight > 0) add("aux", ops::cross_entropy(aux_(h), speech_t), cfg_.aux_weight);
  return rec;
}

int sample_token(std::span<const Real> logits, const Sampling& sampling, Rng& rng) {
  const int n = static_cast<int>(logits.size());
  if (sampling.kind == SamplingKind::kGreedy) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  if (!(sampling.temperature > 0)) throw ConfigError("sampling temperature must be > 0");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  int keep = n;
  if (sampling.kind == SamplingKind::kTopK) {
    if (sampling.top_k < 1) throw ConfigError("top_k must be >= 1");
    keep = std::min(n, sampling.top_k);
    std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(),
                      [&](int a, int b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < keep; ++i) mx = std::max(mx, static_cast<double>(logits[idx[i]]));
  std::vector<double> w(keep);
  double total = 0;
  for (int i = 0; i < keep; ++i) total += w[i] = std::exp((logits[idx[i]] - mx) / sampling.temperature);
  double u = rng.uniform() * total;
  for (int i = 0; i < keep; ++i) {
    u -= w[i];
    if (u < 0) return idx[i];
  }
  return idx[keep - 1];
}

GenerationOutput HierarchicalLm::generate(const std::string& instruction,
                                          const std::string& content_text, int max_len,
                                          const Sampling& sampling, bool ignore_eos) const {
  if (max_len <= 0) throw ConfigError("max_len must be > 0");
  NoGradGuard no_grad;
  const Context ctx = build_context(instruction, content_text, {});
  const int prefix = static_cast<int>(ctx.text_ids.size() + ctx.speech_ids.size());
  if (prefix + max_len - 1 > cfg_.max_context)
    throw InvalidInput("context overflow: prompt plus max_len exceed lm.max_context");
  Rng rng(sampling.seed);

  std::vector<KvCache> caches(backbone_.size());
  Var x = embed_context(ctx);
  {
    auto layout = self_attention_layout({{0, prefix}}, cfg_.heads, true);
    for (std::size_t l = 0; l < backbone_.size(); ++l) x = backbone_[l].cached(x, caches[l], layout);
  }
  Var h = ops::slice_rows(backbone_ln_(x), prefix - 1, 1);

  GenerationOutput out;
  for (int j = 0; j < max_len; ++j) {
    std::vector<KvCache> dcaches(decoder_.size());
    StepTokens st;
    auto pick = [&](Stream s, const Var& logits) {
      std::vector<Real> row(logits.value().data);
      if (s == Stream::kSpeech && ignore_eos) row[cfg_.eos()] = -std::numeric_limits<Real>::infinity();
      const int tok = sample_token(row, sampling, rng);
      (s == Stream::kContent ? st.content : s == Stream::kPrompt ? st.prompt : st.speech) = tok;
      return tok;
    };
    Var dout = decoder_pass(h, dcaches, 0, 1);
    if (cfg_.mode == DecodingMode::kParallel) {
      for (Stream s : chain_) pick(s, head(s)(dout));
    } else {
      Var logits = head(chain_[0])(dout);
      int tok = pick(chain_[0], logits);
      for (std::size_t k = 1; k < chain_.size(); ++k) {
        const int one[] = {tok};
        dout = decoder_pass(stream_input(chain_[k - 1], logits, one, nullptr), dcaches, static_cast<int>(k), 1);
        logits = head(chain_[k])(dout);
        tok = pick(chain_[k], logits);
      }
    }
    out.steps.push_back(st);
    if (st.speech == cfg_.eos()) {
      out.stop = StopReason::kEndOfSpeech;
      return out;
    }
    out.speech.push_back(st.speech);
    if (j + 1 == max_len) break;
    const int pos = prefix + j;
    const int sid[] = {st.speech};
    const int pid[] = {j + 1};
    const int speech_segment[] = {2};
    Var y = ops::add(ops::add(ops::embedding(speech_emb_, sid), ops::embedding(pos_emb_, pid)),
                     ops::embedding(segment_emb_, speech_segment));
    kernels::AttnSegment seg;
    seg.q_len = 1;
    seg.k_len = pos + 1;
    auto layout = std::make_shared<kernels::AttnLayout>();
    layout->heads = cfg_.heads;
    layout->segments = {seg};
    for (std::size_t l = 0; l < backbone_.size(); ++l) y = backbone_[l].cached(y, caches[l], layout);
    h = backbone_ln_(y);
  }
  out.stop = StopReason::kMaxLen;
  return out;
}

LatencyStats benchmark_latency(const HierarchicalLm& lm,
                               std::span<const std::pair<std::string, std::string>> texts,
                               int steps_per_text, int repeats) {
  if (texts.empty()) throw InvalidInput("benchmark_latency: empty text set");
  if (steps_per_text < 1 || repeats < 1) throw ConfigError("benchmark_latency: steps and repeats must be >= 1");
  const Sampling greedy;
  lm.generate(texts[0].first, texts[0].second, steps_per_text, greedy, true);
  std::vector<double> per_token;
  for (int r = 0; r < repeats; ++r) {
    for (const auto& [instr, content] : texts) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto g = lm.generate(instr, content, steps_per_text, greedy, true);
      const auto t1 = std::chrono::steady_clock::now();
      per_token.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                          static_cast<double>(g.speech.size()));
    }
  }
  LatencyStats stats;
  stats.tokens = static_cast<int>(per_token.size()) * steps_per_text;
  stats.mean_ms = std::accumulate(per_token.begin(), per_token.end(), 0.0) / per_token.size();
  std::sort(per_token.begin(), per_token.end());
  const std::size_t m = per_token.size() / 2;
  stats.median_ms = per_token.size() % 2 ? per_token[m] : 0.5 * (per_token[m - 1] + per_token[m]);
  return stats;
}

HDPPT_NAMESPACE_END
