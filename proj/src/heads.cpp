#include "hdppt/heads.hpp"

#include <cmath>
#include <sstream>

#include "hdppt/text.hpp"

HDPPT_NAMESPACE_BEGIN

void HeadsConfig::validate() const {
  if (asr_dim < 1 || asr_heads < 1 || asr_dim % asr_heads != 0)
    throw ConfigError("heads.asr_dim must be a positive multiple of heads.asr_heads");
  if (clap_dim < 1 || clap_heads < 1 || clap_dim % clap_heads != 0)
    throw ConfigError("heads.clap_dim must be a positive multiple of heads.clap_heads");
  if (asr_layers < 1 || clap_queries < 1 || embed_dim < 1 || max_text < 2)
    throw ConfigError("heads: layer, query and size settings must be positive");
  if (!(tau_init > 0)) throw ConfigError("heads.tau_init must be > 0");
}

AsrHead::AsrHead(ParamStore& store, const HeadsConfig& cfg, int feature_dim, int max_frames, Rng& rng)
    : cfg_(cfg), max_frames_(max_frames) {
  const int d = cfg.asr_dim;
  in_ = Linear(store, "asr.in", feature_dim, d, rng);
  frame_pos_ = store.create("asr.frame_pos", normal_mat(max_frames, d, 0.02, rng));
  text_pos_ = store.create("asr.text_pos", normal_mat(cfg.max_text, d, 0.02, rng));
  text_emb_ = Embedding(store, "asr.text_emb", text::kVocab, d, rng);
  for (int l = 0; l < cfg.asr_layers; ++l)
    blocks_.emplace_back(store, "asr.block." + std::to_string(l), d, cfg.asr_heads, 4 * d, true, rng);
  ln_ = LayerNorm(store, "asr.ln", d);
  out_ = Linear(store, "asr.out", d, text::kVocab, rng);
}

Var AsrHead::logits(const Var& features, const std::vector<RowSegment>& frame_segments,
                    std::span<const std::string> texts) const {
  if (texts.size() != frame_segments.size()) throw ShapeError("asr: one text per utterance required");
  std::vector<int> frame_pos;
  for (const auto& s : frame_segments) {
    if (s.length > max_frames_) throw InvalidInput("asr: utterance longer than max_frames");
    for (int t = 0; t < s.length; ++t) frame_pos.push_back(t);
  }
  const Var memory = ops::add(in_(features), ops::embedding(frame_pos_, frame_pos));

  std::vector<int> ids, pos;
  std::vector<RowSegment> text_segments;
  for (const auto& t : texts) {
    if (t.empty()) throw InvalidInput("asr: empty target text");
    const int len = static_cast<int>(t.size()) + 1;
    if (len > cfg_.max_text) throw InvalidInput("asr: text longer than heads.max_text");
    text_segments.push_back({static_cast<int>(ids.size()), len});
    ids.push_back(text::kBos);
    for (int c : text::encode(t)) ids.push_back(c);
    for (int i = 0; i < len; ++i) pos.push_back(i);
  }
  Var x = ops::add(ops::embedding(text_emb_.table(), ids), ops::embedding(text_pos_, pos));
  const auto self_layout = self_attention_layout(text_segments, cfg_.asr_heads, true);
  const auto cross_layout = cross_attention_layout(text_segments, frame_segments, cfg_.asr_heads);
  for (const auto& b : blocks_) x = b(x, self_layout, memory, cross_layout);
  return out_(ln_(x));
}

Var AsrHead::loss(const Var& features, const std::vector<RowSegment>& frame_segments,
                  std::span<const std::string> texts) const {
  std::vector<int> targets;
  for (const auto& t : texts) {
    if (t.empty()) throw InvalidInput("asr: empty target text");
    for (int c : text::encode(t)) targets.push_back(c);
    targets.push_back(text::kEos);
  }
  return ops::cross_entropy(logits(features, frame_segments, texts), targets);
}

ClapHead::ClapHead(ParamStore& store, const HeadsConfig& cfg, int feature_dim, Rng& rng) : cfg_(cfg) {
  const int d = cfg.clap_dim;
  in_ = Linear(store, "clap.in", feature_dim, d, rng);
  queries_ = store.create("clap.queries", normal_mat(cfg.clap_queries, d, 1.0, rng));
  attn_ = MultiHeadAttention(store, "clap.attn", d, cfg.clap_heads, rng);
  out_ = Linear(store, "clap.out", d, cfg.embed_dim, rng);
  log_tau_ = store.create("clap.log_tau", Mat(1, 1, static_cast<Real>(std::log(cfg.tau_init))));
}

Var ClapHead::pool(const Var& features, const std::vector<RowSegment>& frame_segments) const {
  std::vector<RowSegment> query_segments;
  const int q = cfg_.clap_queries;
  for (std::size_t i = 0; i < frame_segments.size(); ++i) {
    if (frame_segments[i].length < 1) throw InvalidInput("clap_pool: empty sequence");
    query_segments.push_back({static_cast<int>(i) * q, q});
  }
  const auto layout = cross_attention_layout(query_segments, frame_segments, cfg_.clap_heads);
  const Var memory = in_(features);
  const Var attended = attn_(ops::repeat_rows(queries_, static_cast<int>(frame_segments.size())),
                             memory, layout);
  return ops::l2_normalize_rows(out_(ops::segment_mean(attended, query_segments)));
}

std::vector<Real> PromptTextEncoder::embed(std::string_view prompt) const {
  std::vector<double> acc(dim_, 0.0);
  std::istringstream words{std::string(prompt)};
  std::string w;
  bool any = false;
  auto add_word = [&](std::string_view word) {
    Rng rng(derive_seed(seed_, word));
    for (auto& a : acc) a += rng.normal();
  };
  while (words >> w) {
    add_word(w);
    any = true;
  }
  if (!any) add_word("");
  double norm = 0;
  for (double a : acc) norm += a * a;
  norm = std::sqrt(norm);
  std::vector<Real> out(dim_);
  for (int i = 0; i < dim_; ++i) out[i] = static_cast<Real>(acc[i] / norm);
  return out;
}

Mat PromptTextEncoder::embed_batch(std::span<const std::string> prompts) const {
  Mat m(static_cast<int>(prompts.size()), dim_);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto e = embed(prompts[i]);
    std::copy(e.begin(), e.end(), m.row(static_cast<int>(i)).begin());
  }
  return m;
}

Var clap_loss(const Var& audio, const Var& text, const Var& log_tau) {
  if (!audio.value().same_shape(text.value())) throw ShapeError("clap_loss: batch shape mismatch");
  const int b = audio.rows();
  if (b < 2) throw InvalidInput("clap_loss: needs a batch of at least 2");
  const Var inv_tau = ops::exp(ops::scale(log_tau, Real(-1)));
  const Var sim = ops::mul_scalar(ops::matmul_nt(audio, text), inv_tau);
  std::vector<int> diag(b);
  for (int i = 0; i < b; ++i) diag[i] = i;
  return ops::scale(ops::add(ops::cross_entropy(sim, diag),
                             ops::cross_entropy(ops::transpose(sim), diag)),
                    Real(0.5));
}

double clap_loss_value(const Mat& audio, const Mat& text, double tau) {
  NoGradGuard no_grad;
  Mat lt(1, 1, static_cast<Real>(std::log(tau)));
  return clap_loss(ops::constant(audio), ops::constant(text), ops::constant(std::move(lt))).item();
}

namespace {
void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss component: ") + what);
}
}  // namespace

Var total_codec_loss(const Var& rec, const Var& asr, const Var& clap, const LossWeights& w) {
  check_finite(rec.item(), "reconstruction");
  check_finite(asr.item(), "asr");
  check_finite(clap.item(), "clap");
  return ops::add(rec, ops::add(ops::scale(asr, static_cast<Real>(w.lambda_asr)),
                                ops::scale(clap, static_cast<Real>(w.lambda_clap))));
}

double total_codec_loss(double rec, double asr, double clap, const LossWeights& w) {
  check_finite(rec, "reconstruction");
  check_finite(asr, "asr");
  check_finite(clap, "clap");
  return rec + w.lambda_asr * asr + w.lambda_clap * clap;
}

HDPPT_NAMESPACE_END
