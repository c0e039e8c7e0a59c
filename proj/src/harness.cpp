#include "hdppt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

HDPPT_NAMESPACE_BEGIN

namespace {

Json subset(const Json& cfg, std::initializer_list<const char*> keys) {
  Json out;
  for (const char* k : keys) out[k] = cfg.at(k);
  return out;
}

Json restore_config(const Checkpoint& ck, const char* kind) {
  if (ck.kind != kind) throw DataError(std::string("expected a ") + kind + " checkpoint, found " + ck.kind);
  Json cfg = default_config();
  try {
    merge_config(cfg, ck.meta.at("config"));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  return cfg;
}

std::vector<RowSegment> speech_segments(std::span<const Utterance> batch, std::vector<int>& tokens) {
  std::vector<int> lengths;
  tokens.clear();
  for (const auto& u : batch) {
    if (u.speech.empty()) throw DataError("utterance " + u.utt_id + " has no speech tokens");
    lengths.push_back(static_cast<int>(u.speech.size()));
    tokens.insert(tokens.end(), u.speech.begin(), u.speech.end());
  }
  return segments_from_lengths(lengths);
}

std::vector<Utterance> gather(std::span<const Utterance> all, const std::vector<int>& idx) {
  std::vector<Utterance> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(all[i]);
  return out;
}

using LossFn = std::function<LossRecord(const std::vector<int>& batch, Rng& rng)>;

TrainResult run_training(ParamStore& store, int n, const TrainConfig& cfg, std::uint64_t seed,
                         const LossFn& loss_fn, const StepLogger& log) {
  AdamW opt(store, cfg.optim);
  Rng order_rng(derive_seed(seed, "batches"));
  Rng noise_rng(derive_seed(seed, "noise"));
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : epoch_batches(n, cfg.batch_size, order_rng)) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      const double lr = cfg.warmup_steps > 0 && step < cfg.warmup_steps
                            ? cfg.optim.lr * (step + 1) / cfg.warmup_steps
                            : cfg.optim.lr;
      opt.set_lr(lr);
      LossRecord rec = loss_fn(batch, noise_rng);
      const double total = rec.total.item();
      if (!std::isfinite(total))
        throw NumericError("training diverged at step " + std::to_string(step) + " (loss is not finite)");
      backward(rec.total);
      StepLog sl;
      sl.step = step;
      sl.epoch = epoch;
      sl.lr = lr;
      sl.total = total;
      for (const auto& [name, v] : rec.components) sl.components.emplace_back(name, v.item());
      sl.grad_norm = opt.step();
      result.last = sl;
      if (log && (cfg.log_every > 0 && step % cfg.log_every == 0)) log(sl);
      ++step;
    }
    if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
  }
  if (log && result.last.step % std::max(1, cfg.log_every) != 0) log(result.last);
  result.steps = step;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

CodecSystem::CodecSystem(const Json& cfg, std::uint64_t init_seed)
    : config_(subset(cfg, {"seed", "world", "codec", "heads"})),
      heads_cfg_(hdppt::heads_config(cfg)),
      text_encoder_(heads_cfg_.embed_dim, heads_cfg_.text_encoder_seed) {
  const CodecConfig codec_cfg = codec_config(cfg);
  Rng rng(init_seed);
  codec_ = std::make_unique<PreferenceCodec>(store_, codec_cfg, rng);
  asr_ = std::make_unique<AsrHead>(store_, heads_cfg_, codec_->content_levels().dims(), codec_cfg.max_frames, rng);
  clap_ = std::make_unique<ClapHead>(store_, heads_cfg_, codec_->prompt_levels().dims(), rng);
}

CodecLosses CodecSystem::losses(std::span<const Utterance> batch, Rng* noise_rng) const {
  std::vector<int> tokens;
  const auto segs = speech_segments(batch, tokens);
  Var z = codec_->extract(tokens, segs);
  if (noise_rng) z = inject_noise(z, codec_->config().noise_std, *noise_rng);
  const BranchValues b = codec_->quantize_branches(z);
  CodecLosses out;
  out.rec = reconstruction_loss(codec_->combine_values(b.content, b.prompt, segs), tokens);
  std::vector<std::string> texts, prompts;
  for (const auto& u : batch) {
    texts.push_back(u.text);
    prompts.push_back(u.prompt);
  }
  out.asr = asr_->loss(b.content, segs, texts);
  const Var audio = clap_->pool(b.prompt, segs);
  out.clap = clap_loss(audio, ops::constant(text_encoder_.embed_batch(prompts)), clap_->log_tau());
  out.total = total_codec_loss(out.rec, out.asr, out.clap, heads_cfg_.weights);
  return out;
}

void CodecSystem::save(const std::filesystem::path& path) const {
  Json meta;
  meta["config"] = config_;
  meta["fingerprint"] = fingerprint();
  save_checkpoint(path, "codec", meta, store_);
}

std::unique_ptr<CodecSystem> CodecSystem::load(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  auto sys = std::make_unique<CodecSystem>(restore_config(ck, "codec"), 0);
  load_params(ck, sys->store_);
  return sys;
}

LmSystem::LmSystem(const Json& cfg, std::uint64_t init_seed, std::string codec_fingerprint)
    : config_(subset(cfg, {"seed", "world", "codec", "lm"})), codec_fingerprint_(std::move(codec_fingerprint)) {
  Rng rng(init_seed);
  model_ = std::make_unique<HierarchicalLm>(store_, lm_config(cfg), rng);
}

void LmSystem::save(const std::filesystem::path& path) const {
  Json meta;
  meta["config"] = config_;
  meta["decoding_mode"] = to_string(model_->config().mode);
  meta["use_instruction"] = model_->config().use_instruction;
  meta["codec_fingerprint"] = codec_fingerprint_;
  save_checkpoint(path, "lm", meta, store_);
}

std::unique_ptr<LmSystem> LmSystem::load(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  auto sys = std::make_unique<LmSystem>(restore_config(ck, "lm"), 0,
                                        ck.meta.value("codec_fingerprint", std::string()));
  load_params(ck, sys->store_);
  return sys;
}

std::vector<std::vector<int>> epoch_batches(int n, int batch_size, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  std::vector<std::vector<int>> batches;
  for (int b = 0; b < n; b += batch_size)
    batches.emplace_back(idx.begin() + b, idx.begin() + std::min(n, b + batch_size));
  return batches;
}

TrainResult train_codec(CodecSystem& sys, std::span<const Utterance> train, const TrainConfig& cfg,
                        std::uint64_t seed, const StepLogger& log) {
  if (train.size() < 2) throw DataError("codec training needs at least 2 utterances");
  const LossFn fn = [&](const std::vector<int>& idx, Rng& rng) {
    std::vector<int> batch = idx;
    // The contrastive term needs in-batch negatives.
    if (batch.size() < 2) batch.push_back(batch[0] == 0 ? 1 : 0);
    const auto utts = gather(train, batch);
    const CodecLosses l = sys.losses(utts, &rng);
    LossRecord rec;
    rec.total = l.total;
    rec.components = {{"rec", l.rec}, {"asr", l.asr}, {"clap", l.clap}};
    return rec;
  };
  return run_training(sys.store(), static_cast<int>(train.size()), cfg, seed, fn, log);
}

std::vector<Utterance> label_corpus(const CodecSystem& sys, std::span<const Utterance> utts) {
  std::vector<Utterance> out(utts.begin(), utts.end());
  constexpr std::size_t kChunk = 64;
  for (std::size_t b = 0; b < utts.size(); b += kChunk) {
    const auto batch = utts.subspan(b, std::min(kChunk, utts.size() - b));
    std::vector<int> tokens;
    const auto segs = speech_segments(batch, tokens);
    const PreferenceTokens t = sys.codec().encode(tokens, segs);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto& u = out[b + i];
      u.content.assign(t.content.begin() + segs[i].begin, t.content.begin() + segs[i].begin + segs[i].length);
      u.prompt_tokens.assign(t.prompt.begin() + segs[i].begin, t.prompt.begin() + segs[i].begin + segs[i].length);
    }
  }
  return out;
}

LmExample lm_example(const Utterance& u) {
  return {u.prompt, u.text, u.content, u.prompt_tokens, u.speech};
}

TrainResult train_lm(LmSystem& sys, std::span<const Utterance> labeled, const TrainConfig& cfg,
                     std::uint64_t seed, const StepLogger& log) {
  if (labeled.empty()) throw DataError("LM training needs a non-empty corpus");
  const auto& chain = sys.model().chain();
  const bool needs_labels = std::find(chain.begin(), chain.end(), Stream::kSpeech) != chain.begin();
  for (const auto& u : labeled) {
    if (needs_labels && (u.content.size() != u.speech.size() || u.prompt_tokens.size() != u.speech.size()))
      throw DataError("utterance " + u.utt_id + " has no codec labels; run `label` with a trained codec first");
  }
  std::vector<LmExample> examples;
  examples.reserve(labeled.size());
  for (const auto& u : labeled) examples.push_back(lm_example(u));
  const LossFn fn = [&](const std::vector<int>& idx, Rng& rng) {
    std::vector<LmExample> batch;
    for (int i : idx) batch.push_back(examples[i]);
    return sys.model().loss(batch, &rng);
  };
  return run_training(sys.store(), static_cast<int>(examples.size()), cfg, seed, fn, log);
}

CodecReport evaluate_codec(const CodecSystem& sys, std::span<const Utterance> utts,
                           std::span<const std::string> templates) {
  if (utts.empty()) throw DataError("evaluate_codec: empty utterance set");
  NoGradGuard no_grad;
  const Mat text_emb = sys.text_encoder().embed_batch(templates);
  std::size_t correct = 0, frames = 0, retrieved = 0;
  std::set<int> content_used, prompt_used;
  constexpr std::size_t kChunk = 64;
  for (std::size_t b = 0; b < utts.size(); b += kChunk) {
    const auto batch = utts.subspan(b, std::min(kChunk, utts.size() - b));
    std::vector<int> tokens;
    const auto segs = speech_segments(batch, tokens);
    const PreferenceTokens t = sys.codec().encode(tokens, segs);
    content_used.insert(t.content.begin(), t.content.end());
    prompt_used.insert(t.prompt.begin(), t.prompt.end());
    const auto pred = argmax_rows(sys.codec().combine(t, segs).value());
    for (std::size_t i = 0; i < tokens.size(); ++i) correct += pred[i] == tokens[i];
    frames += tokens.size();
    const Var prompt_vals = ops::constant(fsq_indices_to_rows(t.prompt, sys.codec().prompt_levels()));
    const Mat audio = sys.clap().pool(prompt_vals, segs).value();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      int best = 0;
      double best_sim = -1e30;
      for (int k = 0; k < text_emb.rows; ++k) {
        double s = 0;
        for (int c = 0; c < text_emb.cols; ++c) s += audio(static_cast<int>(i), c) * text_emb(k, c);
        if (s > best_sim) best_sim = s, best = k;
      }
      retrieved += best == batch[i].style_id;
    }
  }
  CodecReport r;
  r.reconstruction_accuracy = static_cast<double>(correct) / frames;
  r.retrieval_accuracy = static_cast<double>(retrieved) / utts.size();
  r.content_utilization = static_cast<double>(content_used.size()) / sys.codec().content_levels().codebook_size();
  r.prompt_utilization = static_cast<double>(prompt_used.size()) / sys.codec().prompt_levels().codebook_size();
  return r;
}

namespace {

struct ProbeData {
  std::vector<std::vector<double>> content, prompt;
  std::vector<int> labels;
};

ProbeData probe_features(const CodecSystem& sys, std::span<const Utterance> utts) {
  ProbeData d;
  const auto& cl = sys.codec().content_levels();
  const auto& pl = sys.codec().prompt_levels();
  constexpr std::size_t kChunk = 64;
  for (std::size_t b = 0; b < utts.size(); b += kChunk) {
    const auto batch = utts.subspan(b, std::min(kChunk, utts.size() - b));
    std::vector<int> tokens;
    const auto segs = speech_segments(batch, tokens);
    const PreferenceTokens t = sys.codec().encode(tokens, segs);
    const Mat cv = fsq_indices_to_rows(t.content, cl);
    const Mat pv = fsq_indices_to_rows(t.prompt, pl);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      std::vector<double> c(cv.cols, 0.0), p(pv.cols, 0.0);
      for (int r = segs[i].begin; r < segs[i].begin + segs[i].length; ++r) {
        for (int k = 0; k < cv.cols; ++k) c[k] += cv(r, k) / segs[i].length;
        for (int k = 0; k < pv.cols; ++k) p[k] += pv(r, k) / segs[i].length;
      }
      d.content.push_back(std::move(c));
      d.prompt.push_back(std::move(p));
      d.labels.push_back(batch[i].style_id);
    }
  }
  return d;
}

// Full-batch gradient descent on standardized features; returns held-out
// accuracy.
double fit_probe(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                 const std::vector<std::vector<double>>& xt, const std::vector<int>& yt, int classes,
                 int steps, double lr) {
  const std::size_t n = x.size(), dim = x[0].size();
  std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
  for (const auto& r : x)
    for (std::size_t k = 0; k < dim; ++k) mu[k] += r[k] / n;
  for (const auto& r : x)
    for (std::size_t k = 0; k < dim; ++k) sd[k] += (r[k] - mu[k]) * (r[k] - mu[k]) / n;
  for (auto& s : sd) s = std::sqrt(s) + 1e-8;
  auto norm = [&](const std::vector<double>& r) {
    std::vector<double> z(dim + 1, 1.0);
    for (std::size_t k = 0; k < dim; ++k) z[k] = (r[k] - mu[k]) / sd[k];
    return z;
  };
  std::vector<std::vector<double>> zs;
  for (const auto& r : x) zs.push_back(norm(r));
  std::vector<double> w((dim + 1) * classes, 0.0), g(w.size()), p(classes);
  auto scores = [&](const std::vector<double>& z) {
    for (int c = 0; c < classes; ++c) {
      double s = 0;
      for (std::size_t k = 0; k <= dim; ++k) s += z[k] * w[k * classes + c];
      p[c] = s;
    }
  };
  for (int it = 0; it < steps; ++it) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      scores(zs[i]);
      const double mx = *std::max_element(p.begin(), p.end());
      double tot = 0;
      for (auto& v : p) tot += v = std::exp(v - mx);
      for (int c = 0; c < classes; ++c) {
        const double d = p[c] / tot - (c == y[i]);
        for (std::size_t k = 0; k <= dim; ++k) g[k * classes + c] += d * zs[i][k] / n;
      }
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    scores(norm(xt[i]));
    correct += static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) == yt[i];
  }
  return static_cast<double>(correct) / xt.size();
}

}  // namespace

ProbeReport probe_disentanglement(const CodecSystem& sys, std::span<const Utterance> fit,
                                  std::span<const Utterance> held_out, const EvalConfig& cfg,
                                  std::uint64_t seed) {
  if (fit.empty() || held_out.empty()) throw DataError("probe: empty fit or held-out set");
  const ProbeData a = probe_features(sys, fit);
  const ProbeData b = probe_features(sys, held_out);
  if (std::set<int>(a.labels.begin(), a.labels.end()).size() < 2)
    throw DataError("probe: corpus has a single style class");
  const int classes = world_config(sys.config()).n_styles;
  ProbeReport r;
  r.prompt_branch = fit_probe(a.prompt, a.labels, b.prompt, b.labels, classes, cfg.probe_steps, cfg.probe_lr);
  r.content_branch = fit_probe(a.content, a.labels, b.content, b.labels, classes, cfg.probe_steps, cfg.probe_lr);
  std::vector<int> shuffled = a.labels;
  Rng rng(derive_seed(seed, "probe.shuffle"));
  for (std::size_t i = shuffled.size() - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
  r.shuffled_labels = fit_probe(a.prompt, shuffled, b.prompt, b.labels, classes, cfg.probe_steps, cfg.probe_lr);
  return r;
}

Json record_to_json(const GenerationRecord& r) {
  Json j;
  j["utt_id"] = r.utt_id;
  j["text"] = r.text;
  j["style_id"] = r.style_id;
  j["instruction"] = r.instruction;
  j["content"] = r.content;
  j["prompt"] = r.prompt;
  j["speech"] = r.speech;
  j["stop_reason"] = r.stop_reason;
  return j;
}

GenerationRecord record_from_json(const Json& j) {
  try {
    GenerationRecord r;
    r.utt_id = j.at("utt_id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.style_id = j.at("style_id").get<int>();
    r.instruction = j.at("instruction").get<std::string>();
    r.content = j.at("content").get<std::vector<int>>();
    r.prompt = j.at("prompt").get<std::vector<int>>();
    r.speech = j.at("speech").get<std::vector<int>>();
    r.stop_reason = j.at("stop_reason").get<std::string>();
    return r;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed generation record: ") + e.what());
  }
}

std::vector<GenerationRecord> generate_records(const LmSystem& sys, std::span<const Utterance> utts,
                                               const EvalConfig& cfg) {
  std::vector<GenerationRecord> out;
  out.reserve(utts.size());
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const auto& u = utts[i];
    Sampling s = cfg.sampling;
    s.seed = derive_seed(cfg.sampling.seed, i);
    const GenerationOutput g = sys.model().generate(u.prompt, u.text, cfg.max_len, s);
    GenerationRecord r{u.utt_id, u.text, u.style_id, u.prompt, {}, {}, g.speech,
                       g.stop == StopReason::kEndOfSpeech ? "end_of_speech" : "max_len"};
    for (std::size_t j = 0; j < g.speech.size(); ++j) {
      if (g.steps[j].content >= 0) r.content.push_back(g.steps[j].content);
      if (g.steps[j].prompt >= 0) r.prompt.push_back(g.steps[j].prompt);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GenerationRecord> oracle_replay_records(std::span<const Utterance> utts,
                                                    const WorldConfig& world, const UnitTable& table) {
  std::vector<GenerationRecord> out;
  for (const auto& u : utts) {
    out.push_back({u.utt_id, u.text, u.style_id, u.prompt, {}, {},
                   render_speech(u.text, u.style_id, world, table), "end_of_speech"});
  }
  return out;
}

LmReport score_generations(std::span<const GenerationRecord> records, const WorldConfig& world,
                           const UnitTable& table) {
  LmReport r;
  if (records.empty()) return r;
  double edits = 0, chars = 0, styles = 0, eos = 0;
  for (const auto& g : records) {
    const std::string hyp = g.speech.empty() ? std::string() : oracle_text_lenient(g.speech, world, table).text;
    edits += edit_distance(hyp, g.text);
    chars += static_cast<double>(g.text.size());
    if (!g.speech.empty() && oracle_style_of(g.speech, world) == g.style_id) styles += 1;
    if (g.stop_reason == "end_of_speech") eos += 1;
  }
  r.count = static_cast<int>(records.size());
  r.token_error_rate = chars > 0 ? edits / chars : 0;
  r.style_accuracy = styles / r.count;
  r.eos_rate = eos / r.count;
  return r;
}

std::vector<AblationVariant> ablation_variants() {
  return {
      {"proposed", DecodingMode::kHierarchical, true},
      {"wo_content_pref", DecodingMode::kNoContent, true},
      {"wo_prompt_pref", DecodingMode::kNoPrompt, true},
      {"wo_dual_pref", DecodingMode::kNoDual, true},
      {"wo_instruct_text", DecodingMode::kHierarchical, false},
      {"parallel", DecodingMode::kParallel, true},
      {"single_step", DecodingMode::kSingleStep, true},
  };
}

std::vector<AblationRow> run_ablation_matrix(const Json& base_cfg, std::span<const Utterance> labeled_train,
                                             std::span<const Utterance> test, const UnitTable& table,
                                             const std::string& codec_fingerprint, const StepLogger& log) {
  const std::uint64_t seed = base_cfg.at("seed").get<std::uint64_t>();
  const WorldConfig world = world_config(base_cfg);
  const EvalConfig ecfg = eval_config(base_cfg);
  std::vector<AblationRow> rows;
  for (const auto& v : ablation_variants()) {
    AblationRow row;
    row.variant = v;
    // Variants that build the same network share one training run.
    const auto same = std::find_if(rows.begin(), rows.end(), [&](const AblationRow& r) {
      return r.variant.use_instruction == v.use_instruction && decoder_chain(r.variant.mode) == decoder_chain(v.mode) &&
             (v.mode == DecodingMode::kParallel) == (r.variant.mode == DecodingMode::kParallel);
    });
    if (same != rows.end()) {
      row = *same;
      row.variant = v;
      rows.push_back(std::move(row));
      continue;
    }
    try {
      Json cfg = base_cfg;
      cfg["lm"]["decoding_mode"] = to_string(v.mode);
      cfg["lm"]["use_instruction"] = v.use_instruction;
      LmSystem sys(cfg, derive_seed(seed, "lm.init"), codec_fingerprint);
      const TrainResult tr = train_lm(sys, labeled_train, train_config(cfg, "lm"), derive_seed(seed, "lm.train"), log);
      row.final_loss = tr.last.total;
      const auto records = generate_records(sys, test, ecfg);
      row.report = score_generations(records, world, table);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

LatencyReport latency_ratio(const HierarchicalLm& hierarchical, const HierarchicalLm& single_step,
                            std::span<const Utterance> utts, const EvalConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> texts;
  for (std::size_t i = 0; i < utts.size() && static_cast<int>(i) < cfg.bench_texts; ++i)
    texts.emplace_back(utts[i].prompt, utts[i].text);
  LatencyReport r;
  r.hierarchical = benchmark_latency(hierarchical, texts, cfg.bench_steps, cfg.bench_repeats);
  r.single_step = benchmark_latency(single_step, texts, cfg.bench_steps, cfg.bench_repeats);
  r.ratio = r.hierarchical.median_ms / r.single_step.median_ms;
  return r;
}

HDPPT_NAMESPACE_END
