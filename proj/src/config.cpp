#include "hdppt/config.hpp"

HDPPT_NAMESPACE_BEGIN

Json default_config() {
  return Json::parse(R"({
  "seed": 0,
  "world": {
    "n": 11000,
    "split": {"train": 0.9, "dev": 0.05, "test": 0.05},
    "n_styles": 8, "base_units": 64, "units_per_char": 2, "noise_rate": 0.02,
    "min_chars": 4, "max_chars": 24, "prompt_file": ""
  },
  "codec": {
    "model_dim": 256, "heads": 4, "ffn_mult": 4, "conv_kernel": 5,
    "extractor_layers": 5, "combiner_layers": 4, "max_frames": 128,
    "noise_std": 0.01, "content_levels": [6, 6, 6, 6], "prompt_levels": [4, 4, 4]
  },
  "heads": {
    "asr_dim": 128, "asr_layers": 2, "asr_heads": 4, "max_text": 64,
    "clap_dim": 128, "clap_queries": 4, "clap_heads": 4, "embed_dim": 128,
    "tau_init": 0.07, "text_encoder_seed": 32343,
    "lambda_asr": 2.0, "lambda_clap": 0.8
  },
  "lm": {
    "width": 256, "heads": 4, "layers": 4, "ffn_mult": 4, "max_context": 1024,
    "decoder_layers": 2, "decoder_ffn_mult": 2,
    "decoding_mode": "hierarchical", "use_instruction": true,
    "mask_prob_hidden": 0.15, "mask_prob_prompt": 0.15,
    "aux_weight": 0.5, "weight_content": 0.5, "weight_prompt": 0.5, "weight_speech": 1.0
  },
  "train": {
    "codec": {"epochs": 20, "batch_size": 32, "max_steps": 0, "warmup_steps": 0, "log_every": 50,
              "lr": 1e-4, "weight_decay": 0.01, "clip_norm": 1.0, "beta1": 0.9, "beta2": 0.98},
    "lm": {"epochs": 30, "batch_size": 32, "max_steps": 0, "warmup_steps": 0, "log_every": 50,
           "lr": 1e-5, "weight_decay": 0.01, "clip_norm": 1.0, "beta1": 0.9, "beta2": 0.98}
  },
  "eval": {
    "max_len": 64, "sampling": "greedy", "top_k": 10, "temperature": 1.0,
    "probe_steps": 400, "probe_lr": 0.5,
    "bench_steps": 32, "bench_repeats": 3, "bench_texts": 8
  }
})");
}

void merge_config(Json& base, const Json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config" + (where.empty() ? "" : " at " + where) + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key: " + key);
    Json& dst = base[it.key()];
    if (dst.is_object()) {
      merge_config(dst, it.value(), key);
    } else {
      if (dst.is_number() != it.value().is_number() && !dst.is_null())
        throw ConfigError("type mismatch for config key " + key);
      dst = it.value();
    }
  }
}

void apply_override(Json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::exception&) {
    value = raw;
  }
  Json patch = value;
  std::string rest = path;
  std::vector<std::string> keys;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    keys.push_back(rest.substr(0, pos));
  keys.push_back(rest);
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) patch = Json{{*it, patch}};
  merge_config(cfg, patch);
}

Json load_config(const std::filesystem::path& path) {
  Json cfg = default_config();
  Json user;
  try {
    user = read_json(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  merge_config(cfg, user);
  return cfg;
}

namespace {
template <typename T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad config value for ") + key + ": " + e.what());
  }
}
}  // namespace

WorldConfig world_config(const Json& cfg) {
  const Json& w = cfg.at("world");
  WorldConfig c;
  c.n_styles = get<int>(w, "n_styles");
  c.base_units = get<int>(w, "base_units");
  c.units_per_char = get<int>(w, "units_per_char");
  c.noise_rate = get<double>(w, "noise_rate");
  c.min_chars = get<int>(w, "min_chars");
  c.max_chars = get<int>(w, "max_chars");
  c.seed = get<std::uint64_t>(cfg, "seed");
  c.validate();
  return c;
}

std::vector<std::string> prompt_templates(const Json& cfg) {
  const auto file = get<std::string>(cfg.at("world"), "prompt_file");
  return load_prompt_templates(file.empty() ? default_prompt_file() : std::filesystem::path(file));
}

SplitRatios split_ratios(const Json& cfg) {
  const Json& s = cfg.at("world").at("split");
  return {get<double>(s, "train"), get<double>(s, "dev"), get<double>(s, "test")};
}

CodecConfig codec_config(const Json& cfg) {
  const Json& j = cfg.at("codec");
  CodecConfig c;
  c.speech_vocab = world_config(cfg).speech_vocab();
  c.model_dim = get<int>(j, "model_dim");
  c.heads = get<int>(j, "heads");
  c.ffn_mult = get<int>(j, "ffn_mult");
  c.conv_kernel = get<int>(j, "conv_kernel");
  c.extractor_layers = get<int>(j, "extractor_layers");
  c.combiner_layers = get<int>(j, "combiner_layers");
  c.max_frames = get<int>(j, "max_frames");
  c.noise_std = get<double>(j, "noise_std");
  c.content_levels = get<std::vector<int>>(j, "content_levels");
  c.prompt_levels = get<std::vector<int>>(j, "prompt_levels");
  c.validate();
  return c;
}

HeadsConfig heads_config(const Json& cfg) {
  const Json& j = cfg.at("heads");
  HeadsConfig c;
  c.asr_dim = get<int>(j, "asr_dim");
  c.asr_layers = get<int>(j, "asr_layers");
  c.asr_heads = get<int>(j, "asr_heads");
  c.max_text = get<int>(j, "max_text");
  c.clap_dim = get<int>(j, "clap_dim");
  c.clap_queries = get<int>(j, "clap_queries");
  c.clap_heads = get<int>(j, "clap_heads");
  c.embed_dim = get<int>(j, "embed_dim");
  c.tau_init = get<double>(j, "tau_init");
  c.text_encoder_seed = get<std::uint64_t>(j, "text_encoder_seed");
  c.weights.lambda_asr = get<double>(j, "lambda_asr");
  c.weights.lambda_clap = get<double>(j, "lambda_clap");
  c.validate();
  return c;
}

LmConfig lm_config(const Json& cfg) {
  const Json& j = cfg.at("lm");
  LmConfig c;
  const CodecConfig codec = codec_config(cfg);
  c.speech_vocab = codec.speech_vocab;
  c.content_vocab = static_cast<int>(FsqLevels(codec.content_levels).codebook_size());
  c.prompt_vocab = static_cast<int>(FsqLevels(codec.prompt_levels).codebook_size());
  c.width = get<int>(j, "width");
  c.heads = get<int>(j, "heads");
  c.layers = get<int>(j, "layers");
  c.ffn_mult = get<int>(j, "ffn_mult");
  c.max_context = get<int>(j, "max_context");
  c.decoder_layers = get<int>(j, "decoder_layers");
  c.decoder_ffn_mult = get<int>(j, "decoder_ffn_mult");
  c.mode = decoding_mode_from_string(get<std::string>(j, "decoding_mode"));
  c.use_instruction = get<bool>(j, "use_instruction");
  c.mask_prob_hidden = get<double>(j, "mask_prob_hidden");
  c.mask_prob_prompt = get<double>(j, "mask_prob_prompt");
  c.aux_weight = get<double>(j, "aux_weight");
  c.weight_content = get<double>(j, "weight_content");
  c.weight_prompt = get<double>(j, "weight_prompt");
  c.weight_speech = get<double>(j, "weight_speech");
  c.validate();
  return c;
}

TrainConfig train_config(const Json& cfg, const std::string& stage) {
  if (!cfg.at("train").contains(stage)) throw ConfigError("unknown training stage: " + stage);
  const Json& j = cfg.at("train").at(stage);
  TrainConfig t;
  t.epochs = get<int>(j, "epochs");
  t.batch_size = get<int>(j, "batch_size");
  t.max_steps = get<int>(j, "max_steps");
  t.warmup_steps = get<int>(j, "warmup_steps");
  t.log_every = get<int>(j, "log_every");
  t.optim.lr = get<double>(j, "lr");
  t.optim.weight_decay = get<double>(j, "weight_decay");
  t.optim.clip_norm = get<double>(j, "clip_norm");
  t.optim.beta1 = get<double>(j, "beta1");
  t.optim.beta2 = get<double>(j, "beta2");
  if (t.epochs < 1 || t.batch_size < 1 || t.max_steps < 0 || t.warmup_steps < 0)
    throw ConfigError("train." + stage + ": epochs and batch_size must be >= 1");
  if (!(t.optim.lr > 0)) throw ConfigError("train." + stage + ".lr must be > 0");
  return t;
}

EvalConfig eval_config(const Json& cfg) {
  const Json& j = cfg.at("eval");
  EvalConfig e;
  e.max_len = get<int>(j, "max_len");
  const auto kind = get<std::string>(j, "sampling");
  if (kind == "greedy") e.sampling.kind = SamplingKind::kGreedy;
  else if (kind == "top_k") e.sampling.kind = SamplingKind::kTopK;
  else if (kind == "temperature") e.sampling.kind = SamplingKind::kTemperature;
  else throw ConfigError("eval.sampling must be greedy, top_k or temperature");
  e.sampling.top_k = get<int>(j, "top_k");
  e.sampling.temperature = get<double>(j, "temperature");
  e.sampling.seed = derive_seed(get<std::uint64_t>(cfg, "seed"), "sampling");
  e.probe_steps = get<int>(j, "probe_steps");
  e.probe_lr = get<double>(j, "probe_lr");
  e.bench_steps = get<int>(j, "bench_steps");
  e.bench_repeats = get<int>(j, "bench_repeats");
  e.bench_texts = get<int>(j, "bench_texts");
  if (e.max_len < 1) throw ConfigError("eval.max_len must be >= 1");
  return e;
}

HDPPT_NAMESPACE_END
