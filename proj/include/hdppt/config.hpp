#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hdppt/codec.hpp"
#include "hdppt/heads.hpp"
#include "hdppt/io.hpp"
#include "hdppt/lm.hpp"
#include "hdppt/optim.hpp"
#include "hdppt/world.hpp"

HDPPT_NAMESPACE_BEGIN

struct TrainConfig {
  int epochs = 1;
  int batch_size = 32;
  int max_steps = 0;  // 0: no cap
  int warmup_steps = 0;
  int log_every = 50;
  AdamWConfig optim;
};

struct EvalConfig {
  int max_len = 64;
  Sampling sampling;
  int probe_steps = 400;
  double probe_lr = 0.5;
  int bench_steps = 32;
  int bench_repeats = 3;
  int bench_texts = 8;
};

/// Full default tree. Every key in a user config or override must already
/// exist here, which catches typos.
Json default_config();
/// Deep-merges `patch` into `base`; unknown keys raise ConfigError.
void merge_config(Json& base, const Json& patch, const std::string& where = "");
/// "a.b.c=value"; the value parses as JSON when it can, else as a string.
void apply_override(Json& cfg, const std::string& assignment);
Json load_config(const std::filesystem::path& path);

WorldConfig world_config(const Json& cfg);
/// Templates from world.prompt_file, or the bundled file when it is empty.
std::vector<std::string> prompt_templates(const Json& cfg);
SplitRatios split_ratios(const Json& cfg);
CodecConfig codec_config(const Json& cfg);
HeadsConfig heads_config(const Json& cfg);
LmConfig lm_config(const Json& cfg);
TrainConfig train_config(const Json& cfg, const std::string& stage);
EvalConfig eval_config(const Json& cfg);

HDPPT_NAMESPACE_END
