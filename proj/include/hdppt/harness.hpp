#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hdppt/config.hpp"

HDPPT_NAMESPACE_BEGIN

struct CodecLosses {
  Var rec, asr, clap, total;
};

/// Codec plus its two supervision heads and the frozen prompt-text encoder.
class CodecSystem {
 public:
  /// `cfg` is a full config tree; only world/codec/heads are used.
  CodecSystem(const Json& cfg, std::uint64_t init_seed);

  /// Eq.-1 style objective on a batch. Noise is injected when `noise_rng`
  /// is given (training mode).
  CodecLosses losses(std::span<const Utterance> batch, Rng* noise_rng) const;
  std::string fingerprint() const { return hdppt::fingerprint(config_, store_); }

  const Json& config() const { return config_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const PreferenceCodec& codec() const { return *codec_; }
  const AsrHead& asr() const { return *asr_; }
  const ClapHead& clap() const { return *clap_; }
  const PromptTextEncoder& text_encoder() const { return text_encoder_; }
  const HeadsConfig& heads_config() const { return heads_cfg_; }

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<CodecSystem> load(const std::filesystem::path& path);

 private:
  Json config_;
  HeadsConfig heads_cfg_;
  ParamStore store_;
  std::unique_ptr<PreferenceCodec> codec_;
  std::unique_ptr<AsrHead> asr_;
  std::unique_ptr<ClapHead> clap_;
  PromptTextEncoder text_encoder_;
};

class LmSystem {
 public:
  LmSystem(const Json& cfg, std::uint64_t init_seed, std::string codec_fingerprint);

  const Json& config() const { return config_; }
  ParamStore& store() { return store_; }
  const HierarchicalLm& model() const { return *model_; }
  const std::string& codec_fingerprint() const { return codec_fingerprint_; }

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<LmSystem> load(const std::filesystem::path& path);

 private:
  Json config_;
  ParamStore store_;
  std::unique_ptr<HierarchicalLm> model_;
  std::string codec_fingerprint_;
};

struct StepLog {
  int step = 0;
  int epoch = 0;
  double lr = 0;
  double grad_norm = 0;
  double total = 0;
  std::vector<std::pair<std::string, double>> components;
};
using StepLogger = std::function<void(const StepLog&)>;

struct TrainResult {
  int steps = 0;
  double seconds = 0;
  StepLog last;
};

/// Shuffled mini-batches of indices, one list per epoch.
std::vector<std::vector<int>> epoch_batches(int n, int batch_size, Rng& rng);

TrainResult train_codec(CodecSystem& sys, std::span<const Utterance> train, const TrainConfig& cfg,
                        std::uint64_t seed, const StepLogger& log = {});

/// Adds content/prompt token streams from the frozen codec.
std::vector<Utterance> label_corpus(const CodecSystem& sys, std::span<const Utterance> utts);

LmExample lm_example(const Utterance& u);
/// Refuses utterances without codec labels when the mode needs them.
TrainResult train_lm(LmSystem& sys, std::span<const Utterance> labeled, const TrainConfig& cfg,
                     std::uint64_t seed, const StepLogger& log = {});

struct CodecReport {
  double reconstruction_accuracy = 0;
  double retrieval_accuracy = 0;
  double prompt_utilization = 0;
  double content_utilization = 0;
};
CodecReport evaluate_codec(const CodecSystem& sys, std::span<const Utterance> utts,
                           std::span<const std::string> templates);

struct ProbeReport {
  double prompt_branch = 0;
  double content_branch = 0;
  double shuffled_labels = 0;  // prompt-branch features, permuted labels
};
/// Multinomial logistic regression from mean-pooled dequantized branch
/// vectors to style id, fitted on `fit` and scored on `held_out`.
ProbeReport probe_disentanglement(const CodecSystem& sys, std::span<const Utterance> fit,
                                  std::span<const Utterance> held_out, const EvalConfig& cfg,
                                  std::uint64_t seed);

struct GenerationRecord {
  std::string utt_id;
  std::string text;
  int style_id = 0;
  std::string instruction;
  std::vector<int> content, prompt, speech;
  std::string stop_reason;
};
Json record_to_json(const GenerationRecord& r);
GenerationRecord record_from_json(const Json& j);

std::vector<GenerationRecord> generate_records(const LmSystem& sys, std::span<const Utterance> utts,
                                               const EvalConfig& cfg);
/// Records whose speech is the clean rendering of the target.
std::vector<GenerationRecord> oracle_replay_records(std::span<const Utterance> utts,
                                                    const WorldConfig& world, const UnitTable& table);

struct LmReport {
  double token_error_rate = 0;
  double style_accuracy = 0;
  double eos_rate = 0;
  int count = 0;
};
LmReport score_generations(std::span<const GenerationRecord> records, const WorldConfig& world,
                           const UnitTable& table);

struct AblationVariant {
  std::string name;
  DecodingMode mode;
  bool use_instruction;
};
std::vector<AblationVariant> ablation_variants();

struct AblationRow {
  AblationVariant variant;
  bool ok = false;
  std::string error;
  double final_loss = 0;
  LmReport report;
};
std::vector<AblationRow> run_ablation_matrix(const Json& base_cfg, std::span<const Utterance> labeled_train,
                                             std::span<const Utterance> test, const UnitTable& table,
                                             const std::string& codec_fingerprint,
                                             const StepLogger& log = {});

struct LatencyReport {
  LatencyStats hierarchical, single_step;
  double ratio = 0;
};
LatencyReport latency_ratio(const HierarchicalLm& hierarchical, const HierarchicalLm& single_step,
                            std::span<const Utterance> utts, const EvalConfig& cfg);

HDPPT_NAMESPACE_END
