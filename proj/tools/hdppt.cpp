// Command-line entry point: data generation, two-stage training, labelling,
// synthesis, evaluation, ablations and latency measurement.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "hdppt/harness.hpp"

using namespace hdppt;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kRuntime = 4 };

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

Json resolve_config(const Globals& g) {
  Json cfg = g.config_path.empty() ? default_config() : load_config(g.config_path);
  for (const auto& o : g.overrides) apply_override(cfg, o);
  if (g.seed) cfg["seed"] = *g.seed;
  return cfg;
}

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", std::localtime(&t));
  return buf;
}

// Creates the run directory and writes the resolved config before any work.
// Refuses to touch an existing run unless --force is given.
fs::path prepare_run(const Globals& g, const Json& cfg, const std::string& command, const std::string& primary) {
  const std::string dump = cfg.dump();
  const fs::path dir = g.out.empty()
      ? fs::path("runs") / (timestamp() + "-" + command + "-" + hex64(fnv1a64(dump.data(), dump.size())).substr(0, 8))
      : fs::path(g.out);
  if (fs::exists(dir / primary) && !g.force)
    throw DataError((dir / primary).string() + " already exists; pass --force to overwrite");
  fs::create_directories(dir);
  write_json(dir / ("config." + command + ".json"), cfg);
  return dir;
}

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw DataError(p.string() + " not found; " + hint);
}

StepLogger print_steps(std::vector<Json>* sink) {
  return [sink](const StepLog& s) {
    std::printf("step %6d  epoch %3d  lr %.2e  loss %.4f", s.step, s.epoch, s.lr, s.total);
    Json j{{"step", s.step}, {"epoch", s.epoch}, {"lr", s.lr}, {"grad_norm", s.grad_norm}, {"total", s.total}};
    for (const auto& [name, v] : s.components) {
      std::printf("  %s %.4f", name.c_str(), v);
      j[name] = v;
    }
    std::printf("\n");
    std::fflush(stdout);
    if (sink) sink->push_back(std::move(j));
  };
}

// Reads a split and the codec fingerprint its records were labelled with.
std::pair<std::vector<Utterance>, std::string> read_labeled(const fs::path& dir, const std::string& split) {
  require_file(dir / (split + ".jsonl"), "run `gen-data` (and `label` for LM training) first");
  std::vector<Utterance> utts;
  std::string fp;
  for (const auto& j : read_jsonl(dir / (split + ".jsonl"))) {
    const std::string f = j.value("codec_fingerprint", std::string());
    if (!utts.empty() && f != fp) throw DataError("records in " + split + " were labelled by different codecs");
    fp = f;
    utts.push_back(utterance_from_json(j));
  }
  return {std::move(utts), fp};
}

UnitTable table_for(const fs::path& data_dir, const Json& cfg) {
  const fs::path p = data_dir / "unit_table.jsonl";
  return fs::exists(p) ? read_unit_table(p) : make_unit_table(world_config(cfg));
}

void print_lm_report(const std::string& name, const LmReport& r) {
  std::printf("%-18s  TER %.4f  style_acc %.4f  eos_rate %.3f  n %d\n", name.c_str(), r.token_error_rate,
              r.style_accuracy, r.eos_rate, r.count);
}

Json lm_report_json(const LmReport& r) {
  return {{"token_error_rate", r.token_error_rate}, {"style_accuracy", r.style_accuracy},
          {"eos_rate", r.eos_rate}, {"count", r.count}};
}

int cmd_gen_data(const Globals& g, int n) {
  Json cfg = resolve_config(g);
  if (n > 0) cfg["world"]["n"] = n;
  const fs::path dir = prepare_run(g, cfg, "gen-data", "train.jsonl");
  const Corpus c = make_corpus(cfg["world"]["n"].get<int>(), world_config(cfg), split_ratios(cfg),
                               prompt_templates(cfg));
  write_corpus(dir, c, cfg["world"]);
  std::printf("wrote %s: train %zu  dev %zu  test %zu\n", dir.string().c_str(), c.train.size(), c.dev.size(),
              c.test.size());
  return kOk;
}

int cmd_train(const Globals& g, const std::string& stage, const std::string& data) {
  if (stage != "codec" && stage != "lm") throw ConfigError("--stage must be codec or lm");
  const Json cfg = resolve_config(g);
  const fs::path dir = prepare_run(g, cfg, "train-" + stage, stage + ".ckpt");
  const fs::path ckpt = dir / (stage + ".ckpt");
  const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
  std::vector<Json> log;
  TrainResult tr;
  if (stage == "codec") {
    require_file(fs::path(data) / "train.jsonl", "run `gen-data` first");
    const auto train = read_split(data, "train");
    CodecSystem sys(cfg, derive_seed(seed, "codec.init"));
    tr = train_codec(sys, train, train_config(cfg, "codec"), derive_seed(seed, "codec.train"), print_steps(&log));
    sys.save(ckpt);
    std::printf("codec fingerprint %s\n", sys.fingerprint().c_str());
  } else {
    auto [train, fp] = read_labeled(data, "train");
    const LmConfig lcfg = lm_config(cfg);
    const auto chain = decoder_chain(lcfg.mode);
    if (fp.empty() && chain.front() != Stream::kSpeech)
      throw DataError(data + " is not labelled by a codec (no fingerprint); run `train --stage codec` then `label`");
    LmSystem sys(cfg, derive_seed(seed, "lm.init"), fp);
    tr = train_lm(sys, train, train_config(cfg, "lm"), derive_seed(seed, "lm.train"), print_steps(&log));
    sys.save(ckpt);
    std::printf("decoding mode %s\n", to_string(lcfg.mode).c_str());
  }
  write_jsonl(dir / (stage + "_train_log.jsonl"), log);
  std::printf("wrote %s (%d steps, %.1f s)\n", ckpt.string().c_str(), tr.steps, tr.seconds);
  return kOk;
}

int cmd_label(const Globals& g, const std::string& codec_path, const std::string& data) {
  require_file(codec_path, "train a codec with `train --stage codec`");
  const Json cfg = resolve_config(g);
  const fs::path dir = prepare_run(g, cfg, "label", "train.jsonl");
  const auto codec = CodecSystem::load(codec_path);
  const std::string fp = codec->fingerprint();
  for (const std::string split : {"train", "dev", "test"}) {
    require_file(fs::path(data) / (split + ".jsonl"), "run `gen-data` first");
    const auto labeled = label_corpus(*codec, read_split(data, split));
    std::vector<Json> rows;
    for (const auto& u : labeled) rows.push_back(utterance_to_json(u, fp));
    write_jsonl(dir / (split + ".jsonl"), rows);
    std::printf("%-5s %zu utterances labelled\n", split.c_str(), labeled.size());
  }
  write_unit_table(dir / "unit_table.jsonl", table_for(data, codec->config()));
  Json manifest = fs::exists(fs::path(data) / "manifest.json") ? read_json(fs::path(data) / "manifest.json") : Json::object();
  manifest["codec_fingerprint"] = fp;
  write_json(dir / "manifest.json", manifest);
  std::printf("codec fingerprint %s\n", fp.c_str());
  return kOk;
}

int cmd_synthesize(const Globals& g, const std::string& lm_path, const std::string& instruction,
                   const std::string& text, int max_len, const std::string& mode) {
  require_file(lm_path, "train an LM with `train --stage lm`");
  const Json cfg = resolve_config(g);
  const fs::path dir = prepare_run(g, cfg, "synthesize", "synthesis.jsonl");
  const fs::path out = dir / "synthesis.jsonl";
  const auto lm = LmSystem::load(lm_path);
  if (!mode.empty() && decoding_mode_from_string(mode) != lm->model().config().mode)
    throw ConfigError("--mode " + mode + " does not match the checkpoint's decoding mode " +
                      to_string(lm->model().config().mode));
  const std::string content = text::normalize(text);
  if (content.empty()) throw InvalidInput("--text has no characters in the text vocabulary");
  const Json& lcfg = lm->config();
  const auto templates = prompt_templates(lcfg);
  const auto it = std::find(templates.begin(), templates.end(), instruction);
  if (it == templates.end())
    std::fprintf(stderr, "warning: instruction matches no prompt template; style will not be scored\n");
  const EvalConfig ecfg = eval_config(cfg);
  const int steps = max_len > 0 ? max_len : ecfg.max_len;
  Sampling s = ecfg.sampling;
  s.seed = derive_seed(s.seed, 0);
  const GenerationOutput gen = lm->model().generate(instruction, content, steps, s);
  GenerationRecord r{"synth", content, it == templates.end() ? -1 : static_cast<int>(it - templates.begin()),
                     instruction, {}, {}, gen.speech, gen.stop == StopReason::kEndOfSpeech ? "end_of_speech" : "max_len"};
  for (const auto& st : gen.steps) {
    if (st.content >= 0) r.content.push_back(st.content);
    if (st.prompt >= 0) r.prompt.push_back(st.prompt);
  }
  const Json rec = record_to_json(r);
  write_jsonl(out, std::vector<Json>{rec});
  std::printf("%s\n", rec.dump().c_str());
  const WorldConfig world = world_config(lcfg);
  if (!gen.speech.empty()) {
    const int style = oracle_style_of(gen.speech, world);
    const auto decoded = oracle_text_lenient(gen.speech, world, make_unit_table(world));
    std::printf("oracle text \"%s\"  oracle style %d", decoded.text.c_str(), style);
    if (r.style_id >= 0) std::printf("  instructed %d  %s", r.style_id, style == r.style_id ? "match" : "mismatch");
    std::printf("\n");
  } else {
    std::printf("empty speech stream (stop: %s)\n", r.stop_reason.c_str());
  }
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& data, const std::string& split, const std::string& codec_path,
             const std::string& lm_path, bool oracle_replay, const std::string& records_path) {
  const Json cfg = resolve_config(g);
  const fs::path dir = prepare_run(g, cfg, "eval", "report.json");
  require_file(fs::path(data) / (split + ".jsonl"), "run `gen-data` first");
  const auto utts = read_split(data, split);
  const UnitTable table = table_for(data, cfg);
  const WorldConfig world = world_config(cfg);
  Json report{{"split", split}, {"count", utts.size()}};
  if (!codec_path.empty()) {
    require_file(codec_path, "train a codec with `train --stage codec`");
    const auto codec = CodecSystem::load(codec_path);
    const CodecReport cr = evaluate_codec(*codec, utts, prompt_templates(codec->config()));
    require_file(fs::path(data) / "train.jsonl", "the probe is fitted on the train split");
    const auto fit = read_split(data, "train");
    const ProbeReport pr = probe_disentanglement(*codec, fit, utts, eval_config(cfg), cfg["seed"].get<std::uint64_t>());
    report["codec"] = {{"reconstruction_accuracy", cr.reconstruction_accuracy},
                       {"retrieval_accuracy", cr.retrieval_accuracy},
                       {"content_utilization", cr.content_utilization},
                       {"prompt_utilization", cr.prompt_utilization},
                       {"style_probe_prompt_branch", pr.prompt_branch},
                       {"style_probe_content_branch", pr.content_branch},
                       {"style_probe_shuffled_labels", pr.shuffled_labels}};
    std::printf("codec  recon %.4f  retrieval %.4f  probe prompt %.4f  content %.4f  shuffled %.4f\n",
                cr.reconstruction_accuracy, cr.retrieval_accuracy, pr.prompt_branch, pr.content_branch,
                pr.shuffled_labels);
  }
  std::vector<GenerationRecord> records;
  std::string source;
  if (!records_path.empty()) {
    require_file(records_path, "pass a generations file written by `eval`");
    for (const auto& j : read_jsonl(records_path)) records.push_back(record_from_json(j));
    source = "records";
  } else if (oracle_replay) {
    records = oracle_replay_records(utts, world, table);
    source = "oracle_replay";
  } else if (!lm_path.empty()) {
    require_file(lm_path, "train an LM with `train --stage lm`");
    const auto lm = LmSystem::load(lm_path);
    records = generate_records(*lm, utts, eval_config(cfg));
    source = "lm";
  }
  if (!source.empty()) {
    std::vector<Json> rows;
    for (const auto& r : records) rows.push_back(record_to_json(r));
    write_jsonl(dir / "generations.jsonl", rows);
    const LmReport lr = score_generations(records, world, table);
    report["generation"] = lm_report_json(lr);
    report["generation"]["source"] = source;
    print_lm_report(source, lr);
  }
  if (!report.contains("codec") && !report.contains("generation"))
    throw ConfigError("eval needs --codec, --lm, --oracle-replay or --records");
  write_json(dir / "report.json", report);
  std::printf("wrote %s\n", (dir / "report.json").string().c_str());
  return kOk;
}

int cmd_ablate(const Globals& g, const std::string& data) {
  const Json cfg = resolve_config(g);
  const fs::path dir = prepare_run(g, cfg, "ablate", "ablation.jsonl");
  auto [train, fp] = read_labeled(data, "train");
  if (fp.empty()) throw DataError(data + " is not labelled by a codec; run `label` first");
  const auto test = read_split(data, "test");
  const auto rows = run_ablation_matrix(cfg, train, test, table_for(data, cfg), fp, print_steps(nullptr));
  std::vector<Json> out;
  std::printf("\n%-18s  %-12s  %-5s  %-8s  %-9s  %s\n", "variant", "mode", "instr", "TER", "style_acc", "eos_rate");
  for (const auto& r : rows) {
    Json j{{"variant", r.variant.name}, {"decoding_mode", to_string(r.variant.mode)},
           {"use_instruction", r.variant.use_instruction}, {"ok", r.ok}};
    if (r.ok) {
      j["final_loss"] = r.final_loss;
      j["report"] = lm_report_json(r.report);
      std::printf("%-18s  %-12s  %-5s  %-8.4f  %-9.4f  %.3f\n", r.variant.name.c_str(),
                  to_string(r.variant.mode).c_str(), r.variant.use_instruction ? "yes" : "no",
                  r.report.token_error_rate, r.report.style_accuracy, r.report.eos_rate);
    } else {
      j["error"] = r.error;
      std::printf("%-18s  failed: %s\n", r.variant.name.c_str(), r.error.c_str());
    }
    out.push_back(std::move(j));
  }
  write_jsonl(dir / "ablation.jsonl", out);
  return kOk;
}

int cmd_bench(const Globals& g, const std::string& lm_path, const std::string& data) {
  const Json cfg = resolve_config(g);
  const fs::path dir = prepare_run(g, cfg, "bench", "bench.json");
  const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
  std::unique_ptr<LmSystem> hier;
  Json base = cfg;
  if (!lm_path.empty()) {
    require_file(lm_path, "train an LM with `train --stage lm`");
    hier = LmSystem::load(lm_path);
    base = hier->config();
    base["eval"] = cfg["eval"];
  } else {
    base["lm"]["decoding_mode"] = "hierarchical";
    hier = std::make_unique<LmSystem>(base, derive_seed(seed, "bench.hier"), "");
  }
  Json single_cfg = base;
  single_cfg["lm"]["decoding_mode"] = "single_step";
  const LmSystem single(single_cfg, derive_seed(seed, "bench.single"), "");
  std::vector<Utterance> texts;
  if (!data.empty()) {
    texts = read_split(data, "test");
  } else {
    const WorldConfig world = world_config(base);
    const auto templates = prompt_templates(base);
    const UnitTable table = make_unit_table(world);
    for (int i = 0; i < eval_config(cfg).bench_texts; ++i) {
      Rng rng(derive_seed(seed, "bench.text." + std::to_string(i)));
      texts.push_back(sample_utterance(rng, world, table, templates));
    }
  }
  const LatencyReport r = latency_ratio(hier->model(), single.model(), texts, eval_config(cfg));
  const Json j{{"hierarchical_ms_per_token", r.hierarchical.median_ms},
               {"single_step_ms_per_token", r.single_step.median_ms},
               {"hierarchical_mean_ms", r.hierarchical.mean_ms},
               {"single_step_mean_ms", r.single_step.mean_ms},
               {"ratio", r.ratio}};
  write_json(dir / "bench.json", j);
  std::printf("hierarchical %.3f ms/token  single_step %.3f ms/token  ratio %.3f\n", r.hierarchical.median_ms,
              r.single_step.median_ms, r.ratio);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical preference-token TTS toolkit on a synthetic speech-token world"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file merged over the defaults");
  app.add_option("--override", g.overrides, "Dotted key=value override, repeatable");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Run directory (default runs/<timestamp>-<command>-<hash>)");
  app.add_flag("--force", g.force, "Overwrite existing outputs");

  int n = 0;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  gen->add_option("--n", n, "Number of utterances (default world.n)");

  std::string stage, data, codec_path, lm_path, split = "test", instruction, text, mode, records;
  int max_len = 0;
  bool oracle = false;
  auto* train = app.add_subcommand("train", "Train the codec or the LM");
  train->add_option("--stage", stage, "codec | lm")->required();
  train->add_option("--data", data, "Corpus directory (labelled for the lm stage)")->required();

  auto* label = app.add_subcommand("label", "Add codec token streams to a corpus");
  label->add_option("--codec", codec_path, "Codec checkpoint")->required();
  label->add_option("--data", data, "Corpus directory")->required();

  auto* synth = app.add_subcommand("synthesize", "Generate speech tokens for one instruction and text");
  synth->add_option("--lm", lm_path, "LM checkpoint")->required();
  synth->add_option("--instruction", instruction, "Style instruction")->required();
  synth->add_option("--text", text, "Content text")->required();
  synth->add_option("--max-len", max_len, "Step limit (default eval.max_len)");
  synth->add_option("--mode", mode, "Expected decoding mode of the checkpoint");

  auto* eval = app.add_subcommand("eval", "Codec and generation metrics on a split");
  eval->add_option("--data", data, "Corpus directory")->required();
  eval->add_option("--split", split, "train | dev | test");
  eval->add_option("--codec", codec_path, "Codec checkpoint");
  eval->add_option("--lm", lm_path, "LM checkpoint");
  eval->add_flag("--oracle-replay", oracle, "Score clean renderings of the targets");
  eval->add_option("--records", records, "Score an existing generations file");

  auto* ablate = app.add_subcommand("ablate", "Train and score all decoding variants");
  ablate->add_option("--data", data, "Labelled corpus directory")->required();

  auto* bench = app.add_subcommand("bench", "Per-token latency, hierarchical vs single-step");
  bench->add_option("--lm", lm_path, "Hierarchical LM checkpoint (default: fresh weights)");
  bench->add_option("--data", data, "Corpus directory for benchmark texts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen_data(g, n);
    if (*train) return cmd_train(g, stage, data);
    if (*label) return cmd_label(g, codec_path, data);
    if (*synth) return cmd_synthesize(g, lm_path, instruction, text, max_len, mode);
    if (*eval) return cmd_eval(g, data, split, codec_path, lm_path, oracle, records);
    if (*ablate) return cmd_ablate(g, data);
    if (*bench) return cmd_bench(g, lm_path, data);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kRuntime;
}
