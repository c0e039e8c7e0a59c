#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hdppt/config.hpp"
#include "hdppt/io.hpp"

using namespace hdppt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hdppt_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("defaults carry the stage learning rates and loss weights") {
  const Json cfg = default_config();
  CHECK(train_config(cfg, "codec").optim.lr == 1e-4);
  CHECK(train_config(cfg, "lm").optim.lr == 1e-5);
  CHECK(heads_config(cfg).weights.lambda_asr == 2.0);
  CHECK(heads_config(cfg).weights.lambda_clap == 0.8);
  const CodecConfig c = codec_config(cfg);
  CHECK(c.content_levels == std::vector<int>{6, 6, 6, 6});
  CHECK(c.prompt_levels == std::vector<int>{4, 4, 4});
  const LmConfig l = lm_config(cfg);
  CHECK(l.content_vocab == 1296);
  CHECK(l.prompt_vocab == 64);
  CHECK(l.speech_vocab == 512);
  CHECK(world_config(cfg).speech_vocab() == 512);
  CHECK_THROWS_AS(train_config(cfg, "vocoder"), ConfigError);
}

TEST_CASE("overrides and merging") {
  Json cfg = default_config();
  apply_override(cfg, "lm.width=32");
  apply_override(cfg, "lm.decoding_mode=parallel");
  apply_override(cfg, "codec.content_levels=[4,4]");
  CHECK(cfg["lm"]["width"] == 32);
  CHECK(lm_config(cfg).mode == DecodingMode::kParallel);
  CHECK(codec_config(cfg).content_levels == std::vector<int>{4, 4});
  CHECK(lm_config(cfg).content_vocab == 16);
  CHECK_THROWS_AS(apply_override(cfg, "lm.widht=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "lm.width=\"wide\""), ConfigError);
  Json bad = default_config();
  apply_override(bad, "eval.sampling=nucleus");
  CHECK_THROWS_AS(eval_config(bad), ConfigError);

  const fs::path dir = scratch("cfg");
  {
    std::ofstream(dir / "ok.json") << R"({"seed": 5, "train": {"lm": {"epochs": 2}}})";
    std::ofstream(dir / "typo.json") << R"({"trian": {}})";
    std::ofstream(dir / "broken.json") << "{";
  }
  const Json loaded = load_config(dir / "ok.json");
  CHECK(loaded["seed"] == 5);
  CHECK(train_config(loaded, "lm").epochs == 2);
  CHECK(train_config(loaded, "lm").batch_size == 32);
  CHECK_THROWS_AS(load_config(dir / "typo.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("hashing helpers") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("utterance records round-trip") {
  Utterance u{"utt000001", "hi there", 3, "calm gentle whisper", {1, 2, 3, 4}, {5, 6, 7, 8}, {1, 1, 2, 2}};
  const Json j = utterance_to_json(u, "abc");
  CHECK(j["codec_fingerprint"] == "abc");
  const Utterance back = utterance_from_json(j);
  CHECK(back.utt_id == u.utt_id);
  CHECK(back.speech == u.speech);
  CHECK(back.content == u.content);
  CHECK(back.prompt_tokens == u.prompt_tokens);
  Utterance raw = u;
  raw.content.clear();
  raw.prompt_tokens.clear();
  const Json r = utterance_to_json(raw);
  CHECK_FALSE(r.contains("content"));
  CHECK(utterance_from_json(r).content.empty());
  CHECK_THROWS_AS(utterance_from_json(Json{{"utt_id", "x"}}), DataError);

  const fs::path dir = scratch("jsonl");
  std::ofstream(dir / "bad.jsonl") << "{\"a\": 1}\nnot json\n";
  CHECK_THROWS_AS(read_jsonl(dir / "bad.jsonl"), DataError);
  CHECK_THROWS_AS(read_jsonl(dir / "absent.jsonl"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("checkpoints round-trip and reject mismatches") {
  const fs::path dir = scratch("ckpt");
  ParamStore a;
  a.create("w", Mat(2, 3, std::vector<Real>{1, 2, 3, 4, 5, 6}));
  a.create("b", Mat(1, 3, Real(-0.5)));
  save_checkpoint(dir / "a.ckpt", "codec", Json{{"note", "x"}}, a);
  const Checkpoint ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.kind == "codec");
  CHECK(ck.meta["note"] == "x");
  REQUIRE(ck.params.size() == 2);

  ParamStore b;
  b.create("w", Mat(2, 3));
  b.create("b", Mat(1, 3));
  load_params(ck, b);
  CHECK(b.get("w").value().data == a.get("w").value().data);
  CHECK(b.get("b").value().data == a.get("b").value().data);
  CHECK(fingerprint(Json{{"k", 1}}, a) == fingerprint(Json{{"k", 1}}, b));
  CHECK(fingerprint(Json{{"k", 1}}, a) != fingerprint(Json{{"k", 2}}, b));
  b.get("b").mutable_value().data[0] = 9;
  CHECK(fingerprint(Json{{"k", 1}}, a) != fingerprint(Json{{"k", 1}}, b));

  ParamStore wrong_shape;
  wrong_shape.create("w", Mat(3, 2));
  wrong_shape.create("b", Mat(1, 3));
  CHECK_THROWS_AS(load_params(ck, wrong_shape), DataError);
  ParamStore fewer;
  fewer.create("w", Mat(2, 3));
  CHECK_THROWS_AS(load_params(ck, fewer), DataError);

  std::ofstream(dir / "junk.ckpt") << "definitely not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), DataError);
  {
    const auto size = fs::file_size(dir / "a.ckpt");
    fs::copy_file(dir / "a.ckpt", dir / "cut.ckpt");
    fs::resize_file(dir / "cut.ckpt", size - 4);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), DataError);
  fs::remove_all(dir);
}
