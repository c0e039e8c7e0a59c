#include <cmath>

#include "doctest.h"
#include "hdppt/lm.hpp"
#include "hdppt/optim.hpp"

using namespace hdppt;

namespace {

LmConfig tiny(DecodingMode mode = DecodingMode::kHierarchical) {
  LmConfig c;
  c.width = 16;
  c.heads = 2;
  c.layers = 2;
  c.ffn_mult = 2;
  c.max_context = 128;
  c.decoder_layers = 2;
  c.mode = mode;
  return c;
}

struct Model {
  ParamStore store;
  Rng rng;
  HierarchicalLm lm;
  explicit Model(const LmConfig& c, std::uint64_t seed = 1) : rng(seed), lm(store, c, rng) {}
};

LmExample example(Rng& rng, int n) {
  LmExample ex{"calm gentle whisper", "hi there", {}, {}, {}};
  for (int i = 0; i < n; ++i) {
    ex.content.push_back(static_cast<int>(rng.below(1296)));
    ex.prompt.push_back(static_cast<int>(rng.below(64)));
    ex.speech.push_back(static_cast<int>(rng.below(512)));
  }
  return ex;
}

bool same_rows(const Mat& a, const Mat& b, int begin, int end) {
  for (int r = begin; r < end; ++r)
    for (int c = 0; c < a.cols; ++c)
      if (a(r, c) != b(r, c)) return false;
  return true;
}

int argmax_row(const Mat& m, int r) {
  const auto row = m.row(r);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

TEST_CASE("modes and chains") {
  CHECK(decoder_chain(DecodingMode::kHierarchical) ==
        std::vector<Stream>{Stream::kContent, Stream::kPrompt, Stream::kSpeech});
  CHECK(decoder_chain(DecodingMode::kNoContent) == std::vector<Stream>{Stream::kPrompt, Stream::kSpeech});
  CHECK(decoder_chain(DecodingMode::kNoPrompt) == std::vector<Stream>{Stream::kContent, Stream::kSpeech});
  CHECK(decoder_chain(DecodingMode::kSingleStep) == std::vector<Stream>{Stream::kSpeech});
  for (auto m : {DecodingMode::kHierarchical, DecodingMode::kNoContent, DecodingMode::kNoPrompt,
                 DecodingMode::kParallel, DecodingMode::kSingleStep, DecodingMode::kNoDual})
    CHECK(decoding_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(decoding_mode_from_string("sideways"), ConfigError);
  const LmConfig d;
  CHECK(d.decoder_layers == 2);
  CHECK(d.eos() == 512);
}

TEST_CASE("backbone causality and determinism") {
  Model m(tiny());
  NoGradGuard ng;
  Rng rng(2);
  const LmExample full = example(rng, 12);
  const Mat h_full = m.lm.hidden_states(std::span<const LmExample>(&full, 1)).value();
  CHECK(h_full.rows == 13);
  for (int j = 0; j <= 12; ++j) {
    LmExample cut = full;
    cut.speech.resize(j);
    cut.content.resize(j);
    cut.prompt.resize(j);
    const Mat h = m.lm.hidden_states(std::span<const LmExample>(&cut, 1)).value();
    CHECK(same_rows(h, h_full, 0, j + 1));
    // Perturbing the future never touches the present.
    LmExample alt = full;
    for (int k = j; k < 12; ++k) alt.speech[k] = (alt.speech[k] + 7) % 512;
    const Mat ha = m.lm.hidden_states(std::span<const LmExample>(&alt, 1)).value();
    CHECK(same_rows(ha, h_full, 0, j + 1));
  }
  const Mat a = m.lm.hidden_step(full.instruction, full.content_text, full.speech);
  CHECK(same_rows(a, m.lm.hidden_step(full.instruction, full.content_text, full.speech), 0, 1));
  const Mat b = m.lm.hidden_step("angry shouting voice", full.content_text, full.speech);
  CHECK_FALSE(same_rows(a, b, 0, 1));
  CHECK_THROWS_AS(m.lm.hidden_step("", std::string(200, 'a'), {}), InvalidInput);
}

TEST_CASE("decoder factorization order") {
  Model m(tiny());
  NoGradGuard ng;
  Rng rng(3);
  Mat hm(6, 16);
  for (auto& v : hm.data) v = static_cast<Real>(rng.normal());
  const Var h = ops::constant(hm);
  std::vector<int> c(6), p(6);
  for (auto& v : c) v = static_cast<int>(rng.below(1296));
  for (auto& v : p) v = static_cast<int>(rng.below(64));
  const DecoderLogits base = m.lm.decode(h, c, p, nullptr);
  CHECK(base.content.cols() == 1296);
  CHECK(base.prompt.cols() == 64);
  CHECK(base.speech.cols() == 513);
  auto p2 = p;
  for (auto& v : p2) v = (v + 1) % 64;
  const DecoderLogits dp = m.lm.decode(h, c, p2, nullptr);
  CHECK(same_rows(dp.content.value(), base.content.value(), 0, 6));
  CHECK(same_rows(dp.prompt.value(), base.prompt.value(), 0, 6));
  CHECK_FALSE(same_rows(dp.speech.value(), base.speech.value(), 0, 6));
  auto c2 = c;
  for (auto& v : c2) v = (v + 1) % 1296;
  const DecoderLogits dc = m.lm.decode(h, c2, p, nullptr);
  CHECK(same_rows(dc.content.value(), base.content.value(), 0, 6));
  CHECK_FALSE(same_rows(dc.prompt.value(), base.prompt.value(), 0, 6));
  CHECK_FALSE(same_rows(dc.speech.value(), base.speech.value(), 0, 6));
  // Negative inputs feed the model's own argmax.
  std::vector<int> own(6, -1), argmax_c(6);
  for (int r = 0; r < 6; ++r) argmax_c[r] = argmax_row(base.content.value(), r);
  const DecoderLogits auto_c = m.lm.decode(h, own, p, nullptr);
  const DecoderLogits expl_c = m.lm.decode(h, argmax_c, p, nullptr);
  CHECK(same_rows(auto_c.prompt.value(), expl_c.prompt.value(), 0, 6));
}

TEST_CASE("parallel and single-step wiring") {
  NoGradGuard ng;
  Rng rng(4);
  Mat hm(3, 16);
  for (auto& v : hm.data) v = static_cast<Real>(rng.normal());
  const Var h = ops::constant(hm);
  const std::vector<int> c = {1, 2, 3}, p = {4, 5, 6}, c2 = {7, 8, 9}, p2 = {10, 11, 12};
  Model par(tiny(DecodingMode::kParallel));
  const DecoderLogits a = par.lm.decode(h, c, p, nullptr), b = par.lm.decode(h, c2, p2, nullptr);
  CHECK(same_rows(a.speech.value(), b.speech.value(), 0, 3));
  CHECK(same_rows(a.prompt.value(), b.prompt.value(), 0, 3));
  Model single(tiny(DecodingMode::kSingleStep));
  const DecoderLogits s = single.lm.decode(h, c, p, nullptr);
  CHECK_FALSE(s.content.defined());
  CHECK_FALSE(s.prompt.defined());
  CHECK(s.speech.cols() == 513);
  CHECK_FALSE(single.store.contains("lm.decoder.content_head.weight"));
  CHECK_FALSE(single.store.contains("lm.decoder.content_emb"));
}

TEST_CASE("aux head is affine in h") {
  Model m(tiny());
  NoGradGuard ng;
  Rng rng(5);
  Mat hm(1, 16);
  for (auto& v : hm.data) v = static_cast<Real>(rng.normal());
  const Mat a0 = m.lm.aux_logits(ops::constant(Mat(1, 16, 0))).value();
  const Mat a1 = m.lm.aux_logits(ops::constant(hm)).value();
  Mat h2 = hm;
  for (auto& v : h2.data) v *= 2;
  const Mat a2 = m.lm.aux_logits(ops::constant(h2)).value();
  CHECK(a1.cols == 513);
  for (int k = 0; k < a1.cols; ++k)
    CHECK(static_cast<double>(a2(0, k) - a0(0, k)) ==
          doctest::Approx(2.0 * static_cast<double>(a1(0, k) - a0(0, k))).epsilon(1e-4).scale(1e-3));
}

TEST_CASE("stochastic masking") {
  Rng rng(6);
  const MaskPlan none = sample_masks(1000, 0, 0, rng);
  for (auto v : none.hidden) CHECK(v == 0);
  for (auto v : none.prompt) CHECK(v == 0);
  const MaskPlan all = sample_masks(1000, 1, 1, rng);
  for (auto v : all.hidden) CHECK(v == 1);
  for (auto v : all.prompt) CHECK(v == 1);
  const MaskPlan some = sample_masks(100000, 0.15, 0.3, rng);
  const double rh = std::count(some.hidden.begin(), some.hidden.end(), 1) / 1e5;
  const double rp = std::count(some.prompt.begin(), some.prompt.end(), 1) / 1e5;
  CHECK(std::abs(rh - 0.15) <= 0.02 * 0.15);
  CHECK(std::abs(rp - 0.3) <= 0.02 * 0.3);
  CHECK_THROWS_AS(sample_masks(3, -0.1, 0, rng), ConfigError);
  CHECK_THROWS_AS(sample_masks(3, 0, 1.5, rng), ConfigError);

  // Full masking replaces the inputs: outputs no longer depend on them.
  Model m(tiny());
  NoGradGuard ng;
  Mat h1(4, 16), h2(4, 16);
  for (auto& v : h1.data) v = static_cast<Real>(rng.normal());
  for (auto& v : h2.data) v = static_cast<Real>(rng.normal());
  const std::vector<int> c = {1, 2, 3, 4}, p = {5, 6, 7, 8}, p2 = {9, 10, 11, 12};
  const MaskPlan full = sample_masks(4, 1, 1, rng);
  const DecoderLogits a = m.lm.decode(ops::constant(h1), c, p, &full);
  const DecoderLogits b = m.lm.decode(ops::constant(h2), c, p2, &full);
  CHECK(same_rows(a.content.value(), b.content.value(), 0, 4));
  CHECK(same_rows(a.speech.value(), b.speech.value(), 0, 4));
  const MaskPlan zero = sample_masks(4, 0, 0, rng);
  CHECK(same_rows(m.lm.decode(ops::constant(h1), c, p, &zero).speech.value(),
                  m.lm.decode(ops::constant(h1), c, p, nullptr).speech.value(), 0, 4));
}

TEST_CASE("loss components by mode") {
  Rng rng(7);
  const LmExample ex = example(rng, 5);
  const std::span<const LmExample> batch(&ex, 1);
  auto names = [](const LossRecord& r) {
    std::vector<std::string> n;
    for (const auto& [k, v] : r.components) n.push_back(k);
    return n;
  };
  {
    Model m(tiny());
    const LossRecord r = m.lm.loss(batch, nullptr);
    CHECK(names(r) == std::vector<std::string>{"content", "prompt", "speech", "aux"});
    double sum = 0;
    for (std::size_t i = 0; i < r.components.size(); ++i) sum += r.weights[i].second * r.components[i].second.item();
    CHECK(std::abs(sum - r.total.item()) <= 1e-6 * std::max(1.0, sum));
    CHECK(r.weights[0].second == 0.5);
    CHECK(r.weights[2].second == 1.0);
  }
  {
    LmConfig c = tiny(DecodingMode::kSingleStep);
    c.aux_weight = 0;
    Model m(c);
    const LossRecord r = m.lm.loss(batch, nullptr);
    CHECK(names(r) == std::vector<std::string>{"speech"});
    CHECK(r.total.item() == r.components[0].second.item());
  }
  {
    Model m(tiny(DecodingMode::kNoPrompt));
    CHECK(names(m.lm.loss(batch, nullptr)) == std::vector<std::string>{"content", "speech", "aux"});
  }
  {
    Model m(tiny());
    LmExample bad = ex;
    bad.prompt.pop_back();
    CHECK_THROWS_AS(m.lm.loss(std::span<const LmExample>(&bad, 1), nullptr), ShapeError);
  }
}

TEST_CASE("generation matches the teacher-forced path") {
  for (auto mode : {DecodingMode::kHierarchical, DecodingMode::kNoContent, DecodingMode::kParallel,
                    DecodingMode::kSingleStep}) {
    Model m(tiny(mode), 9);
    NoGradGuard ng;
    const GenerationOutput g = m.lm.generate("calm gentle whisper", "hello", 10, Sampling{}, true);
    REQUIRE(g.speech.size() == 10);
    CHECK(g.steps.size() == 10);
    CHECK(g.stop == StopReason::kMaxLen);
    const GenerationOutput again = m.lm.generate("calm gentle whisper", "hello", 10, Sampling{}, true);
    CHECK(again.speech == g.speech);

    LmExample ex{"calm gentle whisper", "hello", {}, {}, g.speech};
    const Var h = m.lm.hidden_states(std::span<const LmExample>(&ex, 1));
    std::vector<int> c, p;
    for (const auto& st : g.steps) {
      c.push_back(st.content);
      p.push_back(st.prompt);
    }
    c.push_back(-1);
    p.push_back(-1);
    const DecoderLogits d = m.lm.decode(h, c, p, nullptr);
    for (int j = 0; j < 10; ++j) {
      // EOS is masked during generation, so compare against the best non-EOS token.
      Mat row(1, 512);
      std::copy_n(d.speech.value().row(j).begin(), 512, row.data.begin());
      CHECK(argmax_row(row, 0) == g.steps[j].speech);
      if (d.content.defined()) CHECK(argmax_row(d.content.value(), j) == g.steps[j].content);
      if (d.prompt.defined()) CHECK(argmax_row(d.prompt.value(), j) == g.steps[j].prompt);
      if (!d.content.defined()) CHECK(g.steps[j].content == -1);
    }
  }
}

TEST_CASE("generation contracts") {
  Model m(tiny(), 10);
  // Perturbing the aux head never changes generation.
  const GenerationOutput a = m.lm.generate("calm gentle whisper", "abc", 8, Sampling{});
  for (auto& v : m.store.get("lm.aux_head.weight").mutable_value().data) v = -v;
  const GenerationOutput b = m.lm.generate("calm gentle whisper", "abc", 8, Sampling{});
  CHECK(a.speech == b.speech);
  for (const auto& st : a.steps) {
    CHECK(st.content >= 0);
    CHECK(st.prompt >= 0);
  }
  CHECK(a.steps.size() == a.speech.size() + (a.stop == StopReason::kEndOfSpeech ? 1 : 0));
  CHECK_THROWS_AS(m.lm.generate("x", "y", 0, Sampling{}), ConfigError);
  CHECK_THROWS_AS(m.lm.generate("x", "y", 500, Sampling{}), InvalidInput);
  Sampling s{SamplingKind::kTopK, 5, 1.0, 42};
  const auto t1 = m.lm.generate("x", "y", 6, s), t2 = m.lm.generate("x", "y", 6, s);
  CHECK(t1.speech == t2.speech);

  // Forcing EOS makes generation stop at once.
  for (auto& v : m.store.get("lm.decoder.speech_head.bias").mutable_value().data) v = 0;
  m.store.get("lm.decoder.speech_head.bias").mutable_value().data[512] = 1e6;
  const GenerationOutput e = m.lm.generate("x", "y", 6, Sampling{});
  CHECK(e.stop == StopReason::kEndOfSpeech);
  CHECK(e.speech.empty());
  CHECK(e.steps.size() == 1);
}

TEST_CASE("sampling helpers") {
  Rng rng(11);
  const std::vector<Real> logits = {0, 5, 1, 2};
  CHECK(sample_token(logits, Sampling{}, rng) == 1);
  Sampling top1{SamplingKind::kTopK, 1, 1.0, 0};
  for (int i = 0; i < 20; ++i) CHECK(sample_token(logits, top1, rng) == 1);
  Sampling hot{SamplingKind::kTemperature, 10, 0.0, 0};
  CHECK_THROWS_AS(sample_token(logits, hot, rng), ConfigError);
}

TEST_CASE("a few optimizer steps reduce the loss on a fixed batch") {
  Model m(tiny());
  Rng rng(12);
  std::vector<LmExample> batch = {example(rng, 6), example(rng, 4)};
  AdamWConfig oc;
  oc.lr = 1e-2;
  AdamW opt(m.store, oc);
  const double first = m.lm.loss(batch, nullptr).total.item();
  for (int i = 0; i < 30; ++i) {
    m.store.zero_grad();
    backward(m.lm.loss(batch, nullptr).total);
    opt.step();
  }
  CHECK(m.lm.loss(batch, nullptr).total.item() < 0.7 * first);
}

TEST_CASE("latency benchmark") {
  Model m(tiny(DecodingMode::kSingleStep));
  const std::vector<std::pair<std::string, std::string>> texts = {{"calm", "abc"}};
  const LatencyStats s = benchmark_latency(m.lm, texts, 4, 2);
  CHECK(s.median_ms > 0);
  CHECK_THROWS_AS(benchmark_latency(m.lm, {}, 4, 2), InvalidInput);
}
