#include "hdppt/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#ifndef HDPPT_RESOURCE_DIR
#define HDPPT_RESOURCE_DIR "resources"
#endif

HDPPT_NAMESPACE_BEGIN

void WorldConfig::validate() const {
  if (n_styles < 1) throw ConfigError("world.n_styles must be >= 1");
  if (base_units < text::kNumChars)
    throw ConfigError("world.base_units must be at least the character count");
  if (units_per_char < 1) throw ConfigError("world.units_per_char must be >= 1");
  if (!(noise_rate >= 0 && noise_rate <= 1)) throw ConfigError("world.noise_rate must be in [0, 1]");
  if (min_chars < 1 || max_chars < min_chars) throw ConfigError("world.min_chars/max_chars invalid");
}

UnitTable make_unit_table(const WorldConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "unit_table"));
  UnitTable table;
  table.units_per_char = cfg.units_per_char;
  table.rows.assign(text::kNumChars, std::vector<int>(cfg.units_per_char));
  std::vector<int> perm(cfg.base_units);
  for (int slot = 0; slot < cfg.units_per_char; ++slot) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = cfg.base_units - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(perm[i], perm[j]);
    }
    for (int c = 0; c < text::kNumChars; ++c) table.rows[c][slot] = perm[c];
  }
  return table;
}

std::vector<int> char_to_units(char c, const UnitTable& table) {
  const auto u = table.units(c);
  return {u.begin(), u.end()};
}

std::filesystem::path default_prompt_file() {
  return std::filesystem::path(HDPPT_RESOURCE_DIR) / "prompt_templates.txt";
}

std::vector<std::string> load_prompt_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prompt template file " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = text::normalize(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<int> render_speech(std::string_view content_text, int style_id,
                               const WorldConfig& cfg, const UnitTable& table) {
  std::vector<int> speech;
  speech.reserve(content_text.size() * cfg.units_per_char);
  for (char c : content_text) {
    for (int u : table.units(c)) speech.push_back(style_id * cfg.base_units + u);
  }
  return speech;
}

Utterance sample_utterance(Rng& rng, const WorldConfig& cfg, const UnitTable& table,
                           std::span<const std::string> templates) {
  if (static_cast<int>(templates.size()) < cfg.n_styles)
    throw ConfigError("fewer prompt templates than styles");
  Utterance u;
  const int len = cfg.min_chars + static_cast<int>(rng.below(cfg.max_chars - cfg.min_chars + 1));
  u.text.resize(len);
  for (auto& c : u.text) c = text::kChars[rng.below(text::kNumChars)];
  u.style_id = static_cast<int>(rng.below(cfg.n_styles));
  u.prompt = templates[u.style_id];
  u.speech = render_speech(u.text, u.style_id, cfg, table);
  const auto vocab = static_cast<std::uint64_t>(cfg.speech_vocab());
  for (auto& t : u.speech) {
    if (rng.bernoulli(cfg.noise_rate)) t = static_cast<int>(rng.below(vocab));
  }
  return u;
}

int oracle_style_of(std::span<const int> speech, const WorldConfig& cfg) {
  if (speech.empty()) throw InvalidInput("oracle_style_of: empty speech");
  std::vector<int> votes(cfg.n_styles, 0);
  for (int t : speech) {
    const int s = t / cfg.base_units;
    if (s >= 0 && s < cfg.n_styles) ++votes[s];
  }
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

namespace {

char invert_group(std::span<const int> group, const WorldConfig& cfg, const UnitTable& table) {
  int best = 0, best_char = -1;
  bool tie = false;
  for (int c = 0; c < text::kNumChars; ++c) {
    int matches = 0;
    for (std::size_t k = 0; k < group.size(); ++k) {
      if (group[k] % cfg.base_units == table.rows[c][k]) ++matches;
    }
    if (matches > best) {
      best = matches;
      best_char = c;
      tie = false;
    } else if (matches == best && matches > 0) {
      tie = true;
    }
  }
  if (best_char < 0 || tie) return '?';
  return text::kChars[best_char];
}

}  // namespace

OracleText oracle_text_lenient(std::span<const int> speech, const WorldConfig& cfg,
                               const UnitTable& table) {
  OracleText out;
  const std::size_t g = table.units_per_char;
  std::size_t i = 0;
  for (; i + g <= speech.size(); i += g) {
    const char c = invert_group(speech.subspan(i, g), cfg, table);
    if (c == '?') ++out.failures;
    out.text.push_back(c);
  }
  if (i < speech.size()) {
    out.text.push_back('?');
    ++out.failures;
  }
  return out;
}

OracleText oracle_text_of(std::span<const int> speech, const WorldConfig& cfg,
                          const UnitTable& table) {
  if (speech.size() % table.units_per_char != 0)
    throw InvalidInput("oracle_text_of: length is not a multiple of units_per_char");
  return oracle_text_lenient(speech, cfg, table);
}

int edit_distance(std::string_view a, std::string_view b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Corpus make_corpus(int n, const WorldConfig& cfg, const SplitRatios& ratios,
                   std::span<const std::string> templates) {
  if (n < 1) throw ConfigError("corpus size must be >= 1");
  if (ratios.train < 0 || ratios.dev < 0 || ratios.test < 0 ||
      ratios.train + ratios.dev + ratios.test <= 0)
    throw ConfigError("split ratios must be non-negative with a positive sum");
  const double total = ratios.train + ratios.dev + ratios.test;
  const int n_dev = static_cast<int>(std::lround(n * ratios.dev / total));
  const int n_test = static_cast<int>(std::lround(n * ratios.test / total));
  const int n_train = n - n_dev - n_test;

  Corpus corpus;
  corpus.table = make_unit_table(cfg);
  std::vector<Utterance> all(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    all[i] = sample_utterance(rng, cfg, corpus.table, templates);
    char id[32];
    std::snprintf(id, sizeof id, "utt%06d", i);
    all[i].utt_id = id;
  }
  auto take = [&](int begin, int count) {
    return std::vector<Utterance>(std::make_move_iterator(all.begin() + begin),
                                  std::make_move_iterator(all.begin() + begin + count));
  };
  corpus.train = take(0, n_train);
  corpus.dev = take(n_train, n_dev);
  corpus.test = take(n_train + n_dev, n_test);
  return corpus;
}

HDPPT_NAMESPACE_END
