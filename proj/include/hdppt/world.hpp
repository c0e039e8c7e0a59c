#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hdppt/rng.hpp"
#include "hdppt/text.hpp"

HDPPT_NAMESPACE_BEGIN

/// Toy generative world. A speech token is style * base_units + unit; every
/// character of the content text expands to units_per_char units through a
/// fixed table, so style and content occupy separate digits of the token.
struct WorldConfig {
  int n_styles = 8;
  int base_units = 64;
  int units_per_char = 2;
  double noise_rate = 0.02;
  int min_chars = 4;
  int max_chars = 24;
  std::uint64_t seed = 0;

  int speech_vocab() const { return n_styles * base_units; }
  void validate() const;
};

/// One row of units per character id.
struct UnitTable {
  int units_per_char = 0;
  std::vector<std::vector<int>> rows;

  std::span<const int> units(char c) const { return rows.at(text::char_id(c)); }
  friend bool operator==(const UnitTable&, const UnitTable&) = default;
};

/// Each unit slot is filled from an independent permutation of the unit
/// alphabet, so no two characters share a unit in the same slot.
UnitTable make_unit_table(const WorldConfig& cfg);

std::vector<int> char_to_units(char c, const UnitTable& table);

struct Utterance {
  std::string utt_id;
  std::string text;
  int style_id = 0;
  std::string prompt;
  std::vector<int> speech;
  // Filled by codec labelling.
  std::vector<int> content;
  std::vector<int> prompt_tokens;
};

std::filesystem::path default_prompt_file();
/// One template per line; blank lines are skipped.
std::vector<std::string> load_prompt_templates(const std::filesystem::path& path);

/// Clean speech for a given text and style (no corruption).
std::vector<int> render_speech(std::string_view content_text, int style_id,
                               const WorldConfig& cfg, const UnitTable& table);

Utterance sample_utterance(Rng& rng, const WorldConfig& cfg, const UnitTable& table,
                           std::span<const std::string> templates);

/// Majority vote of token / base_units; ties go to the lowest style.
int oracle_style_of(std::span<const int> speech, const WorldConfig& cfg);

/// Per character, the table row with the most matching units wins. Rows with
/// equal best match counts (or no match at all) are a failure, marked '?'.
struct OracleText {
  std::string text;
  int failures = 0;
  bool ok() const { return failures == 0; }
};
/// Throws InvalidInput when the length is not a multiple of units_per_char.
OracleText oracle_text_of(std::span<const int> speech, const WorldConfig& cfg,
                          const UnitTable& table);
/// Like oracle_text_of, but a trailing partial group decodes to '?'.
OracleText oracle_text_lenient(std::span<const int> speech, const WorldConfig& cfg,
                               const UnitTable& table);

int edit_distance(std::string_view a, std::string_view b);

struct SplitRatios {
  double train = 0.90;
  double dev = 0.05;
  double test = 0.05;
};

struct Corpus {
  std::vector<Utterance> train, dev, test;
  UnitTable table;
};

/// Pure function of (n, cfg, ratios, templates). Utterance i draws from its
/// own stream derive_seed(seed, i).
Corpus make_corpus(int n, const WorldConfig& cfg, const SplitRatios& ratios,
                   std::span<const std::string> templates);

HDPPT_NAMESPACE_END
