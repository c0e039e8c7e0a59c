#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hdppt/common.hpp"

HDPPT_NAMESPACE_BEGIN

// Character vocabulary shared by the synthetic world, the ASR stand-in and the
// LM text stream: 'a'..'z' and space, followed by a few control symbols.
namespace text {

inline constexpr std::string_view kChars = "abcdefghijklmnopqrstuvwxyz ";
inline constexpr int kNumChars = static_cast<int>(kChars.size());
inline constexpr int kBos = kNumChars;
inline constexpr int kEos = kNumChars + 1;
inline constexpr int kSep = kNumChars + 2;
inline constexpr int kVocab = kNumChars + 3;

bool is_char(char c);
/// Throws InvalidInput for characters outside kChars.
int char_id(char c);
std::vector<int> encode(std::string_view s);
std::string decode(std::span<const int> ids);
/// Lower-cases and maps anything outside the vocabulary to a space, then
/// collapses runs of spaces and trims.
std::string normalize(std::string_view s);

}  // namespace text

HDPPT_NAMESPACE_END
