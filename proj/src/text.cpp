#include "hdppt/text.hpp"

#include <cctype>

HDPPT_NAMESPACE_BEGIN
namespace text {

bool is_char(char c) { return (c >= 'a' && c <= 'z') || c == ' '; }

int char_id(char c) {
  if (c == ' ') return kNumChars - 1;
  if (c >= 'a' && c <= 'z') return c - 'a';
  throw InvalidInput(std::string("character outside the text vocabulary: '") + c + "'");
}

std::vector<int> encode(std::string_view s) {
  std::vector<int> ids;
  ids.reserve(s.size());
  for (char c : s) ids.push_back(char_id(c));
  return ids;
}

std::string decode(std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id >= 0 && id < kNumChars) out.push_back(kChars[id]);
  }
  return out;
}

std::string normalize(std::string_view s) {
  std::string out;
  for (char raw : s) {
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (!is_char(c)) c = ' ';
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(c);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace text
HDPPT_NAMESPACE_END
