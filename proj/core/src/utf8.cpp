#include "bytevq/utf8.hpp"

namespace bytevq {

namespace {

inline bool continuation(uint8_t b) { return (b & 0xC0) == 0x80; }

void append_utf8(std::vector<uint8_t>& out, uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<uint8_t>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<uint8_t>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<uint8_t>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<uint8_t>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<uint8_t>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<uint8_t>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<uint8_t>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<uint8_t>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<uint8_t>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<uint8_t>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

std::vector<uint8_t> utf8_encode(const std::vector<uint32_t>& text) {
  std::vector<uint8_t> out;
  out.reserve(text.size());
  for (uint32_t cp : text) {
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw InputError("utf8_encode: invalid scalar value " + std::to_string(cp));
    }
    append_utf8(out, cp);
  }
  return out;
}

int utf8_well_formed_length(const uint8_t* bytes, size_t available, uint32_t* cp) {
  if (available == 0) return 0;
  const uint8_t b0 = bytes[0];
  if (b0 < 0x80) {
    if (cp) *cp = b0;
    return 1;
  }
  if (b0 >= 0xC2 && b0 <= 0xDF) {
    if (available < 2 || !continuation(bytes[1])) return 0;
    if (cp) *cp = (static_cast<uint32_t>(b0 & 0x1F) << 6) | (bytes[1] & 0x3F);
    return 2;
  }
  if (b0 >= 0xE0 && b0 <= 0xEF) {
    if (available < 3 || !continuation(bytes[1]) || !continuation(bytes[2])) return 0;
    // Overlong (E0 80..9F) and surrogate (ED A0..BF) second-byte ranges.
    if (b0 == 0xE0 && bytes[1] < 0xA0) return 0;
    if (b0 == 0xED && bytes[1] > 0x9F) return 0;
    if (cp) {
      *cp = (static_cast<uint32_t>(b0 & 0x0F) << 12) |
            (static_cast<uint32_t>(bytes[1] & 0x3F) << 6) | (bytes[2] & 0x3F);
    }
    return 3;
  }
  if (b0 >= 0xF0 && b0 <= 0xF4) {
    if (available < 4 || !continuation(bytes[1]) || !continuation(bytes[2]) ||
        !continuation(bytes[3])) {
      return 0;
    }
    if (b0 == 0xF0 && bytes[1] < 0x90) return 0;  // overlong
    if (b0 == 0xF4 && bytes[1] > 0x8F) return 0;  // above U+10FFFF
    if (cp) {
      *cp = (static_cast<uint32_t>(b0 & 0x07) << 18) |
            (static_cast<uint32_t>(bytes[1] & 0x3F) << 12) |
            (static_cast<uint32_t>(bytes[2] & 0x3F) << 6) | (bytes[3] & 0x3F);
    }
    return 4;
  }
  return 0;  // continuation byte, C0/C1, or F5..FF lead
}

RepairResult utf8_repair_decode(const std::vector<uint8_t>& bytes) {
  const int n = static_cast<int>(bytes.size());
  // dp value at i: best (chars, -skips) decodable from the first i bytes.
  std::vector<int> chars(n + 1, 0), skips(n + 1, 0);
  // back[i]: 0 = skipped bytes[i-1], k in 1..4 = consumed a k-byte character.
  std::vector<int8_t> back(n + 1, 0);

  for (int i = 1; i <= n; ++i) {
    // Candidates in tie-break priority order: character matches shortest
    // first, then the one-byte skip. First candidate attaining the best
    // (chars, -skips) wins, so ties prefer the shortest character match.
    int best_chars = -1;
    int best_skips = 0;
    int8_t best_back = 0;
    auto offer = [&](int c, int s, int8_t b) {
      if (c > best_chars || (c == best_chars && s < best_skips)) {
        best_chars = c;
        best_skips = s;
        best_back = b;
      }
    };
    for (int len = 1; len <= 4 && len <= i; ++len) {
      uint32_t cp;
      if (utf8_well_formed_length(bytes.data() + (i - len), bytes.size() - (i - len), &cp) != len) {
        continue;
      }
      offer(chars[i - len] + 1, skips[i - len], static_cast<int8_t>(len));
    }
    offer(chars[i - 1], skips[i - 1] + 1, 0);
    chars[i] = best_chars;
    skips[i] = best_skips;
    back[i] = best_back;
  }

  RepairResult result;
  result.chars_recovered = chars[n];
  result.bytes_skipped = skips[n];
  result.text.resize(chars[n]);
  int i = n, c = chars[n];
  while (i > 0) {
    if (back[i] == 0) {
      i -= 1;
    } else {
      const int len = back[i];
      uint32_t cp = 0;
      utf8_well_formed_length(bytes.data() + (i - len), bytes.size() - (i - len), &cp);
      result.text[--c] = cp;
      i -= len;
    }
  }
  return result;
}

std::string codepoints_to_string(const std::vector<uint32_t>& text) {
  std::vector<uint8_t> bytes = utf8_encode(text);
  return std::string(bytes.begin(), bytes.end());
}

std::vector<uint32_t> string_to_codepoints(const std::string& s) {
  std::vector<uint32_t> out;
  const uint8_t* p = reinterpret_cast<const uint8_t*>(s.data());
  size_t i = 0;
  while (i < s.size()) {
    uint32_t cp;
    const int len = utf8_well_formed_length(p + i, s.size() - i, &cp);
    if (len == 0) {
      throw DataError("invalid UTF-8 at byte offset " + std::to_string(i));
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

}  // namespace bytevq
