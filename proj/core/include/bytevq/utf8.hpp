#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bytevq/error.hpp"

namespace bytevq {

struct RepairResult {
  std::vector<uint32_t> text;  // recovered Unicode scalar values
  int chars_recovered = 0;
  int bytes_skipped = 0;
};

// Standard UTF-8 encoding, 1-4 bytes per scalar value.
// Throws InputError on surrogates or values above U+10FFFF.
std::vector<uint8_t> utf8_encode(const std::vector<uint32_t>& text);

// If bytes[pos..] starts with a well-formed UTF-8 character (overlong forms
// and surrogates rejected), returns its byte length and writes the scalar
// value to *cp; otherwise returns 0.
int utf8_well_formed_length(const uint8_t* bytes, size_t available, uint32_t* cp);

// Recovers the character-maximal decoding of an arbitrary byte sequence.
// Dynamic program over prefixes: each position either skips one byte or
// consumes one well-formed character. Maximizes recovered characters, then
// minimizes skipped bytes; remaining ties prefer the shortest character
// match over a skip. Total function, never throws.
RepairResult utf8_repair_decode(const std::vector<uint8_t>& bytes);

std::string codepoints_to_string(const std::vector<uint32_t>& text);

// Strict decode of a whole string; throws DataError at the first invalid
// byte (used for reading corpora that are required to be valid UTF-8).
std::vector<uint32_t> string_to_codepoints(const std::string& s);

}  // namespace bytevq
