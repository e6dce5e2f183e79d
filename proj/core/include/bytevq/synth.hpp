#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bytevq/numerics.hpp"

namespace bytevq {

// Deterministic synthetic dictation-style task: a small latin alphabet plus
// a CJK-like block, per-character phone sequences with controlled homophone
// sharing, and features built from per-phone Gaussian prototypes. Stands in
// for real bilingual audio at desk scale.
struct SynthTaskSpec {
  int latin_chars = 26;  // 'a' onward, at most 26; words are 2-5 letters
  int cjk_chars = 50;    // U+4E00 onward
  int phone_inventory = 40;
  int min_phones = 1;      // phones per character
  int max_phones = 3;
  double homophone_rate = 0.3;  // chance a character copies an earlier one's phones
  int min_frames = 2;      // frames per phone (fixed per phone)
  int max_frames = 4;
  int feature_dim = 8;
  double noise_sigma = 0.1;
  int utterances = 100;
  int min_length = 3;      // characters per utterance, spaces excluded
  int max_length = 10;
  uint64_t seed = 1;

  void validate() const;
};

struct SynthCorpus {
  std::vector<uint32_t> charset;  // latin block, space (when latin present), cjk block
  std::vector<std::vector<uint32_t>> texts;
  std::vector<bool> is_cjk;       // language tag per utterance
  std::vector<DenseMatrix> features;
  std::vector<std::vector<int>> lexicon;  // per charset index
  std::vector<int> phone_frames;          // per phone
  DenseMatrix prototypes;                 // phone_inventory x feature_dim
};

SynthCorpus synth_generate(const SynthTaskSpec& spec);

// Feature files: magic "BVQF", u32 version, u32 feature dim, u32 utterance
// count, then per utterance u32 T and T x F float32 frames, little endian.
void save_features(const std::vector<DenseMatrix>& features, const std::string& path);
std::vector<DenseMatrix> load_features(const std::string& path);

// One utterance per line, UTF-8. Loading rejects invalid UTF-8 (DataError).
void save_text_lines(const std::vector<std::vector<uint32_t>>& lines, const std::string& path);
std::vector<std::vector<uint32_t>> load_text_lines(const std::string& path);

// "U+XXXX p0 p1 ..." per charset entry.
void save_lexicon(const SynthCorpus& corpus, const std::string& path);

}  // namespace bytevq
