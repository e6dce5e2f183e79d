#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bytevq/error.hpp"

namespace bytevq {

using Symbol = int32_t;
using SymbolSeq = std::vector<Symbol>;

struct MergeRule {
  Symbol left = 0;
  Symbol right = 0;
  Symbol merged = 0;
};

// BPE vocabulary over a generic base alphabet. Symbol ids:
//   [0, base_size)          base alphabet (UTF-8 bytes or latent symbol ids)
//   base_size               boundary marker (reserved, never merged)
//   base_size + 1 + k       product of merge rule k
struct SubwordVocab {
  int base_size = 0;
  int reserved = 1;
  std::vector<MergeRule> merges;
  bool truncated = false;  // set when the pair supply ran out before target_size

  Symbol boundary() const { return base_size; }
  int size() const { return base_size + reserved + static_cast<int>(merges.size()); }
};

// Greedy most-frequent-pair training. Pairs containing the boundary marker
// are never merged. Ties: higher count, then lower left id, then lower
// right id. Deterministic for a fixed corpus and target.
SubwordVocab bpe_train(const std::vector<SymbolSeq>& corpus, int base_size, int target_size);

// Applies merges in training order, leftmost-first within each pass.
// Input symbols must be base symbols or the boundary marker.
SymbolSeq bpe_encode(const SubwordVocab& vocab, const SymbolSeq& seq);

// Expands merged symbols back to base symbols (and boundary markers).
SymbolSeq bpe_decode(const SubwordVocab& vocab, const SymbolSeq& seq);

void save_vocab(const SubwordVocab& vocab, const std::string& path);
SubwordVocab load_vocab(const std::string& path);

// Corpus preparation.
// Byte corpora: each line is split on whitespace and every word gets a
// leading boundary marker, so merges never span words. A line without
// whitespace (CJK-like text) is one segment.
std::vector<SymbolSeq> byte_corpus_from_lines(const std::vector<std::vector<uint32_t>>& lines);
// Latent corpora: one boundary marker at the start of each utterance only.
std::vector<SymbolSeq> latent_corpus_from_streams(const std::vector<std::vector<int>>& streams,
                                                  int base_size);

}  // namespace bytevq
