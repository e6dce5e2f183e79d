#include "bytevq/subword.hpp"

#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "bytevq/utf8.hpp"

namespace bytevq {

namespace {

struct PairHash {
  size_t operator()(const std::pair<Symbol, Symbol>& p) const {
    return std::hash<uint64_t>()((static_cast<uint64_t>(static_cast<uint32_t>(p.first)) << 32) |
                                 static_cast<uint32_t>(p.second));
  }
};

// One leftmost-first, non-overlapping merge pass over a sequence.
void apply_merge(SymbolSeq& seq, const MergeRule& rule) {
  size_t w = 0;
  for (size_t r = 0; r < seq.size();) {
    if (r + 1 < seq.size() && seq[r] == rule.left && seq[r + 1] == rule.right) {
      seq[w++] = rule.merged;
      r += 2;
    } else {
      seq[w++] = seq[r++];
    }
  }
  seq.resize(w);
}

}  // namespace

SubwordVocab bpe_train(const std::vector<SymbolSeq>& corpus, int base_size, int target_size) {
  if (corpus.empty()) throw ConfigError("bpe_train: corpus is empty");
  SubwordVocab vocab;
  vocab.base_size = base_size;
  const int requested = target_size - base_size - vocab.reserved;
  if (requested < 0) {
    throw ConfigError("bpe_train: target_size must be at least base_size + reserved");
  }

  std::vector<SymbolSeq> work = corpus;
  for (const SymbolSeq& seq : work) {
    for (Symbol s : seq) {
      if (s < 0 || (s >= base_size && s != vocab.boundary())) {
        throw InputError("bpe_train: symbol " + std::to_string(s) + " outside base alphabet");
      }
    }
  }

  const Symbol boundary = vocab.boundary();
  for (int k = 0; k < requested; ++k) {
    std::unordered_map<std::pair<Symbol, Symbol>, long, PairHash> counts;
    for (const SymbolSeq& seq : work) {
      for (size_t i = 0; i + 1 < seq.size(); ++i) {
        if (seq[i] == boundary || seq[i + 1] == boundary) continue;
        counts[{seq[i], seq[i + 1]}] += 1;
      }
    }
    if (counts.empty()) {
      vocab.truncated = true;
      break;
    }
    std::pair<Symbol, Symbol> best{0, 0};
    long best_count = -1;
    for (const auto& [pair, count] : counts) {
      if (count > best_count ||
          (count == best_count &&
           (pair.first < best.first || (pair.first == best.first && pair.second < best.second)))) {
        best = pair;
        best_count = count;
      }
    }
    MergeRule rule{best.first, best.second, static_cast<Symbol>(vocab.size())};
    vocab.merges.push_back(rule);
    for (SymbolSeq& seq : work) apply_merge(seq, rule);
  }
  return vocab;
}

SymbolSeq bpe_encode(const SubwordVocab& vocab, const SymbolSeq& seq) {
  for (Symbol s : seq) {
    if (s < 0 || (s >= vocab.base_size && s != vocab.boundary())) {
      throw InputError("bpe_encode: symbol " + std::to_string(s) + " outside base alphabet");
    }
  }
  SymbolSeq out = seq;
  for (const MergeRule& rule : vocab.merges) apply_merge(out, rule);
  return out;
}

SymbolSeq bpe_decode(const SubwordVocab& vocab, const SymbolSeq& seq) {
  SymbolSeq out;
  out.reserve(seq.size());
  const int first_merged = vocab.base_size + vocab.reserved;
  std::vector<Symbol> stack;
  for (Symbol s : seq) {
    if (s < 0 || s >= vocab.size()) {
      throw InputError("bpe_decode: symbol " + std::to_string(s) + " outside vocabulary");
    }
    stack.push_back(s);
    while (!stack.empty()) {
      const Symbol top = stack.back();
      stack.pop_back();
      if (top < first_merged) {
        out.push_back(top);
      } else {
        const MergeRule& rule = vocab.merges[top - first_merged];
        stack.push_back(rule.right);
        stack.push_back(rule.left);
      }
    }
  }
  return out;
}

void save_vocab(const SubwordVocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_vocab: cannot open " + path);
  out << "bytevq-bpe v1\n";
  out << "base_size " << vocab.base_size << "\n";
  out << "reserved " << vocab.reserved << "\n";
  out << "truncated " << (vocab.truncated ? 1 : 0) << "\n";
  out << "merges " << vocab.merges.size() << "\n";
  for (const MergeRule& m : vocab.merges) {
    out << m.left << " " << m.right << " " << m.merged << "\n";
  }
  if (!out) throw DataError("save_vocab: write failed for " + path);
}

SubwordVocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_vocab: cannot open " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "bytevq-bpe" || version != "v1") {
    throw DataError("load_vocab: " + path + " is not a bytevq-bpe v1 file");
  }
  SubwordVocab vocab;
  std::string key;
  size_t merge_count = 0;
  int truncated = 0;
  in >> key >> vocab.base_size;
  if (key != "base_size") throw DataError("load_vocab: missing base_size header");
  in >> key >> vocab.reserved;
  if (key != "reserved") throw DataError("load_vocab: missing reserved header");
  in >> key >> truncated;
  if (key != "truncated") throw DataError("load_vocab: missing truncated header");
  vocab.truncated = truncated != 0;
  in >> key >> merge_count;
  if (key != "merges") throw DataError("load_vocab: missing merges header");
  vocab.merges.reserve(merge_count);
  for (size_t i = 0; i < merge_count; ++i) {
    MergeRule m;
    if (!(in >> m.left >> m.right >> m.merged)) {
      throw DataError("load_vocab: truncated merge table in " + path);
    }
    if (m.merged != vocab.base_size + vocab.reserved + static_cast<Symbol>(i)) {
      throw DataError("load_vocab: merge ids out of order in " + path);
    }
    vocab.merges.push_back(m);
  }
  return vocab;
}

std::vector<SymbolSeq> byte_corpus_from_lines(const std::vector<std::vector<uint32_t>>& lines) {
  std::vector<SymbolSeq> corpus;
  corpus.reserve(lines.size());
  const Symbol boundary = 256;
  for (const auto& line : lines) {
    SymbolSeq seq;
    bool at_word_start = true;
    for (uint32_t cp : line) {
      if (cp == ' ') {
        at_word_start = true;
        continue;
      }
      if (at_word_start) {
        seq.push_back(boundary);
        at_word_start = false;
      }
      for (uint8_t b : utf8_encode({cp})) seq.push_back(b);
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

std::vector<SymbolSeq> latent_corpus_from_streams(const std::vector<std::vector<int>>& streams,
                                                  int base_size) {
  std::vector<SymbolSeq> corpus;
  corpus.reserve(streams.size());
  for (const auto& stream : streams) {
    SymbolSeq seq;
    seq.reserve(stream.size() + 1);
    seq.push_back(base_size);  // utterance boundary
    for (int id : stream) {
      if (id < 0 || id >= base_size) {
        throw InputError("latent corpus: symbol id " + std::to_string(id) + " out of range");
      }
      seq.push_back(id);
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

}  // namespace bytevq
