#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bytevq/nets.hpp"
#include "bytevq/numerics.hpp"

namespace bytevq {

// Toy CTC acoustic model: the same frame MLP family as the auto-encoder's
// acoustic branch, trained on subword targets. Class ids 0..vocab-1 are
// subwords, vocab is the blank.
struct AsrConfig {
  int feature_dim = 8;
  int context = 2;
  int hidden = 64;
  int vocab = 0;
  int epochs = 10;
  int batch_size = 8;
  OptimizerConfig optimizer;
  uint64_t seed = 1;

  int blank() const { return vocab; }
  void validate() const;
};

struct AsrModel {
  AsrConfig config;
  ParamStore params;

  FrameMlpView view() const;
  FrameMlpSpec spec() const;
};

AsrModel make_asr_model(const AsrConfig& config);

struct AsrEpoch {
  double loss = 0.0;  // mean CTC loss over feasible utterances
  int skipped = 0;    // utterances whose targets cannot fit their frames
};

struct AsrTrainReport {
  std::vector<AsrEpoch> epochs;
};

AsrModel train_asr(const std::vector<std::vector<int>>& targets,
                   const std::vector<DenseMatrix>& features, const AsrConfig& config,
                   AsrTrainReport* report = nullptr);

// T x (vocab+1) unnormalized scores for one utterance.
DenseMatrix asr_logits(const AsrModel& model, const DenseMatrix& features);

void save_asr_model(const AsrModel& model, const std::string& path);
AsrModel load_asr_model(const std::string& path);

struct Hypothesis {
  std::vector<int> tokens;
  double log_score = 0.0;
};

// Standard CTC prefix beam search merging blank/non-blank mass per prefix.
// Ties rank the lexicographically smaller token sequence first. When
// prune_candidates > 0 only the that many highest-scoring non-blank symbols
// per frame are expanded (0 means exact).
std::vector<Hypothesis> ctc_prefix_beam_search(const DenseMatrix& logits, int blank,
                                               int beam_width, int n_best,
                                               int prune_candidates = 0);

// Seeded per-position corruption. Per input symbol, in draw order: a deletion
// coin; if it survives, a substitution coin (plus a uniform replacement id);
// then an insertion coin (plus a uniform inserted id).
std::vector<int> corrupt_stream(const std::vector<int>& stream, int symbols, double sub_rate,
                                double del_rate, double ins_rate, uint64_t seed);

enum class TokenMode {
  kWords,  // whitespace-separated words (latin-like text)
  kChars,  // one token per codepoint (cjk-like text)
};

struct EditCounts {
  long subs = 0;
  long dels = 0;
  long ins = 0;
  long ref_len = 0;

  long errors() const { return subs + dels + ins; }
  double ter() const { return double(errors()) / double(ref_len == 0 ? 1 : ref_len); }
  void add(const EditCounts& other);
};

// Unit-cost Levenshtein alignment between token sequences.
EditCounts token_error_rate(const std::vector<uint32_t>& reference,
                            const std::vector<uint32_t>& hypothesis, TokenMode mode);

struct LangScore {
  EditCounts counts;
  int utterances = 0;
};

struct EvalReport {
  std::string representation;
  int vocab = 0;
  LangScore latin;
  LangScore cjk;
};

}  // namespace bytevq
