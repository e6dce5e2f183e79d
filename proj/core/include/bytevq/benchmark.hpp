#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bytevq/asr.hpp"
#include "bytevq/autoencoder.hpp"
#include "bytevq/codec.hpp"
#include "bytevq/subword.hpp"
#include "bytevq/synth.hpp"

namespace bytevq {

// End-to-end comparison of output representations on the synthetic task:
//   char  charset indices, one class per character (subword size fixed)
//   utf8  UTF-8 bytes + BPE subwords
//   vq    codec latent bytes + BPE subwords
// Each (representation, subword size) pair trains its own CTC model on the
// train split and is scored on the held-out split, word-level TER for latin
// utterances and character-level for cjk.
struct BenchmarkConfig {
  SynthTaskSpec task;
  std::vector<std::string> representations = {"char", "utf8", "vq"};
  std::vector<int> vocab_sizes = {1000};
  double train_fraction = 0.8;
  AutoEncoderConfig codec;    // charset_size/feature_dim filled from the task
  AsrConfig asr;              // feature_dim/vocab filled per run
  std::string artifact_path;  // reuse a trained codec instead of training one
  int beam_width = 8;
  int prune_candidates = 16;  // beam expansion cap per frame, 0 = exact

  void validate() const;
};

struct BenchmarkResult {
  std::vector<EvalReport> reports;  // representation order given, sizes ascending
  double codec_round_trip = -1.0;   // held-out round trip, -1 when vq never ran
  std::string table;
  std::vector<std::string> keyvals;
};

// `log` gets one progress line per stage when non-null.
BenchmarkResult run_benchmark(const BenchmarkConfig& config, std::ostream* log = nullptr);

// Decoded token sequence -> text for one representation. char: charset
// lookup. utf8: BPE expansion, boundaries become spaces, bytes repaired.
// vq: BPE expansion, boundaries dropped, latent stream decoded. vocab is
// ignored for char; artifact only matters for vq.
std::vector<uint32_t> invert_tokens(const std::string& rep, const std::vector<int>& tokens,
                                    const SubwordVocab& vocab, const CodecArtifact& artifact,
                                    const std::vector<uint32_t>& charset);

}  // namespace bytevq
