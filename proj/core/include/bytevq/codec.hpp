#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bytevq/autoencoder.hpp"
#include "bytevq/nets.hpp"
#include "bytevq/quantizer.hpp"

namespace bytevq {

inline constexpr int kArtifactVersion = 1;

// The learned codec as a portable bundle: charset, causal encoder weights,
// codebooks and the linear decoder. Weights are rounded to single precision
// at construction, so the in-memory artifact and its saved form encode and
// decode identically.
struct CodecArtifact {
  int version = kArtifactVersion;
  std::vector<uint32_t> charset;  // token id = position in this list
  int levels = 0;
  int codes_per_level = 0;
  int dim = 0;
  double beta = 0.25;
  int encoder_layers = 0;
  uint64_t seed = 0;          // provenance
  std::string corpus_hash;    // provenance

  DenseMatrix embed;  // charset x dim
  struct ConvLayer {
    DenseMatrix tap0, tap1, tap2;  // dim x dim
    DenseMatrix bias;              // 1 x dim
  };
  std::vector<ConvLayer> conv;
  DenseMatrix dec_w;  // dim x charset
  DenseMatrix dec_b;  // 1 x charset
  std::vector<DenseMatrix> books;  // levels of (codes_per_level x dim)

  int symbol_count() const { return levels * codes_per_level; }
  int token_of(uint32_t cp) const;  // -1 when the character is not in the charset
  TokenEncoderView encoder_view() const;
  LinearView decoder_view() const;
  RvqView codec_view() const;
};

CodecArtifact make_artifact(const AutoEncoderModel& model, const std::vector<uint32_t>& charset,
                            const std::string& corpus_hash);

// Single JSON document with a trailing checksum; version checked on load.
void save_artifact(const CodecArtifact& artifact, const std::string& path);
CodecArtifact load_artifact(const std::string& path);

// Deterministic text -> latent byte stream via the label encoder; output
// length is levels * |text|. Throws InputError naming the first character
// outside the charset.
std::vector<int> text_to_bytes(const CodecArtifact& artifact,
                               const std::vector<uint32_t>& text);

// Accumulate-and-flush stream decoding: symbols are summed while the
// codebook level ascends; a level that fails to ascend flushes the
// accumulated embedding through the decoder. Total over any stream of valid
// ids; empty input decodes to empty output. Argmax ties take the lowest
// charset index.
std::vector<uint32_t> bytes_to_labels(const CodecArtifact& artifact,
                                      const std::vector<int>& stream);

// Baseline that ignores level tags and decodes every `levels` consecutive
// symbols as one token (final partial group included). A single deletion
// shifts every later group; kept for comparisons.
std::vector<uint32_t> bytes_to_labels_positional(const CodecArtifact& artifact,
                                                 const std::vector<int>& stream);

// Number of charset characters whose encoded byte sequence collides with an
// earlier character's (distinct characters may legally share one).
int collision_count(const CodecArtifact& artifact);

// Fraction of characters for which decode(encode(line)) matches, over all
// lines.
double round_trip_accuracy(const CodecArtifact& artifact,
                           const std::vector<std::vector<uint32_t>>& lines);

// Full trainer checkpoint: artifact content plus acoustic encoder weights
// and optimizer state.
void save_checkpoint(const AutoEncoderModel& model, const std::vector<uint32_t>& charset,
                     const std::string& path);
AutoEncoderModel load_checkpoint(const std::string& path, std::vector<uint32_t>* charset);

// Latent stream files: decimal symbol ids, space separated, one utterance
// per line. Ids outside [0, max_id) are rejected (DataError names the line).
void save_streams(const std::vector<std::vector<int>>& streams, const std::string& path);
std::vector<std::vector<int>> load_streams(const std::string& path, int max_id);

uint64_t hash_lines(const std::vector<std::vector<uint32_t>>& lines);

}  // namespace bytevq
