#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bytevq/numerics.hpp"

namespace bytevq {

// One discrete code of the learned representation: a (codebook level, index)
// pair, flattened to id = level * M + index so the level survives inside the
// symbol itself.
struct LatentSymbol {
  int level = 0;
  int index = 0;
};

inline int symbol_id(const LatentSymbol& s, int codes_per_level) {
  return s.level * codes_per_level + s.index;
}
inline LatentSymbol symbol_from_id(int id, int codes_per_level) {
  return {id / codes_per_level, id % codes_per_level};
}

struct Codebook {
  int level = 0;
  DenseMatrix embeddings;  // M x D
};

// N codebooks of M D-dimensional embeddings plus the commitment weight beta.
struct RvqCodec {
  std::vector<Codebook> books;
  double beta = 0.25;

  int levels() const { return static_cast<int>(books.size()); }
  int codes_per_level() const { return books.empty() ? 0 : books.front().embeddings.rows; }
  int dim() const { return books.empty() ? 0 : books.front().embeddings.cols; }
};

RvqCodec make_rvq_codec(int levels, int codes_per_level, int dim, double beta, uint64_t seed);

// Non-owning view so models that keep codebooks inside a ParamStore share the
// same quantization path.
struct RvqView {
  std::vector<const DenseMatrix*> books;
  double beta = 0.25;

  int levels() const { return static_cast<int>(books.size()); }
  int codes_per_level() const { return books.empty() ? 0 : books.front()->rows; }
  int dim() const { return books.empty() ? 0 : books.front()->cols; }
};

RvqView view_of(const RvqCodec& codec);

struct VqPick {
  LatentSymbol symbol;
  std::vector<double> embedding;
  double loss = 0.0;
};

// Nearest codebook row by squared Euclidean distance (ties to the lowest
// index) and the quantization loss
//   ||sg[z] - e||^2 + beta * ||z - sg[e]||^2,
// whose first term gradient touches only the codebook row (2(e - z)) and
// whose second touches only z (2 beta (z - e)).
VqPick vq_quantize(std::span<const double> z, const DenseMatrix& codebook, int level, double beta);

struct QuantizeResult {
  std::vector<LatentSymbol> symbols;          // one per level
  std::vector<double> reconstruction;         // sum of chosen embeddings
  std::vector<double> straight_through_output;  // == reconstruction; carries the gradient copy
  double vq_loss = 0.0;
  std::vector<std::vector<double>> level_inputs;  // residual fed to each level
};

// Sequential residual quantization through all levels. Residuals are formed
// against the chosen embeddings treated as constants, so the commitment
// gradient of every level lands on z.
QuantizeResult rvq_quantize(std::span<const double> z, const RvqView& codec);
QuantizeResult rvq_quantize(std::span<const double> z, const RvqCodec& codec);

// Backward pass for one quantized vector. downstream_grad is dLoss/d(straight
// through output); it is copied to z unchanged (straight-through contract).
// vq_weight scales the Eq-style quantization loss contribution. Codebook row
// gradients are accumulated into book_grads when non-null.
std::vector<double> rvq_backward(const QuantizeResult& result, const RvqView& codec,
                                 std::span<const double> downstream_grad, double vq_weight,
                                 std::vector<DenseMatrix*>* book_grads);

// Term-level pieces of the quantization loss, exposed so each gradient can be
// finite-difference checked in isolation with the assignment held fixed.
double vq_codebook_term(std::span<const double> z, std::span<const double> e,
                        std::span<double> grad_e);
double vq_commitment_term(std::span<const double> z, std::span<const double> e, double beta,
                          std::span<double> grad_z);

struct LevelUtilization {
  int active = 0;
  double perplexity = 0.0;
  bool defined = false;  // false when the histogram is all zero
};

// Active-code counts and exp(entropy) per level from a usage histogram.
std::vector<LevelUtilization> utilization_stats(
    const std::vector<std::vector<long>>& histogram_per_level);

// Resets codebook rows that stayed unused for at least `threshold`
// consecutive epochs to randomly chosen recent encoder outputs. Gated by
// `enabled` (off by default in training configs). Returns the number of rows
// restarted.
int dead_code_restart(RvqCodec& codec, const std::vector<std::vector<int>>& epochs_unused,
                      const std::vector<std::vector<double>>& recent_inputs, int threshold,
                      uint64_t seed, bool enabled);

}  // namespace bytevq
