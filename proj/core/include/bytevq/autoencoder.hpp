#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bytevq/ctc.hpp"
#include "bytevq/nets.hpp"
#include "bytevq/numerics.hpp"
#include "bytevq/quantizer.hpp"

namespace bytevq {

// The quantized auto-encoder: causal label encoder -> residual VQ -> linear
// label decoder, plus an acoustic encoder tied in through a CTC loss and a
// posterior-mixture cross entropy. Four weighted loss terms:
//   w_label     label-side reconstruction CE (through the straight-through
//               copy; trains encoder + decoder)
//   w_acoustic  CE of the decoder fed acoustic posterior mixtures (trains
//               decoder + acoustic encoder; codebook and alignment held
//               constant)
//   w_ctc       CTC of the acoustic encoder against the current latent
//               stream (trains the acoustic encoder only)
//   w_vq        quantization loss (codebooks + commitment)
struct AutoEncoderConfig {
  int charset_size = 0;
  int dim = 32;
  int encoder_layers = 2;
  int levels = 3;
  int codes_per_level = 256;
  double beta = 0.25;
  int feature_dim = 8;
  int context = 2;
  int hidden = 64;
  double w_label = 1.0;
  double w_acoustic = 1.0;
  double w_ctc = 1.0;
  double w_vq = 1.0;
  int epochs = 30;
  int batch_size = 8;
  OptimizerConfig optimizer;
  uint64_t seed = 1;
  bool kmeans_init = false;        // warm-start codebooks from encoder outputs
  bool restart_dead_codes = false;
  int dead_code_epochs = 3;
  // Stop when the label-CE term drops below this (0 disables).
  double stop_ce_label = 0.0;

  int symbol_count() const { return levels * codes_per_level; }
  int blank() const { return symbol_count(); }
  void validate() const;
};

// Tensors: enc.* (token encoder), dec.* (linear decoder), ac.* (frame MLP),
// vq.book{k} (codebooks, trained like any other tensor).
struct AutoEncoderModel {
  AutoEncoderConfig config;
  ParamStore params;

  TokenEncoderView encoder_view() const;
  LinearView decoder_view() const;
  FrameMlpView acoustic_view() const;
  RvqView codec_view() const;
};

// Creates and seeds all tensors from config.seed.
AutoEncoderModel make_autoencoder(const AutoEncoderConfig& config);

struct LossBreakdown {
  double ce_label = 0.0;
  double ce_acoustic = 0.0;
  double ctc = 0.0;
  double vq = 0.0;
  double total = 0.0;
};

struct LabelEncoding {
  DenseMatrix z;                          // |W| x D encoder outputs
  std::vector<QuantizeResult> quantized;  // one per token
  std::vector<int> stream;                // symbol ids, levels interleaved per token
};

// Causal encode + residual quantization. stream lists token 0's levels
// 0..N-1, then token 1's, and so on.
LabelEncoding label_encode(const AutoEncoderModel& model, const std::vector<int>& tokens,
                           TokenEncoderTrace* trace = nullptr);

// Row-wise decoder distributions over the charset (each row sums to 1).
DenseMatrix label_decode(const AutoEncoderModel& model, const DenseMatrix& inputs);

// Posterior mixture for one latent position: softmax over the M logits of
// `level` at `frame` (blank and other levels excluded), times that level's
// embedding rows.
std::vector<double> acoustic_embedding_mixture(const DenseMatrix& logits, int frame,
                                               const RvqView& codec, int level);

struct Utterance {
  const std::vector<int>* tokens = nullptr;
  const DenseMatrix* features = nullptr;
};

// Raw per-step sums plus the normalizers, so epochs can aggregate exactly.
struct StepStats {
  LossBreakdown loss;       // normalized over this step's batch
  double sum_ce_label = 0.0;
  double sum_ce_acoustic = 0.0;
  double sum_ctc = 0.0;
  double sum_vq = 0.0;
  long tokens = 0;           // all utterances
  long tokens_feasible = 0;  // utterances with a feasible CTC alignment
  long feasible = 0;
  long infeasible = 0;
  std::vector<std::vector<long>> symbol_counts;  // per level usage of Q_L
};

// Forward pass over the batch; when accumulate is set, also adds gradients
// to whatever is already in model.params (callers zero first). Throws
// NumericError with all four term values when the total is non-finite.
StepStats batch_loss(AutoEncoderModel& model, const std::vector<Utterance>& batch,
                     bool accumulate);

// zero_grad + batch_loss + one optimizer update.
StepStats train_step(AutoEncoderModel& model, const std::vector<Utterance>& batch);

struct EpochReport {
  LossBreakdown loss;
  std::vector<LevelUtilization> utilization;
  long infeasible = 0;
  int restarted_codes = 0;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  bool stopped_early = false;
};

// Epoch loop with seeded shuffling. corpus and features are parallel
// (DataError on count mismatch).
AutoEncoderModel train_autoencoder(const std::vector<std::vector<int>>& corpus,
                                   const std::vector<DenseMatrix>& features,
                                   const AutoEncoderConfig& config, TrainReport* report);

}  // namespace bytevq
