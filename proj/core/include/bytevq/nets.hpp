#pragma once

#include <string>
#include <vector>

#include "bytevq/numerics.hpp"

namespace bytevq {

// Small building blocks shared by the auto-encoder and the toy ASR model.
// Forward passes read weights through non-owning views so the same code
// serves ParamStore-backed training and artifact-backed inference. Backward
// passes accumulate into ParamStore gradients.

// Linear layer y = x W + b with x as rows.
// Tensors: {prefix}.w (in x out), {prefix}.b (1 x out).
struct LinearView {
  const DenseMatrix* w = nullptr;
  const DenseMatrix* b = nullptr;
};

void linear_init(ParamStore& params, const std::string& prefix, int in, int out, Rng& rng);
LinearView linear_view(const ParamStore& params, const std::string& prefix);
DenseMatrix linear_forward(const LinearView& v, const DenseMatrix& x);
// grad_x may be null when the input is data.
void linear_backward(ParamStore& params, const std::string& prefix, const DenseMatrix& x,
                     const DenseMatrix& grad_out, DenseMatrix* grad_x);

// Causal token encoder: embedding lookup followed by `layers` causal
// convolutions of width 3 with tanh. Output row i depends on tokens 0..i
// only; positions before the sequence start read zeros.
// Tensors: {prefix}.embed (charset x dim),
//          {prefix}.conv{l}.tap{t} (dim x dim, tap t reads position i - t),
//          {prefix}.conv{l}.bias (1 x dim).
struct TokenEncoderView {
  const DenseMatrix* embed = nullptr;
  struct Layer {
    const DenseMatrix* tap[3] = {nullptr, nullptr, nullptr};
    const DenseMatrix* bias = nullptr;
  };
  std::vector<Layer> layers;

  int dim() const { return embed ? embed->cols : 0; }
};

void token_encoder_init(ParamStore& params, const std::string& prefix, int charset, int dim,
                        int layers, Rng& rng);
TokenEncoderView token_encoder_view(const ParamStore& params, const std::string& prefix,
                                    int layers);

struct TokenEncoderTrace {
  std::vector<int> tokens;
  // acts[0] = embedding rows, acts[l + 1] = tanh output of layer l.
  std::vector<DenseMatrix> acts;
};

// Returns the T x dim output (the last activation). Throws InputError on a
// token outside the embedding table.
DenseMatrix token_encoder_forward(const TokenEncoderView& v, const std::vector<int>& tokens,
                                  TokenEncoderTrace* trace);
void token_encoder_backward(ParamStore& params, const std::string& prefix,
                            const TokenEncoderTrace& trace, const DenseMatrix& grad_out);

// Per-frame MLP over stacked context frames: frame t sees frames
// t - context .. t + context (zeros outside the utterance), two tanh hidden
// layers, linear output logits.
// Tensors: {prefix}.w1/b1, {prefix}.w2/b2, {prefix}.w3/b3.
struct FrameMlpSpec {
  int feature_dim = 0;
  int context = 2;
  int hidden = 64;
  int outputs = 0;

  int stacked_dim() const { return feature_dim * (2 * context + 1); }
};

struct FrameMlpView {
  FrameMlpSpec spec;
  const DenseMatrix* w1 = nullptr;
  const DenseMatrix* b1 = nullptr;
  const DenseMatrix* w2 = nullptr;
  const DenseMatrix* b2 = nullptr;
  const DenseMatrix* w3 = nullptr;
  const DenseMatrix* b3 = nullptr;
};

void frame_mlp_init(ParamStore& params, const std::string& prefix, const FrameMlpSpec& spec,
                    Rng& rng);
FrameMlpView frame_mlp_view(const ParamStore& params, const std::string& prefix,
                            const FrameMlpSpec& spec);

struct FrameMlpTrace {
  DenseMatrix stacked;  // T x stacked_dim
  DenseMatrix h1;       // T x hidden, post tanh
  DenseMatrix h2;       // T x hidden, post tanh
};

DenseMatrix frame_mlp_forward(const FrameMlpView& v, const DenseMatrix& features,
                              FrameMlpTrace* trace);
void frame_mlp_backward(ParamStore& params, const std::string& prefix, const FrameMlpSpec& spec,
                        const FrameMlpTrace& trace, const DenseMatrix& grad_logits);

}  // namespace bytevq
