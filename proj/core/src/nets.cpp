#include "bytevq/nets.hpp"

#include <cmath>

namespace bytevq {

namespace {

// out += x * w, one row of x against w: in x out.
void add_matmul_row(const double* x, const DenseMatrix& w, double* out) {
  for (int i = 0; i < w.rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* wr = w.row(i);
    for (int j = 0; j < w.cols; ++j) out[j] += xi * wr[j];
  }
}

// Accumulates one row's contribution: wg += x^T g, gx += w g.
void backprop_row(const double* x, const double* g, Tensor& w, double* gx) {
  for (int i = 0; i < w.value.rows; ++i) {
    const double xi = x[i];
    const double* wr = w.value.row(i);
    double* wg = w.grad.row(i);
    double acc = 0.0;
    for (int j = 0; j < w.value.cols; ++j) {
      wg[j] += xi * g[j];
      acc += wr[j] * g[j];
    }
    if (gx) gx[i] += acc;
  }
}

void init_matrix(ParamStore& params, const std::string& name, int rows, int cols, Rng& rng,
                 double stddev) {
  Tensor& t = params.create(name, rows, cols);
  if (stddev > 0.0) fill_gaussian(t.value, rng, stddev);
}

}  // namespace

void linear_init(ParamStore& params, const std::string& prefix, int in, int out, Rng& rng) {
  init_matrix(params, prefix + ".w", in, out, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  init_matrix(params, prefix + ".b", 1, out, rng, 0.0);
}

LinearView linear_view(const ParamStore& params, const std::string& prefix) {
  LinearView v;
  v.w = &params.at(prefix + ".w").value;
  v.b = &params.at(prefix + ".b").value;
  return v;
}

DenseMatrix linear_forward(const LinearView& v, const DenseMatrix& x) {
  if (x.cols != v.w->rows) throw InputError("linear_forward: input dim mismatch");
  DenseMatrix out(x.rows, v.w->cols);
  for (int r = 0; r < x.rows; ++r) {
    double* o = out.row(r);
    for (int j = 0; j < v.w->cols; ++j) o[j] = v.b->at(0, j);
    add_matmul_row(x.row(r), *v.w, o);
  }
  return out;
}

void linear_backward(ParamStore& params, const std::string& prefix, const DenseMatrix& x,
                     const DenseMatrix& grad_out, DenseMatrix* grad_x) {
  Tensor& w = params.at(prefix + ".w");
  Tensor& b = params.at(prefix + ".b");
  for (int r = 0; r < x.rows; ++r) {
    const double* g = grad_out.row(r);
    for (int j = 0; j < w.value.cols; ++j) b.grad.at(0, j) += g[j];
    backprop_row(x.row(r), g, w, grad_x ? grad_x->row(r) : nullptr);
  }
}

void token_encoder_init(ParamStore& params, const std::string& prefix, int charset, int dim,
                        int layers, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  init_matrix(params, prefix + ".embed", charset, dim, rng, scale);
  for (int l = 0; l < layers; ++l) {
    const std::string base = prefix + ".conv" + std::to_string(l);
    for (int t = 0; t < 3; ++t) {
      init_matrix(params, base + ".tap" + std::to_string(t), dim, dim, rng, scale);
    }
    init_matrix(params, base + ".bias", 1, dim, rng, 0.0);
  }
}

TokenEncoderView token_encoder_view(const ParamStore& params, const std::string& prefix,
                                    int layers) {
  TokenEncoderView v;
  v.embed = &params.at(prefix + ".embed").value;
  v.layers.resize(layers);
  for (int l = 0; l < layers; ++l) {
    const std::string base = prefix + ".conv" + std::to_string(l);
    for (int t = 0; t < 3; ++t) {
      v.layers[l].tap[t] = &params.at(base + ".tap" + std::to_string(t)).value;
    }
    v.layers[l].bias = &params.at(base + ".bias").value;
  }
  return v;
}

DenseMatrix token_encoder_forward(const TokenEncoderView& v, const std::vector<int>& tokens,
                                  TokenEncoderTrace* trace) {
  const int T = static_cast<int>(tokens.size());
  const int D = v.dim();
  DenseMatrix act(T, D);
  for (int i = 0; i < T; ++i) {
    const int tok = tokens[i];
    if (tok < 0 || tok >= v.embed->rows) {
      throw InputError("token_encoder: token " + std::to_string(tok) + " outside charset of " +
                       std::to_string(v.embed->rows));
    }
    const double* e = v.embed->row(tok);
    double* o = act.row(i);
    for (int d = 0; d < D; ++d) o[d] = e[d];
  }
  if (trace) {
    trace->tokens = tokens;
    trace->acts.clear();
    trace->acts.push_back(act);
  }
  for (const auto& layer : v.layers) {
    DenseMatrix next(T, D);
    for (int i = 0; i < T; ++i) {
      double* o = next.row(i);
      for (int d = 0; d < D; ++d) o[d] = layer.bias->at(0, d);
      for (int t = 0; t < 3 && i - t >= 0; ++t) {
        add_matmul_row(act.row(i - t), *layer.tap[t], o);
      }
      for (int d = 0; d < D; ++d) o[d] = std::tanh(o[d]);
    }
    act = std::move(next);
    if (trace) trace->acts.push_back(act);
  }
  return act;
}

void token_encoder_backward(ParamStore& params, const std::string& prefix,
                            const TokenEncoderTrace& trace, const DenseMatrix& grad_out) {
  const int layers = static_cast<int>(trace.acts.size()) - 1;
  const int T = grad_out.rows;
  const int D = grad_out.cols;
  DenseMatrix grad = grad_out;
  std::vector<double> gp(D);
  for (int l = layers - 1; l >= 0; --l) {
    const std::string base = prefix + ".conv" + std::to_string(l);
    const DenseMatrix& input = trace.acts[l];
    const DenseMatrix& output = trace.acts[l + 1];
    Tensor& bias = params.at(base + ".bias");
    Tensor* taps[3] = {&params.at(base + ".tap0"), &params.at(base + ".tap1"),
                       &params.at(base + ".tap2")};
    DenseMatrix grad_in(T, D);
    for (int i = 0; i < T; ++i) {
      const double* h = output.row(i);
      const double* g = grad.row(i);
      for (int d = 0; d < D; ++d) {
        gp[d] = g[d] * (1.0 - h[d] * h[d]);
        bias.grad.at(0, d) += gp[d];
      }
      for (int t = 0; t < 3 && i - t >= 0; ++t) {
        backprop_row(input.row(i - t), gp.data(), *taps[t], grad_in.row(i - t));
      }
    }
    grad = std::move(grad_in);
  }
  Tensor& embed = params.at(prefix + ".embed");
  for (int i = 0; i < T; ++i) {
    double* eg = embed.grad.row(trace.tokens[i]);
    const double* g = grad.row(i);
    for (int d = 0; d < D; ++d) eg[d] += g[d];
  }
}

void frame_mlp_init(ParamStore& params, const std::string& prefix, const FrameMlpSpec& spec,
                    Rng& rng) {
  const int in = spec.stacked_dim();
  init_matrix(params, prefix + ".w1", in, spec.hidden, rng, 1.0 / std::sqrt(in));
  init_matrix(params, prefix + ".b1", 1, spec.hidden, rng, 0.0);
  init_matrix(params, prefix + ".w2", spec.hidden, spec.hidden, rng,
              1.0 / std::sqrt(spec.hidden));
  init_matrix(params, prefix + ".b2", 1, spec.hidden, rng, 0.0);
  init_matrix(params, prefix + ".w3", spec.hidden, spec.outputs, rng,
              1.0 / std::sqrt(spec.hidden));
  init_matrix(params, prefix + ".b3", 1, spec.outputs, rng, 0.0);
}

FrameMlpView frame_mlp_view(const ParamStore& params, const std::string& prefix,
                            const FrameMlpSpec& spec) {
  FrameMlpView v;
  v.spec = spec;
  v.w1 = &params.at(prefix + ".w1").value;
  v.b1 = &params.at(prefix + ".b1").value;
  v.w2 = &params.at(prefix + ".w2").value;
  v.b2 = &params.at(prefix + ".b2").value;
  v.w3 = &params.at(prefix + ".w3").value;
  v.b3 = &params.at(prefix + ".b3").value;
  return v;
}

DenseMatrix frame_mlp_forward(const FrameMlpView& v, const DenseMatrix& features,
                              FrameMlpTrace* trace) {
  const FrameMlpSpec& spec = v.spec;
  if (features.cols != spec.feature_dim) throw InputError("frame_mlp: feature dim mismatch");
  const int T = features.rows;
  const int F = spec.feature_dim;
  DenseMatrix stacked(T, spec.stacked_dim());
  for (int t = 0; t < T; ++t) {
    double* o = stacked.row(t);
    for (int c = -spec.context; c <= spec.context; ++c) {
      const int src = t + c;
      if (src < 0 || src >= T) continue;
      double* dst = o + (c + spec.context) * F;
      const double* x = features.row(src);
      for (int f = 0; f < F; ++f) dst[f] = x[f];
    }
  }

  auto dense_tanh = [](const DenseMatrix& x, const DenseMatrix& w, const DenseMatrix& b) {
    DenseMatrix out(x.rows, w.cols);
    for (int r = 0; r < x.rows; ++r) {
      double* o = out.row(r);
      for (int j = 0; j < w.cols; ++j) o[j] = b.at(0, j);
      add_matmul_row(x.row(r), w, o);
      for (int j = 0; j < w.cols; ++j) o[j] = std::tanh(o[j]);
    }
    return out;
  };

  DenseMatrix h1 = dense_tanh(stacked, *v.w1, *v.b1);
  DenseMatrix h2 = dense_tanh(h1, *v.w2, *v.b2);
  DenseMatrix logits(T, spec.outputs);
  for (int t = 0; t < T; ++t) {
    double* o = logits.row(t);
    for (int j = 0; j < spec.outputs; ++j) o[j] = v.b3->at(0, j);
    add_matmul_row(h2.row(t), *v.w3, o);
  }
  if (trace) {
    trace->stacked = std::move(stacked);
    trace->h1 = std::move(h1);
    trace->h2 = std::move(h2);
  }
  return logits;
}

void frame_mlp_backward(ParamStore& params, const std::string& prefix, const FrameMlpSpec& spec,
                        const FrameMlpTrace& trace, const DenseMatrix& grad_logits) {
  const int T = grad_logits.rows;
  Tensor& w3 = params.at(prefix + ".w3");
  Tensor& b3 = params.at(prefix + ".b3");
  Tensor& w2 = params.at(prefix + ".w2");
  Tensor& b2 = params.at(prefix + ".b2");
  Tensor& w1 = params.at(prefix + ".w1");
  Tensor& b1 = params.at(prefix + ".b1");

  std::vector<double> g2(spec.hidden), g1(spec.hidden);
  for (int t = 0; t < T; ++t) {
    const double* g = grad_logits.row(t);
    for (int j = 0; j < spec.outputs; ++j) b3.grad.at(0, j) += g[j];
    std::fill(g2.begin(), g2.end(), 0.0);
    backprop_row(trace.h2.row(t), g, w3, g2.data());

    const double* h2 = trace.h2.row(t);
    for (int j = 0; j < spec.hidden; ++j) {
      g2[j] *= 1.0 - h2[j] * h2[j];
      b2.grad.at(0, j) += g2[j];
    }
    std::fill(g1.begin(), g1.end(), 0.0);
    backprop_row(trace.h1.row(t), g2.data(), w2, g1.data());

    const double* h1 = trace.h1.row(t);
    for (int j = 0; j < spec.hidden; ++j) {
      g1[j] *= 1.0 - h1[j] * h1[j];
      b1.grad.at(0, j) += g1[j];
    }
    backprop_row(trace.stacked.row(t), g1.data(), w1, nullptr);
  }
}

}  // namespace bytevq
