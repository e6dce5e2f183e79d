#include "bytevq/autoencoder.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace bytevq {

namespace {

std::string book_name(int level) { return "vq.book" + std::to_string(level); }

FrameMlpSpec acoustic_spec(const AutoEncoderConfig& c) {
  FrameMlpSpec spec;
  spec.feature_dim = c.feature_dim;
  spec.context = c.context;
  spec.hidden = c.hidden;
  spec.outputs = c.symbol_count() + 1;
  return spec;
}

}  // namespace

void AutoEncoderConfig::validate() const {
  if (charset_size < 1) throw ConfigError("autoencoder: charset_size must be positive");
  if (dim < 1) throw ConfigError("autoencoder: dim must be positive");
  if (encoder_layers < 0) throw ConfigError("autoencoder: encoder_layers must be >= 0");
  if (levels < 1) throw ConfigError("autoencoder: levels must be >= 1");
  if (codes_per_level < 1) throw ConfigError("autoencoder: codes_per_level must be >= 1");
  if (beta < 0.0) throw ConfigError("autoencoder: beta must be >= 0");
  if (feature_dim < 1) throw ConfigError("autoencoder: feature_dim must be positive");
  if (context < 0) throw ConfigError("autoencoder: context must be >= 0");
  if (hidden < 1) throw ConfigError("autoencoder: hidden must be positive");
  if (w_label < 0.0 || w_acoustic < 0.0 || w_ctc < 0.0 || w_vq < 0.0) {
    throw ConfigError("autoencoder: loss weights must be >= 0");
  }
  if (epochs < 0) throw ConfigError("autoencoder: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("autoencoder: batch_size must be >= 1");
  if (dead_code_epochs < 1) throw ConfigError("autoencoder: dead_code_epochs must be >= 1");
  optimizer.validate();
}

TokenEncoderView AutoEncoderModel::encoder_view() const {
  return token_encoder_view(params, "enc", config.encoder_layers);
}

LinearView AutoEncoderModel::decoder_view() const { return linear_view(params, "dec"); }

FrameMlpView AutoEncoderModel::acoustic_view() const {
  return frame_mlp_view(params, "ac", acoustic_spec(config));
}

RvqView AutoEncoderModel::codec_view() const {
  RvqView view;
  view.beta = config.beta;
  for (int k = 0; k < config.levels; ++k) {
    view.books.push_back(&params.at(book_name(k)).value);
  }
  return view;
}

AutoEncoderModel make_autoencoder(const AutoEncoderConfig& config) {
  config.validate();
  AutoEncoderModel model;
  model.config = config;
  Rng rng(config.seed);
  token_encoder_init(model.params, "enc", config.charset_size, config.dim,
                     config.encoder_layers, rng);
  linear_init(model.params, "dec", config.dim, config.charset_size, rng);
  frame_mlp_init(model.params, "ac", acoustic_spec(config), rng);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.dim));
  for (int k = 0; k < config.levels; ++k) {
    Tensor& book = model.params.create(book_name(k), config.codes_per_level, config.dim);
    fill_gaussian(book.value, rng, scale);
  }
  return model;
}

LabelEncoding label_encode(const AutoEncoderModel& model, const std::vector<int>& tokens,
                           TokenEncoderTrace* trace) {
  LabelEncoding enc;
  enc.z = token_encoder_forward(model.encoder_view(), tokens, trace);
  const RvqView codec = model.codec_view();
  const int m = model.config.codes_per_level;
  enc.quantized.reserve(tokens.size());
  enc.stream.reserve(tokens.size() * model.config.levels);
  for (int i = 0; i < enc.z.rows; ++i) {
    QuantizeResult q = rvq_quantize(std::span(enc.z.row(i), enc.z.cols), codec);
    for (const LatentSymbol& s : q.symbols) enc.stream.push_back(symbol_id(s, m));
    enc.quantized.push_back(std::move(q));
  }
  return enc;
}

DenseMatrix label_decode(const AutoEncoderModel& model, const DenseMatrix& inputs) {
  DenseMatrix probs = linear_forward(model.decoder_view(), inputs);
  for (int r = 0; r < probs.rows; ++r) softmax_inplace(std::span(probs.row(r), probs.cols));
  return probs;
}

std::vector<double> acoustic_embedding_mixture(const DenseMatrix& logits, int frame,
                                               const RvqView& codec, int level) {
  const int m = codec.codes_per_level();
  const int d = codec.dim();
  if (frame < 0 || frame >= logits.rows) throw InputError("mixture: frame out of range");
  std::vector<double> post(logits.row(frame) + level * m, logits.row(frame) + (level + 1) * m);
  softmax_inplace(post);
  std::vector<double> mix(d, 0.0);
  const DenseMatrix& book = *codec.books[level];
  for (int q = 0; q < m; ++q) {
    const double p = post[q];
    const double* e = book.row(q);
    for (int j = 0; j < d; ++j) mix[j] += p * e[j];
  }
  return mix;
}

namespace {

// Everything the backward pass needs for one utterance.
struct UttState {
  const Utterance* utt = nullptr;
  TokenEncoderTrace enc_trace;
  LabelEncoding enc;
  DenseMatrix recon;        // T_tok x D straight-through decoder input
  DenseMatrix g_logits1;    // T_tok x charset, unweighted xent grads
  double ce_label = 0.0;
  double vq = 0.0;

  bool feasible = false;
  FrameMlpTrace ac_trace;
  DenseMatrix ac_logits;    // T x (NM + 1)
  DenseMatrix ctc_grad;     // T x (NM + 1), unweighted
  double ctc = 0.0;
  std::vector<int> align;                     // frame per latent position
  std::vector<std::vector<double>> posteriors;  // per latent position, size M
  DenseMatrix mixture_in;   // T_tok x D decoder input from mixtures
  DenseMatrix g_logits2;    // T_tok x charset, unweighted
  double ce_acoustic = 0.0;
};

}  // namespace

StepStats batch_loss(AutoEncoderModel& model, const std::vector<Utterance>& batch,
                     bool accumulate) {
  const AutoEncoderConfig& cfg = model.config;
  const int n = cfg.levels;
  const int m = cfg.codes_per_level;
  const int d = cfg.dim;
  const int blank = cfg.blank();
  const bool need_acoustic = cfg.w_ctc != 0.0 || cfg.w_acoustic != 0.0;

  StepStats stats;
  stats.symbol_counts.assign(n, std::vector<long>(m, 0));

  const LinearView dec = model.decoder_view();
  const FrameMlpView ac = model.acoustic_view();
  const RvqView codec = model.codec_view();

  // Forward pass over the whole batch first: the exact normalizers (token
  // and feasible-utterance counts) scale the gradients in the second pass.
  std::vector<UttState> states;
  states.reserve(batch.size());
  for (const Utterance& utt : batch) {
    const std::vector<int>& tokens = *utt.tokens;
    if (tokens.empty()) {
      stats.infeasible += 1;
      continue;
    }
    UttState st;
    st.utt = &utt;
    st.enc = label_encode(model, tokens, &st.enc_trace);
    const int tt = static_cast<int>(tokens.size());
    st.recon = DenseMatrix(tt, d);
    for (int i = 0; i < tt; ++i) {
      const QuantizeResult& q = st.enc.quantized[i];
      for (int j = 0; j < d; ++j) st.recon.at(i, j) = q.straight_through_output[j];
      st.vq += q.vq_loss;
      for (const LatentSymbol& s : q.symbols) stats.symbol_counts[s.level][s.index] += 1;
    }
    DenseMatrix logits1 = linear_forward(dec, st.recon);
    st.g_logits1 = DenseMatrix(tt, cfg.charset_size);
    for (int i = 0; i < tt; ++i) {
      SoftmaxXent xe = softmax_xent(std::span(logits1.row(i), logits1.cols), tokens[i]);
      st.ce_label += xe.loss;
      for (int c = 0; c < cfg.charset_size; ++c) st.g_logits1.at(i, c) = xe.grad[c];
    }
    stats.tokens += tt;
    stats.sum_ce_label += st.ce_label;
    stats.sum_vq += st.vq;

    if (need_acoustic) {
      st.ac_logits = frame_mlp_forward(ac, *utt.features, &st.ac_trace);
      CtcResult ctc = ctc_loss(st.ac_logits, st.enc.stream, blank);
      if (ctc.feasible) {
        st.feasible = true;
        st.ctc = ctc.loss;
        st.ctc_grad = std::move(ctc.logit_grad);
        stats.sum_ctc += st.ctc;
        stats.feasible += 1;
        stats.tokens_feasible += tt;
        if (cfg.w_acoustic != 0.0) {
          st.align = ctc_align_first_emission(st.ac_logits, st.enc.stream, blank);
          st.mixture_in = DenseMatrix(tt, d);
          st.posteriors.reserve(st.enc.stream.size());
          for (size_t i = 0; i < st.enc.stream.size(); ++i) {
            const int level = st.enc.stream[i] / m;
            std::vector<double> post(st.ac_logits.row(st.align[i]) + level * m,
                                     st.ac_logits.row(st.align[i]) + (level + 1) * m);
            softmax_inplace(post);
            const DenseMatrix& book = *codec.books[level];
            double* dst = st.mixture_in.row(static_cast<int>(i) / n);
            for (int q = 0; q < m; ++q) {
              const double* e = book.row(q);
              for (int j = 0; j < d; ++j) dst[j] += post[q] * e[j];
            }
            st.posteriors.push_back(std::move(post));
          }
          DenseMatrix logits2 = linear_forward(dec, st.mixture_in);
          st.g_logits2 = DenseMatrix(tt, cfg.charset_size);
          for (int i = 0; i < tt; ++i) {
            SoftmaxXent xe = softmax_xent(std::span(logits2.row(i), logits2.cols), tokens[i]);
            st.ce_acoustic += xe.loss;
            for (int c = 0; c < cfg.charset_size; ++c) st.g_logits2.at(i, c) = xe.grad[c];
          }
          stats.sum_ce_acoustic += st.ce_acoustic;
        }
      } else {
        stats.infeasible += 1;
      }
    }
    states.push_back(std::move(st));
  }

  LossBreakdown& loss = stats.loss;
  if (stats.tokens > 0) {
    loss.ce_label = stats.sum_ce_label / static_cast<double>(stats.tokens);
    loss.vq = stats.sum_vq / static_cast<double>(stats.tokens);
  }
  if (stats.tokens_feasible > 0) {
    loss.ce_acoustic = stats.sum_ce_acoustic / static_cast<double>(stats.tokens_feasible);
  }
  if (stats.feasible > 0) loss.ctc = stats.sum_ctc / static_cast<double>(stats.feasible);
  loss.total = cfg.w_label * loss.ce_label + cfg.w_acoustic * loss.ce_acoustic +
               cfg.w_ctc * loss.ctc + cfg.w_vq * loss.vq;
  if (!std::isfinite(loss.total)) {
    std::ostringstream msg;
    msg << "autoencoder: non-finite loss, terms: ce_label=" << loss.ce_label
        << " ce_acoustic=" << loss.ce_acoustic << " ctc=" << loss.ctc << " vq=" << loss.vq;
    throw NumericError(msg.str());
  }

  if (!accumulate) return stats;

  const double s_label = stats.tokens > 0 ? cfg.w_label / stats.tokens : 0.0;
  const double s_vq = stats.tokens > 0 ? cfg.w_vq / stats.tokens : 0.0;
  const double s_acoustic =
      stats.tokens_feasible > 0 ? cfg.w_acoustic / stats.tokens_feasible : 0.0;
  const double s_ctc = stats.feasible > 0 ? cfg.w_ctc / stats.feasible : 0.0;

  std::vector<DenseMatrix*> book_grads(n);
  for (int k = 0; k < n; ++k) book_grads[k] = &model.params.at(book_name(k)).grad;

  for (UttState& st : states) {
    const std::vector<int>& tokens = *st.utt->tokens;
    const int tt = static_cast<int>(tokens.size());

    // Label CE into the decoder, straight-through into the encoder, plus
    // the quantization term into codebooks and commitment.
    DenseMatrix grad_recon(tt, d);
    if (s_label != 0.0) {
      for (int i = 0; i < st.g_logits1.rows * st.g_logits1.cols; ++i) {
        st.g_logits1.data[i] *= s_label;
      }
      linear_backward(model.params, "dec", st.recon, st.g_logits1, &grad_recon);
    }
    if (s_label != 0.0 || s_vq != 0.0) {
      DenseMatrix grad_z(tt, d);
      for (int i = 0; i < tt; ++i) {
        std::vector<double> gz =
            rvq_backward(st.enc.quantized[i], codec, std::span(grad_recon.row(i), d), s_vq,
                         &book_grads);
        for (int j = 0; j < d; ++j) grad_z.at(i, j) = gz[j];
      }
      token_encoder_backward(model.params, "enc", st.enc_trace, grad_z);
    }

    if (!st.feasible) continue;
    DenseMatrix grad_ac(st.ac_logits.rows, st.ac_logits.cols);
    if (s_ctc != 0.0) {
      for (int i = 0; i < grad_ac.rows * grad_ac.cols; ++i) {
        grad_ac.data[i] = s_ctc * st.ctc_grad.data[i];
      }
    }
    if (s_acoustic != 0.0 && !st.posteriors.empty()) {
      // Acoustic CE: decoder grads, then through the mixture into the
      // level slice of the aligned frame's logits. Embeddings stay fixed.
      for (int i = 0; i < st.g_logits2.rows * st.g_logits2.cols; ++i) {
        st.g_logits2.data[i] *= s_acoustic;
      }
      DenseMatrix grad_mix(tt, d);
      linear_backward(model.params, "dec", st.mixture_in, st.g_logits2, &grad_mix);
      std::vector<double> dpost(m);
      for (size_t i = 0; i < st.enc.stream.size(); ++i) {
        const int level = st.enc.stream[i] / m;
        const double* gm = grad_mix.row(static_cast<int>(i) / n);
        const DenseMatrix& book = *codec.books[level];
        const std::vector<double>& post = st.posteriors[i];
        double dot = 0.0;
        for (int q = 0; q < m; ++q) {
          const double* e = book.row(q);
          double acc = 0.0;
          for (int j = 0; j < d; ++j) acc += gm[j] * e[j];
          dpost[q] = acc;
          dot += post[q] * acc;
        }
        double* row = grad_ac.row(st.align[i]) + level * m;
        for (int q = 0; q < m; ++q) row[q] += post[q] * (dpost[q] - dot);
      }
    }
    if (s_ctc != 0.0 || s_acoustic != 0.0) {
      frame_mlp_backward(model.params, "ac", ac.spec, st.ac_trace, grad_ac);
    }
  }

  return stats;
}

StepStats train_step(AutoEncoderModel& model, const std::vector<Utterance>& batch) {
  model.params.zero_grad();
  StepStats stats = batch_loss(model, batch, true);
  optimizer_step(model.params, model.config.optimizer);
  return stats;
}

namespace {

// Lloyd iterations per level on the residuals of the previous ones; rows
// with no data keep their seeded values.
void kmeans_warm_start(AutoEncoderModel& model, const std::vector<std::vector<int>>& corpus) {
  const AutoEncoderConfig& cfg = model.config;
  const int d = cfg.dim;
  const int m = cfg.codes_per_level;
  std::vector<std::vector<double>> points;
  for (const auto& tokens : corpus) {
    if (tokens.empty()) continue;
    DenseMatrix z = token_encoder_forward(model.encoder_view(), tokens, nullptr);
    for (int i = 0; i < z.rows; ++i) points.emplace_back(z.row(i), z.row(i) + d);
  }
  if (points.empty()) return;
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  for (int k = 0; k < cfg.levels; ++k) {
    DenseMatrix& book = model.params.at(book_name(k)).value;
    for (int r = 0; r < m; ++r) {
      const std::vector<double>& p = points[rng.uniform_int(static_cast<int>(points.size()))];
      for (int j = 0; j < d; ++j) book.at(r, j) = p[j];
    }
    std::vector<int> assign(points.size(), 0);
    for (int iter = 0; iter < 10; ++iter) {
      for (size_t i = 0; i < points.size(); ++i) {
        assign[i] = vq_quantize(points[i], book, k, 0.0).symbol.index;
      }
      DenseMatrix sums(m, d);
      std::vector<long> counts(m, 0);
      for (size_t i = 0; i < points.size(); ++i) {
        double* srow = sums.row(assign[i]);
        for (int j = 0; j < d; ++j) srow[j] += points[i][j];
        counts[assign[i]] += 1;
      }
      for (int r = 0; r < m; ++r) {
        if (counts[r] == 0) continue;
        for (int j = 0; j < d; ++j) book.at(r, j) = sums.at(r, j) / counts[r];
      }
    }
    for (size_t i = 0; i < points.size(); ++i) {
      const double* e = book.row(assign[i]);
      for (int j = 0; j < d; ++j) points[i][j] -= e[j];
    }
  }
}

}  // namespace

AutoEncoderModel train_autoencoder(const std::vector<std::vector<int>>& corpus,
                                   const std::vector<DenseMatrix>& features,
                                   const AutoEncoderConfig& config, TrainReport* report) {
  if (corpus.size() != features.size()) {
    throw DataError("train_autoencoder: " + std::to_string(corpus.size()) + " texts vs " +
                    std::to_string(features.size()) + " feature sequences");
  }
  AutoEncoderModel model = make_autoencoder(config);
  if (config.kmeans_init) kmeans_warm_start(model, corpus);

  const int n = config.levels;
  const int m = config.codes_per_level;
  Rng shuffle_rng(config.seed ^ 0xda3e39cb94b95bdbull);
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<int>> epochs_unused(n, std::vector<int>(m, 0));
  std::vector<std::vector<double>> recent_z;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);
    }
    StepStats epoch_sum;
    epoch_sum.symbol_counts.assign(n, std::vector<long>(m, 0));
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<Utterance> batch;
      for (size_t i = start; i < order.size() && i < start + config.batch_size; ++i) {
        batch.push_back({&corpus[order[i]], &features[order[i]]});
      }
      StepStats s = train_step(model, batch);
      epoch_sum.sum_ce_label += s.sum_ce_label;
      epoch_sum.sum_ce_acoustic += s.sum_ce_acoustic;
      epoch_sum.sum_ctc += s.sum_ctc;
      epoch_sum.sum_vq += s.sum_vq;
      epoch_sum.tokens += s.tokens;
      epoch_sum.tokens_feasible += s.tokens_feasible;
      epoch_sum.feasible += s.feasible;
      epoch_sum.infeasible += s.infeasible;
      for (int k = 0; k < n; ++k) {
        for (int r = 0; r < m; ++r) epoch_sum.symbol_counts[k][r] += s.symbol_counts[k][r];
      }
    }

    EpochReport er;
    if (epoch_sum.tokens > 0) {
      er.loss.ce_label = epoch_sum.sum_ce_label / epoch_sum.tokens;
      er.loss.vq = epoch_sum.sum_vq / epoch_sum.tokens;
    }
    if (epoch_sum.tokens_feasible > 0) {
      er.loss.ce_acoustic = epoch_sum.sum_ce_acoustic / epoch_sum.tokens_feasible;
    }
    if (epoch_sum.feasible > 0) er.loss.ctc = epoch_sum.sum_ctc / epoch_sum.feasible;
    er.loss.total = config.w_label * er.loss.ce_label +
                    config.w_acoustic * er.loss.ce_acoustic + config.w_ctc * er.loss.ctc +
                    config.w_vq * er.loss.vq;
    er.utilization = utilization_stats(epoch_sum.symbol_counts);
    er.infeasible = epoch_sum.infeasible;

    for (int k = 0; k < n; ++k) {
      for (int r = 0; r < m; ++r) {
        if (epoch_sum.symbol_counts[k][r] == 0) {
          epochs_unused[k][r] += 1;
        } else {
          epochs_unused[k][r] = 0;
        }
      }
    }
    if (config.restart_dead_codes) {
      recent_z.clear();
      for (const auto& tokens : corpus) {
        if (tokens.empty() || recent_z.size() >= 512) continue;
        DenseMatrix z = token_encoder_forward(model.encoder_view(), tokens, nullptr);
        for (int i = 0; i < z.rows && recent_z.size() < 512; ++i) {
          recent_z.emplace_back(z.row(i), z.row(i) + config.dim);
        }
      }
      RvqCodec snapshot;
      snapshot.beta = config.beta;
      for (int k = 0; k < n; ++k) {
        Codebook book;
        book.level = k;
        book.embeddings = model.params.at(book_name(k)).value;
        snapshot.books.push_back(std::move(book));
      }
      er.restarted_codes =
          dead_code_restart(snapshot, epochs_unused, recent_z, config.dead_code_epochs,
                            config.seed + epoch, true);
      if (er.restarted_codes > 0) {
        for (int k = 0; k < n; ++k) {
          Tensor& book = model.params.at(book_name(k));
          for (int r = 0; r < m; ++r) {
            if (epochs_unused[k][r] < config.dead_code_epochs) continue;
            for (int j = 0; j < config.dim; ++j) {
              book.value.at(r, j) = snapshot.books[k].embeddings.at(r, j);
              book.moment1.at(r, j) = 0.0;
              book.moment2.at(r, j) = 0.0;
            }
            epochs_unused[k][r] = 0;
          }
        }
      }
    }

    const bool stop = config.stop_ce_label > 0.0 && epoch_sum.tokens > 0 &&
                      er.loss.ce_label < config.stop_ce_label;
    if (report) report->epochs.push_back(std::move(er));
    if (stop) {
      if (report) report->stopped_early = true;
      break;
    }
  }
  return model;
}

}  // namespace bytevq
