#include "bytevq/quantizer.hpp"

#include <cmath>

namespace bytevq {

RvqCodec make_rvq_codec(int levels, int codes_per_level, int dim, double beta, uint64_t seed) {
  if (levels < 1) throw ConfigError("rvq codec: need at least one codebook");
  if (codes_per_level < 1 || dim < 1) throw ConfigError("rvq codec: M and D must be positive");
  if (beta < 0.0) throw ConfigError("rvq codec: beta must be >= 0");
  RvqCodec codec;
  codec.beta = beta;
  Rng rng(seed);
  for (int k = 0; k < levels; ++k) {
    Codebook book;
    book.level = k;
    book.embeddings = DenseMatrix(codes_per_level, dim);
    fill_gaussian(book.embeddings, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
    codec.books.push_back(std::move(book));
  }
  return codec;
}

RvqView view_of(const RvqCodec& codec) {
  RvqView view;
  view.beta = codec.beta;
  for (const Codebook& b : codec.books) view.books.push_back(&b.embeddings);
  return view;
}

VqPick vq_quantize(std::span<const double> z, const DenseMatrix& codebook, int level,
                   double beta) {
  const int m = codebook.rows;
  const int d = codebook.cols;
  if (static_cast<int>(z.size()) != d) throw InputError("vq_quantize: dimension mismatch");
  for (double v : z) {
    if (!std::isfinite(v)) throw InputError("vq_quantize: non-finite input vector");
  }

  int best = 0;
  double best_dist = 0.0;
  for (int r = 0; r < m; ++r) {
    const double* e = codebook.row(r);
    double dist = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = z[j] - e[j];
      dist += diff * diff;
    }
    if (r == 0 || dist < best_dist) {
      best = r;
      best_dist = dist;
    }
  }

  VqPick pick;
  pick.symbol = {level, best};
  pick.embedding.assign(codebook.row(best), codebook.row(best) + d);
  pick.loss = (1.0 + beta) * best_dist;
  return pick;
}

QuantizeResult rvq_quantize(std::span<const double> z, const RvqView& codec) {
  const int d = codec.dim();
  if (static_cast<int>(z.size()) != d) throw InputError("rvq_quantize: dimension mismatch");
  QuantizeResult result;
  result.reconstruction.assign(d, 0.0);
  std::vector<double> residual(z.begin(), z.end());
  for (int k = 0; k < codec.levels(); ++k) {
    result.level_inputs.push_back(residual);
    VqPick pick = vq_quantize(residual, *codec.books[k], k, codec.beta);
    result.vq_loss += pick.loss;
    result.symbols.push_back(pick.symbol);
    for (int j = 0; j < d; ++j) {
      result.reconstruction[j] += pick.embedding[j];
      residual[j] -= pick.embedding[j];
    }
  }
  result.straight_through_output = result.reconstruction;
  return result;
}

QuantizeResult rvq_quantize(std::span<const double> z, const RvqCodec& codec) {
  return rvq_quantize(z, view_of(codec));
}

std::vector<double> rvq_backward(const QuantizeResult& result, const RvqView& codec,
                                 std::span<const double> downstream_grad, double vq_weight,
                                 std::vector<DenseMatrix*>* book_grads) {
  const int d = codec.dim();
  std::vector<double> grad_z(d, 0.0);
  if (!downstream_grad.empty()) {
    if (static_cast<int>(downstream_grad.size()) != d) {
      throw InputError("rvq_backward: downstream gradient dimension mismatch");
    }
    // Straight-through: the downstream gradient at the reconstruction is
    // copied to z component-wise, exactly.
    for (int j = 0; j < d; ++j) grad_z[j] = downstream_grad[j];
  }
  if (vq_weight != 0.0) {
    for (int k = 0; k < codec.levels(); ++k) {
      const std::vector<double>& r = result.level_inputs[k];
      const int idx = result.symbols[k].index;
      const double* e = codec.books[k]->row(idx);
      double* row_grad =
          book_grads ? (*book_grads)[k]->row(idx) : nullptr;
      for (int j = 0; j < d; ++j) {
        const double diff = r[j] - e[j];
        grad_z[j] += vq_weight * 2.0 * codec.beta * diff;
        if (row_grad) row_grad[j] += vq_weight * 2.0 * (e[j] - r[j]);
      }
    }
  }
  return grad_z;
}

double vq_codebook_term(std::span<const double> z, std::span<const double> e,
                        std::span<double> grad_e) {
  double loss = 0.0;
  for (size_t j = 0; j < z.size(); ++j) {
    const double diff = z[j] - e[j];
    loss += diff * diff;
    if (!grad_e.empty()) grad_e[j] += 2.0 * (e[j] - z[j]);
  }
  return loss;
}

double vq_commitment_term(std::span<const double> z, std::span<const double> e, double beta,
                          std::span<double> grad_z) {
  double loss = 0.0;
  for (size_t j = 0; j < z.size(); ++j) {
    const double diff = z[j] - e[j];
    loss += beta * diff * diff;
    if (!grad_z.empty()) grad_z[j] += 2.0 * beta * diff;
  }
  return loss;
}

std::vector<LevelUtilization> utilization_stats(
    const std::vector<std::vector<long>>& histogram_per_level) {
  std::vector<LevelUtilization> stats;
  stats.reserve(histogram_per_level.size());
  for (const auto& hist : histogram_per_level) {
    LevelUtilization u;
    long total = 0;
    for (long c : hist) {
      if (c < 0) throw InputError("utilization_stats: negative count");
      if (c > 0) u.active += 1;
      total += c;
    }
    if (total > 0) {
      double entropy = 0.0;
      for (long c : hist) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        entropy -= p * std::log(p);
      }
      u.perplexity = std::exp(entropy);
      u.defined = true;
    }
    stats.push_back(u);
  }
  return stats;
}

int dead_code_restart(RvqCodec& codec, const std::vector<std::vector<int>>& epochs_unused,
                      const std::vector<std::vector<double>>& recent_inputs, int threshold,
                      uint64_t seed, bool enabled) {
  if (!enabled) return 0;
  if (recent_inputs.empty()) return 0;
  Rng rng(seed);
  int restarted = 0;
  for (int k = 0; k < codec.levels(); ++k) {
    DenseMatrix& book = codec.books[k].embeddings;
    for (int r = 0; r < book.rows; ++r) {
      if (epochs_unused[k][r] < threshold) continue;
      const std::vector<double>& pick = recent_inputs[rng.uniform_int(
          static_cast<int>(recent_inputs.size()))];
      if (static_cast<int>(pick.size()) != book.cols) {
        throw InputError("dead_code_restart: recent input dimension mismatch");
      }
      for (int j = 0; j < book.cols; ++j) book.at(r, j) = pick[j];
      restarted += 1;
    }
  }
  return restarted;
}

}  // namespace bytevq
