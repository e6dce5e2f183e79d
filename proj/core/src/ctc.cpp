#include "bytevq/ctc.hpp"

#include <cmath>
#include <limits>

namespace bytevq {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Blank-augmented state s -> symbol id; even states are blanks.
inline int state_label(const std::vector<int>& targets, int s, int blank) {
  return (s % 2 == 0) ? blank : targets[s / 2];
}

DenseMatrix log_softmax_rows(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows, logits.cols);
  for (int t = 0; t < logits.rows; ++t) {
    const double* in = logits.row(t);
    double* o = out.row(t);
    double mx = in[0];
    for (int k = 1; k < logits.cols; ++k) mx = std::max(mx, in[k]);
    double sum = 0.0;
    for (int k = 0; k < logits.cols; ++k) sum += std::exp(in[k] - mx);
    const double lse = mx + std::log(sum);
    for (int k = 0; k < logits.cols; ++k) o[k] = in[k] - lse;
  }
  return out;
}

}  // namespace

int ctc_min_frames(const std::vector<int>& targets) {
  int frames = static_cast<int>(targets.size());
  for (size_t i = 0; i + 1 < targets.size(); ++i) {
    if (targets[i] == targets[i + 1]) frames += 1;
  }
  return frames;
}

CtcResult ctc_loss(const DenseMatrix& logits, const std::vector<int>& targets, int blank) {
  const int T = logits.rows;
  const int K = logits.cols;
  if (targets.empty()) throw InputError("ctc_loss: targets must be non-empty");
  for (int y : targets) {
    if (y < 0 || y >= K || y == blank) {
      throw InputError("ctc_loss: target symbol " + std::to_string(y) + " out of range");
    }
  }
  if (blank < 0 || blank >= K) throw InputError("ctc_loss: blank index out of range");

  CtcResult result;
  if (T < ctc_min_frames(targets)) {
    result.loss = std::numeric_limits<double>::infinity();
    result.feasible = false;
    result.logit_grad = DenseMatrix(T, K);
    return result;
  }

  const int L = static_cast<int>(targets.size());
  const int S = 2 * L + 1;
  const DenseMatrix logp = log_softmax_rows(logits);

  auto allow_skip = [&](int s) {
    // s-2 -> s jump allowed only into a symbol state whose symbol differs
    // from the symbol two states back.
    return s >= 2 && s % 2 == 1 && targets[s / 2] != targets[(s - 2) / 2];
  };

  DenseMatrix alpha(T, S, kNegInf);
  alpha.at(0, 0) = logp.at(0, blank);
  if (S > 1) alpha.at(0, 1) = logp.at(0, state_label(targets, 1, blank));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double acc = alpha.at(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha.at(t - 1, s - 1));
      if (allow_skip(s)) acc = log_add(acc, alpha.at(t - 1, s - 2));
      if (acc == kNegInf) continue;
      alpha.at(t, s) = acc + logp.at(t, state_label(targets, s, blank));
    }
  }

  double log_p = alpha.at(T - 1, S - 1);
  if (S > 1) log_p = log_add(log_p, alpha.at(T - 1, S - 2));
  if (log_p == kNegInf) {
    // Feasible by length but zero-probability in floating point; treat as
    // infeasible so callers can skip.
    result.loss = std::numeric_limits<double>::infinity();
    result.feasible = false;
    result.logit_grad = DenseMatrix(T, K);
    return result;
  }

  DenseMatrix beta(T, S, kNegInf);
  beta.at(T - 1, S - 1) = logp.at(T - 1, blank);
  if (S > 1) beta.at(T - 1, S - 2) = logp.at(T - 1, state_label(targets, S - 2, blank));
  for (int t = T - 2; t >= 0; --t) {
    for (int s = S - 1; s >= 0; --s) {
      double acc = beta.at(t + 1, s);
      if (s + 1 < S) acc = log_add(acc, beta.at(t + 1, s + 1));
      if (s + 2 < S && allow_skip(s + 2)) acc = log_add(acc, beta.at(t + 1, s + 2));
      if (acc == kNegInf) continue;
      beta.at(t, s) = acc + logp.at(t, state_label(targets, s, blank));
    }
  }

  result.loss = -log_p;
  result.logit_grad = DenseMatrix(T, K);
  std::vector<double> label_sum(K);
  for (int t = 0; t < T; ++t) {
    std::fill(label_sum.begin(), label_sum.end(), kNegInf);
    for (int s = 0; s < S; ++s) {
      const double ab = alpha.at(t, s) + beta.at(t, s);
      if (ab == kNegInf) continue;
      const int k = state_label(targets, s, blank);
      label_sum[k] = log_add(label_sum[k], ab);
    }
    double* g = result.logit_grad.row(t);
    const double* lp = logp.row(t);
    for (int k = 0; k < K; ++k) {
      // alpha and beta both include the frame-t emission, divide one out.
      const double posterior =
          label_sum[k] == kNegInf ? 0.0 : std::exp(label_sum[k] - lp[k] - log_p);
      g[k] = std::exp(lp[k]) - posterior;
    }
  }
  return result;
}

std::vector<int> ctc_align_first_emission(const DenseMatrix& logits,
                                          const std::vector<int>& targets, int blank) {
  const int T = logits.rows;
  if (targets.empty()) throw InputError("ctc_align: targets must be non-empty");
  if (T < ctc_min_frames(targets)) {
    throw InputError("ctc_align: " + std::to_string(T) + " frames cannot align " +
                     std::to_string(targets.size()) + " targets");
  }
  const int L = static_cast<int>(targets.size());
  const int S = 2 * L + 1;
  const DenseMatrix logp = log_softmax_rows(logits);

  auto allow_skip = [&](int s) {
    return s >= 2 && s % 2 == 1 && targets[s / 2] != targets[(s - 2) / 2];
  };

  DenseMatrix score(T, S, kNegInf);
  DenseMatrix from(T, S, -1.0);
  score.at(0, 0) = logp.at(0, blank);
  if (S > 1) score.at(0, 1) = logp.at(0, state_label(targets, 1, blank));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      // Predecessors in preference order: staying at s keeps first-emission
      // times earlier, so on ties the larger predecessor index wins.
      double best = score.at(t - 1, s);
      int arg = s;
      if (s >= 1 && score.at(t - 1, s - 1) > best) {
        best = score.at(t - 1, s - 1);
        arg = s - 1;
      }
      if (allow_skip(s) && score.at(t - 1, s - 2) > best) {
        best = score.at(t - 1, s - 2);
        arg = s - 2;
      }
      if (best == kNegInf) continue;
      score.at(t, s) = best + logp.at(t, state_label(targets, s, blank));
      from.at(t, s) = arg;
    }
  }

  // Final state: prefer the trailing blank on ties (the symbol finished
  // earlier).
  int state;
  if (S > 1 && score.at(T - 1, S - 2) > score.at(T - 1, S - 1)) {
    state = S - 2;
  } else {
    state = S - 1;
  }
  if (score.at(T - 1, state) == kNegInf) {
    throw InputError("ctc_align: no feasible path");
  }

  std::vector<int> path(T);
  for (int t = T - 1; t >= 0; --t) {
    path[t] = state;
    if (t > 0) state = static_cast<int>(from.at(t, state));
  }

  std::vector<int> first_emission(L, -1);
  for (int t = 0; t < T; ++t) {
    const int s = path[t];
    if (s % 2 == 1 && first_emission[s / 2] < 0) first_emission[s / 2] = t;
  }
  for (int i = 0; i < L; ++i) {
    if (first_emission[i] < 0) throw InputError("ctc_align: symbol never emitted");
  }
  return first_emission;
}

}  // namespace bytevq
