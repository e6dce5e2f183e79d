#pragma once

#include <vector>

#include "bytevq/numerics.hpp"

namespace bytevq {

struct CtcResult {
  double loss = 0.0;
  DenseMatrix logit_grad;  // T x K, zero when infeasible
  bool feasible = true;    // false when T is too short for the target
};

// CTC negative log likelihood of `targets` under per-frame logits (T x K
// with the blank at index `blank`), computed by the log-space
// forward-backward recursion over the blank-augmented target lattice.
// The exact logit gradient is softmax(logits) minus the state posterior.
// Gradients never flow into the targets. Infeasible lengths (T shorter than
// the minimum alignable length) return loss = +inf with feasible = false so
// trainers can skip the utterance.
CtcResult ctc_loss(const DenseMatrix& logits, const std::vector<int>& targets, int blank);

// Frames at which each target symbol is first emitted on the Viterbi-best
// CTC path. Score ties prefer the path that enters symbol states earlier.
// Throws InputError when no alignment exists.
std::vector<int> ctc_align_first_emission(const DenseMatrix& logits,
                                          const std::vector<int>& targets, int blank);

// Minimum number of frames needed to align `targets` (adjacent repeats force
// a separating blank).
int ctc_min_frames(const std::vector<int>& targets);

}  // namespace bytevq
