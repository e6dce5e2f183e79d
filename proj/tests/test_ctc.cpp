#include <cmath>
#include <vector>

#include "doctest.h"

#include "bytevq/ctc.hpp"
#include "bytevq/numerics.hpp"

using namespace bytevq;

namespace {

// Oracle: sum the probability of every frame-level path whose collapse
// (merge repeats, drop blanks) equals the target. Exponential in T.
double brute_force_ctc_loss(const DenseMatrix& logits, const std::vector<int>& targets,
                            int blank) {
  const int t_max = logits.rows;
  const int k = logits.cols;
  DenseMatrix probs = logits;
  for (int t = 0; t < t_max; ++t) softmax_inplace(std::span(probs.row(t), k));

  double total = 0.0;
  std::vector<int> path(t_max, 0);
  for (long code = 0; code < static_cast<long>(std::pow(k, t_max)); ++code) {
    long rest = code;
    for (int t = 0; t < t_max; ++t) {
      path[t] = static_cast<int>(rest % k);
      rest /= k;
    }
    std::vector<int> collapsed;
    for (int t = 0; t < t_max; ++t) {
      if (t > 0 && path[t] == path[t - 1]) continue;
      if (path[t] != blank) collapsed.push_back(path[t]);
    }
    // Repeats separated by blank survive: collapse merges only adjacent
    // frame repeats before removing blanks, which the loop above does.
    if (collapsed != targets) continue;
    double p = 1.0;
    for (int t = 0; t < t_max; ++t) p *= probs.at(t, path[t]);
    total += p;
  }
  return -std::log(total);
}

DenseMatrix random_logits(Rng& rng, int t, int k, double scale = 1.5) {
  DenseMatrix m(t, k);
  for (double& v : m.data) v = scale * rng.gaussian();
  return m;
}

}  // namespace

TEST_CASE("two frames, one symbol, uniform probabilities") {
  // vocab {a, blank}, all probabilities 1/2: P = P(aa)+P(a-)+P(-a) = 3/4.
  DenseMatrix logits(2, 2);
  CtcResult r = ctc_loss(logits, {0}, 1);
  CHECK(r.feasible);
  CHECK(r.loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(0.2877).epsilon(1e-3));
}

TEST_CASE("three frames, two symbols, random logits vs exhaustive enumeration") {
  Rng rng(808);
  for (int iter = 0; iter < 20; ++iter) {
    DenseMatrix logits = random_logits(rng, 3, 3);
    const std::vector<int> targets = {0, 1};
    CtcResult r = ctc_loss(logits, targets, 2);
    CHECK(r.loss == doctest::Approx(brute_force_ctc_loss(logits, targets, 2)).epsilon(1e-9));
  }
}

TEST_CASE("forward-backward equals brute force on random small instances") {
  Rng rng(909);
  for (int iter = 0; iter < 60; ++iter) {
    const int vocab = 1 + rng.uniform_int(3);  // 1..3 real symbols
    const int k = vocab + 1;
    const int blank = vocab;
    const int t = 1 + rng.uniform_int(6);
    const int len = 1 + rng.uniform_int(3);
    std::vector<int> targets(len);
    for (int& s : targets) s = rng.uniform_int(vocab);
    DenseMatrix logits = random_logits(rng, t, k);
    CtcResult r = ctc_loss(logits, targets, blank);
    if (!r.feasible) {
      CHECK(t < ctc_min_frames(targets));
      continue;
    }
    const double oracle = brute_force_ctc_loss(logits, targets, blank);
    CHECK(std::abs(r.loss - oracle) < 1e-6);
  }
}

TEST_CASE("logit gradients match central differences") {
  Rng rng(313);
  for (int iter = 0; iter < 10; ++iter) {
    const int t = 2 + rng.uniform_int(3);
    const int k = 3;
    std::vector<int> targets = {0, 1};
    DenseMatrix logits = random_logits(rng, t, k);
    CtcResult r = ctc_loss(logits, targets, 2);
    REQUIRE(r.feasible);
    const double eps = 1e-4;
    for (int i = 0; i < logits.size(); ++i) {
      DenseMatrix lp = logits;
      DenseMatrix lm = logits;
      lp.data[i] += eps;
      lm.data[i] -= eps;
      const double fd =
          (ctc_loss(lp, targets, 2).loss - ctc_loss(lm, targets, 2).loss) / (2.0 * eps);
      const double denom = std::max({std::abs(fd), std::abs(r.logit_grad.data[i]), 1e-8});
      CHECK(std::abs(r.logit_grad.data[i] - fd) / denom < 1e-3);
    }
  }
}

TEST_CASE("empty targets are rejected; trainers skip empty utterances upstream") {
  DenseMatrix logits(3, 2);
  CHECK_THROWS_AS(ctc_loss(logits, {}, 1), InputError);
}

TEST_CASE("minimum frame counts account for adjacent repeats") {
  CHECK(ctc_min_frames({}) == 0);
  CHECK(ctc_min_frames({1}) == 1);
  CHECK(ctc_min_frames({1, 2}) == 2);
  CHECK(ctc_min_frames({1, 1}) == 3);
  CHECK(ctc_min_frames({1, 1, 1}) == 5);
  CHECK(ctc_min_frames({1, 2, 2, 1}) == 5);
}

TEST_CASE("infeasible lengths are flagged with zero gradients") {
  DenseMatrix logits(1, 3);
  CtcResult r = ctc_loss(logits, {0, 1}, 2);
  CHECK_FALSE(r.feasible);
  CHECK(std::isinf(r.loss));
  for (double g : r.logit_grad.data) CHECK(g == 0.0);
}

TEST_CASE("repeated symbols need the separating blank") {
  // T=2 cannot hold [a, a]; T=3 can, exactly as path (a, -, a).
  DenseMatrix logits(2, 2);
  CHECK_FALSE(ctc_loss(logits, {0, 0}, 1).feasible);
  DenseMatrix logits3(3, 2);
  CtcResult r = ctc_loss(logits3, {0, 0}, 1);
  CHECK(r.feasible);
  CHECK(r.loss == doctest::Approx(-std::log(0.125)).epsilon(1e-9));
}

TEST_CASE("first-emission alignment on a three-frame fixture") {
  // Frame 0 favors symbol 0, frame 1 the blank, frame 2 symbol 1. The best
  // path is (0, -, 1), so the symbols are first emitted at frames 0 and 2.
  DenseMatrix logits(3, 3);
  logits.at(0, 0) = 5.0;
  logits.at(1, 2) = 5.0;
  logits.at(2, 1) = 5.0;
  const std::vector<int> align = ctc_align_first_emission(logits, {0, 1}, 2);
  REQUIRE(align.size() == 2);
  CHECK(align[0] == 0);
  CHECK(align[1] == 2);
}

TEST_CASE("alignment ties prefer the earlier emission") {
  // Uniform logits: every feasible path scores the same; the contract picks
  // the alignment that enters symbol states as early as possible.
  DenseMatrix logits(3, 2);
  const std::vector<int> align = ctc_align_first_emission(logits, {0}, 1);
  REQUIRE(align.size() == 1);
  CHECK(align[0] == 0);
}

TEST_CASE("alignment of an infeasible instance throws") {
  DenseMatrix logits(1, 3);
  CHECK_THROWS_AS(ctc_align_first_emission(logits, {0, 1}, 2), InputError);
}

TEST_CASE("loss rejects malformed inputs") {
  DenseMatrix logits(2, 3);
  CHECK_THROWS_AS(ctc_loss(logits, {3}, 2), InputError);   // symbol out of range
  CHECK_THROWS_AS(ctc_loss(logits, {2}, 2), InputError);   // blank in the target
  CHECK_THROWS_AS(ctc_loss(logits, {0}, 5), InputError);   // blank outside columns
}
