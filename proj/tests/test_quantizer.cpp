#include <cmath>
#include <vector>

#include "doctest.h"

#include "bytevq/numerics.hpp"
#include "bytevq/quantizer.hpp"

using namespace bytevq;

namespace {

RvqCodec two_level_fixture() {
  RvqCodec codec;
  codec.beta = 0.25;
  Codebook b0;
  b0.level = 0;
  b0.embeddings = DenseMatrix(2, 2);
  b0.embeddings.at(0, 0) = 1.0;
  b0.embeddings.at(1, 0) = -1.0;
  Codebook b1;
  b1.level = 1;
  b1.embeddings = DenseMatrix(2, 2);
  b1.embeddings.at(0, 0) = 0.5;
  codec.books = {std::move(b0), std::move(b1)};
  return codec;
}

}  // namespace

TEST_CASE("single level pick: z=[1,0] against rows [0,0] and [3,0]") {
  DenseMatrix book(2, 2);
  book.at(1, 0) = 3.0;
  const std::vector<double> z = {1.0, 0.0};
  VqPick pick = vq_quantize(z, book, 0, 0.25);
  CHECK(pick.symbol.level == 0);
  CHECK(pick.symbol.index == 0);  // distance 1 beats distance 4
  CHECK(pick.embedding == std::vector<double>{0.0, 0.0});
  // (1 + beta) * ||z - e||^2 = 1.25 * 1.
  CHECK(pick.loss == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("distance ties go to the lowest index") {
  DenseMatrix book(3, 1);
  book.at(0, 0) = 2.0;
  book.at(1, 0) = 0.0;
  book.at(2, 0) = 2.0;
  const std::vector<double> z = {1.0};
  CHECK(vq_quantize(z, book, 0, 0.25).symbol.index == 0);
}

TEST_CASE("two-level residual walk: z=[1.5,0]") {
  RvqCodec codec = two_level_fixture();
  const std::vector<double> z = {1.5, 0.0};
  QuantizeResult q = rvq_quantize(z, codec);
  REQUIRE(q.symbols.size() == 2);
  CHECK(q.symbols[0].level == 0);
  CHECK(q.symbols[0].index == 0);  // [1,0] is nearer than [-1,0]
  CHECK(q.symbols[1].level == 1);
  CHECK(q.symbols[1].index == 0);  // residual [0.5,0] matches exactly
  CHECK(q.reconstruction == std::vector<double>{1.5, 0.0});
  CHECK(q.level_inputs[0] == std::vector<double>{1.5, 0.0});
  CHECK(q.level_inputs[1] == std::vector<double>{0.5, 0.0});
  // Level 0 contributes (1+beta)*0.25, level 1 is an exact match.
  CHECK(q.vq_loss == doctest::Approx(1.25 * 0.25).epsilon(1e-12));
}

TEST_CASE("symbol ids carry the level") {
  CHECK(symbol_id({0, 3}, 16) == 3);
  CHECK(symbol_id({2, 5}, 16) == 37);
  const LatentSymbol s = symbol_from_id(37, 16);
  CHECK(s.level == 2);
  CHECK(s.index == 5);
}

TEST_CASE("nearest neighbor matches exhaustive argmin") {
  Rng rng(404);
  for (int iter = 0; iter < 200; ++iter) {
    const int m = 1 + rng.uniform_int(12);
    const int d = 1 + rng.uniform_int(5);
    DenseMatrix book(m, d);
    fill_gaussian(book, rng, 1.0);
    std::vector<double> z(d);
    for (double& v : z) v = rng.gaussian();
    int best = 0;
    double best_dist = 0.0;
    for (int r = 0; r < m; ++r) {
      double dist = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = z[j] - book.at(r, j);
        dist += diff * diff;
      }
      if (r == 0 || dist < best_dist) {
        best = r;
        best_dist = dist;
      }
    }
    CHECK(vq_quantize(z, book, 0, 0.25).symbol.index == best);
  }
}

TEST_CASE("straight-through backward copies the downstream gradient exactly") {
  RvqCodec codec = two_level_fixture();
  const std::vector<double> z = {0.7, -0.4};
  QuantizeResult q = rvq_quantize(z, view_of(codec));
  const std::vector<double> downstream = {3.25, -1.75};
  std::vector<double> gz = rvq_backward(q, view_of(codec), downstream, 0.0, nullptr);
  CHECK(gz == downstream);  // bitwise: the copy must be exact
  CHECK(q.straight_through_output == q.reconstruction);
}

TEST_CASE("codebook term gradient is 2(e - z) and commitment is 2 beta (z - e)") {
  const std::vector<double> z = {1.0, 2.0};
  const std::vector<double> e = {0.25, -1.0};
  std::vector<double> ge(2, 0.0);
  const double t1 = vq_codebook_term(z, e, ge);
  CHECK(t1 == doctest::Approx(0.5625 + 9.0).epsilon(1e-12));
  CHECK(ge[0] == doctest::Approx(2.0 * (0.25 - 1.0)).epsilon(1e-12));
  CHECK(ge[1] == doctest::Approx(2.0 * (-1.0 - 2.0)).epsilon(1e-12));
  std::vector<double> gz(2, 0.0);
  const double beta = 0.25;
  const double t2 = vq_commitment_term(z, e, beta, gz);
  CHECK(t2 == doctest::Approx(beta * (0.5625 + 9.0)).epsilon(1e-12));
  CHECK(gz[0] == doctest::Approx(2.0 * beta * (1.0 - 0.25)).epsilon(1e-12));
  CHECK(gz[1] == doctest::Approx(2.0 * beta * (2.0 + 1.0)).epsilon(1e-12));
}

TEST_CASE("term gradients agree with central differences at a fixed assignment") {
  Rng rng(555);
  const int d = 4;
  std::vector<double> z(d);
  std::vector<double> e(d);
  for (double& v : z) v = rng.gaussian();
  for (double& v : e) v = rng.gaussian();
  const double eps = 1e-4;

  std::vector<double> ge(d, 0.0);
  vq_codebook_term(z, e, ge);
  for (int j = 0; j < d; ++j) {
    std::vector<double> ep = e;
    std::vector<double> em = e;
    ep[j] += eps;
    em[j] -= eps;
    std::vector<double> scratch(d);
    const double fd = (vq_codebook_term(z, ep, scratch) - vq_codebook_term(z, em, scratch)) /
                      (2.0 * eps);
    CHECK(ge[j] == doctest::Approx(fd).epsilon(1e-3));
  }

  std::vector<double> gz(d, 0.0);
  vq_commitment_term(z, e, 0.25, gz);
  for (int j = 0; j < d; ++j) {
    std::vector<double> zp = z;
    std::vector<double> zm = z;
    zp[j] += eps;
    zm[j] -= eps;
    std::vector<double> scratch(d);
    const double fd = (vq_commitment_term(zp, e, 0.25, scratch) -
                       vq_commitment_term(zm, e, 0.25, scratch)) /
                      (2.0 * eps);
    CHECK(gz[j] == doctest::Approx(fd).epsilon(1e-3));
  }
}

TEST_CASE("rvq backward accumulates codebook gradients per level") {
  RvqCodec codec = two_level_fixture();
  const std::vector<double> z = {1.5, 0.0};
  QuantizeResult q = rvq_quantize(z, view_of(codec));
  DenseMatrix g0(2, 2);
  DenseMatrix g1(2, 2);
  std::vector<DenseMatrix*> grads = {&g0, &g1};
  const std::vector<double> downstream = {0.0, 0.0};
  std::vector<double> gz = rvq_backward(q, view_of(codec), downstream, 1.0, &grads);
  // Level 0 row 0: 2(e - z) with z = [1.5, 0], e = [1, 0].
  CHECK(g0.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(g0.at(1, 0) == 0.0);  // unchosen row untouched
  // Level 1 matched its input exactly: zero gradient.
  CHECK(g1.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  // Commitment from level 0 (beta 0.25): 2*0.25*(1.5-1) = 0.25; level 1 adds 0.
  CHECK(gz[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("uniform use of half the codebook has perplexity M/2") {
  std::vector<std::vector<long>> hist = {{5, 5, 5, 5, 0, 0, 0, 0}};
  std::vector<LevelUtilization> u = utilization_stats(hist);
  REQUIRE(u.size() == 1);
  CHECK(u[0].defined);
  CHECK(u[0].active == 4);
  CHECK(u[0].perplexity == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("perplexity matches hand-computed entropy on a skewed histogram") {
  // p = [0.75, 0.25]: H = -(0.75 ln 0.75 + 0.25 ln 0.25), perplexity = e^H.
  std::vector<std::vector<long>> hist = {{3, 1}};
  const double h = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  std::vector<LevelUtilization> u = utilization_stats(hist);
  CHECK(u[0].active == 2);
  CHECK(u[0].perplexity == doctest::Approx(std::exp(h)).epsilon(1e-12));
}

TEST_CASE("an unused level reports undefined utilization") {
  std::vector<LevelUtilization> u = utilization_stats({{0, 0, 0}, {1, 0, 0}});
  CHECK_FALSE(u[0].defined);
  CHECK(u[0].active == 0);
  CHECK(u[1].defined);
  CHECK(u[1].perplexity == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dead code restart adopts the only recent input") {
  RvqCodec codec = make_rvq_codec(1, 2, 2, 0.25, 9);
  std::vector<std::vector<int>> unused = {{5, 0}};  // row 0 dead for 5 epochs
  std::vector<std::vector<double>> recent = {{2.5, -3.5}};
  const int restarted = dead_code_restart(codec, unused, recent, 3, 1, true);
  CHECK(restarted == 1);
  CHECK(codec.books[0].embeddings.at(0, 0) == doctest::Approx(2.5));
  CHECK(codec.books[0].embeddings.at(0, 1) == doctest::Approx(-3.5));
}

TEST_CASE("dead code restart is gated") {
  RvqCodec codec = make_rvq_codec(1, 2, 2, 0.25, 9);
  const DenseMatrix before = codec.books[0].embeddings;
  std::vector<std::vector<int>> unused = {{5, 5}};
  std::vector<std::vector<double>> recent = {{1.0, 1.0}};
  CHECK(dead_code_restart(codec, unused, recent, 3, 1, false) == 0);
  CHECK(codec.books[0].embeddings.data == before.data);
  // Below threshold: nothing to do either.
  unused = {{2, 2}};
  CHECK(dead_code_restart(codec, unused, recent, 3, 1, true) == 0);
}
