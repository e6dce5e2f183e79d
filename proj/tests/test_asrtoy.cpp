#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"

#include "bytevq/asr.hpp"
#include "bytevq/error.hpp"
#include "testutil.hpp"

using namespace bytevq;

namespace {

// Exhaustive label posterior: walk every frame-level path, collapse repeats
// then blanks, and accumulate probability mass per label sequence.
std::map<std::vector<int>, double> brute_force_posterior(const DenseMatrix& logits, int blank) {
  const int T = logits.rows;
  const int K = logits.cols;
  std::vector<std::vector<double>> probs(T, std::vector<double>(K));
  for (int t = 0; t < T; ++t) {
    double mx = logits.at(t, 0);
    for (int k = 1; k < K; ++k) mx = std::max(mx, logits.at(t, k));
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(logits.at(t, k) - mx);
    for (int k = 0; k < K; ++k) probs[t][k] = std::exp(logits.at(t, k) - mx) / z;
  }

  std::map<std::vector<int>, double> mass;
  long total = 1;
  for (int t = 0; t < T; ++t) total *= K;
  for (long code = 0; code < total; ++code) {
    long c = code;
    double p = 1.0;
    std::vector<int> path(T);
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(c % K);
      c /= K;
      p *= probs[t][path[t]];
    }
    // Merge repeats first, then drop blanks.
    std::vector<int> labels;
    int prev = -1;
    for (int s : path) {
      if (s != prev && s != blank) labels.push_back(s);
      prev = s;
    }
    mass[labels] += p;
  }
  return mass;
}

std::vector<int> posterior_argmax(const std::map<std::vector<int>, double>& mass) {
  std::vector<int> best;
  double best_p = -1.0;
  for (const auto& [labels, p] : mass) {
    if (p > best_p) {  // map order makes ties prefer the smaller sequence
      best_p = p;
      best = labels;
    }
  }
  return best;
}

// Plain Levenshtein distance for cross-checking the backtrace counts.
int plain_edit_distance(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
  for (size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i)
    for (size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1),
                          d[i - 1][j] + 1, d[i][j - 1] + 1});
  return d[a.size()][b.size()];
}

}  // namespace

TEST_CASE("exact beam search matches the exhaustive label posterior") {
  Rng rng(2024);
  const int blank = 2;
  for (int iter = 0; iter < 30; ++iter) {
    const int T = 1 + rng.uniform_int(4);
    DenseMatrix logits(T, 3);
    for (double& v : logits.data) v = 2.0 * rng.gaussian();

    const auto mass = brute_force_posterior(logits, blank);
    const std::vector<int> want = posterior_argmax(mass);

    const auto hyps = ctc_prefix_beam_search(logits, blank, 256, 256);
    REQUIRE(!hyps.empty());
    CHECK(hyps[0].tokens == want);
    CHECK(hyps[0].log_score == doctest::Approx(std::log(mass.at(want))).epsilon(1e-9));

    // With no pruning the hypothesis set carries the whole posterior.
    double sum = 0.0;
    for (const auto& h : hyps) {
      sum += std::exp(h.log_score);
      CHECK(std::exp(h.log_score) == doctest::Approx(mass.at(h.tokens)).epsilon(1e-9));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("zero frames yield the empty hypothesis with unit mass") {
  DenseMatrix logits(0, 4);
  const auto hyps = ctc_prefix_beam_search(logits, 3, 8, 8);
  REQUIRE(hyps.size() == 1);
  CHECK(hyps[0].tokens.empty());
  CHECK(hyps[0].log_score == doctest::Approx(0.0));
}

TEST_CASE("score ties rank the lexicographically smaller sequence first") {
  DenseMatrix logits(1, 3);
  logits.fill(0.0);  // uniform: {}, {0}, {1} all carry mass 1/3
  const auto hyps = ctc_prefix_beam_search(logits, 2, 8, 3);
  REQUIRE(hyps.size() == 3);
  CHECK(hyps[0].tokens.empty());
  CHECK(hyps[1].tokens == std::vector<int>{0});
  CHECK(hyps[2].tokens == std::vector<int>{1});
}

TEST_CASE("candidate pruning drops weak symbols from expansion") {
  DenseMatrix logits(3, 4);
  logits.fill(0.0);
  for (int t = 0; t < 3; ++t) logits.at(t, 1) = 3.0;  // symbol 1 dominates
  const auto hyps = ctc_prefix_beam_search(logits, 3, 64, 64, 1);
  for (const auto& h : hyps) {
    for (int tok : h.tokens) CHECK(tok == 1);
  }
}

TEST_CASE("beam search validates its arguments") {
  DenseMatrix logits(2, 3);
  CHECK_THROWS_AS(ctc_prefix_beam_search(logits, 2, 0, 1), InputError);
  CHECK_THROWS_AS(ctc_prefix_beam_search(logits, 2, 1, 0), InputError);
  CHECK_THROWS_AS(ctc_prefix_beam_search(logits, 3, 4, 4), InputError);
  CHECK_THROWS_AS(ctc_prefix_beam_search(logits, -1, 4, 4), InputError);
}

TEST_CASE("corruption is reproducible and rate zero is the identity") {
  std::vector<int> stream(1000);
  Rng rng(5);
  for (int& s : stream) s = rng.uniform_int(32);

  CHECK(corrupt_stream(stream, 32, 0.0, 0.0, 0.0, 9) == stream);
  const auto a = corrupt_stream(stream, 32, 0.1, 0.1, 0.1, 99);
  const auto b = corrupt_stream(stream, 32, 0.1, 0.1, 0.1, 99);
  CHECK(a == b);
  CHECK(a != stream);

  const auto dels = corrupt_stream(stream, 32, 0.0, 0.1, 0.0, 7);
  CHECK(dels.size() < stream.size());
  CHECK(dels.size() > 850);

  const auto subs = corrupt_stream(stream, 32, 1.0, 0.0, 0.0, 7);
  CHECK(subs.size() == stream.size());

  CHECK(corrupt_stream(stream, 32, 0.0, 1.0, 0.0, 7).empty());
  CHECK(corrupt_stream(stream, 32, 0.0, 0.0, 1.0, 7).size() == 2 * stream.size());

  for (int s : corrupt_stream(stream, 32, 0.5, 0.2, 0.2, 3)) {
    CHECK(s >= 0);
    CHECK(s < 32);
  }
}

TEST_CASE("corruption validates rates and the symbol count") {
  CHECK_THROWS_AS(corrupt_stream({1}, 0, 0.1, 0.1, 0.1, 1), InputError);
  CHECK_THROWS_AS(corrupt_stream({1}, 4, -0.1, 0.0, 0.0, 1), InputError);
  CHECK_THROWS_AS(corrupt_stream({1}, 4, 0.0, 1.5, 0.0, 1), InputError);
  CHECK_THROWS_AS(corrupt_stream({1}, 4, 0.0, 0.0, 2.0, 1), InputError);
}

TEST_CASE("token error rate counts the classic edit operations") {
  SUBCASE("one deletion in chars mode") {
    const EditCounts c = token_error_rate({'a', 'b', 'c'}, {'a', 'c'}, TokenMode::kChars);
    CHECK(c.dels == 1);
    CHECK(c.subs == 0);
    CHECK(c.ins == 0);
    CHECK(c.ref_len == 3);
    CHECK(c.ter() == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("identical is error free") {
    const EditCounts c = token_error_rate({'x', 'y'}, {'x', 'y'}, TokenMode::kChars);
    CHECK(c.errors() == 0);
    CHECK(c.ter() == doctest::Approx(0.0));
  }
  SUBCASE("empty reference guards the denominator") {
    const EditCounts c = token_error_rate({}, {'a', 'b'}, TokenMode::kChars);
    CHECK(c.ins == 2);
    CHECK(c.ref_len == 0);
    CHECK(c.ter() == doctest::Approx(2.0));
  }
  SUBCASE("words mode compares whole words") {
    const std::vector<uint32_t> ref = {'a', 'b', ' ', 'c', 'd'};
    const std::vector<uint32_t> hyp = {'a', 'b', ' ', 'c', 'e'};
    const EditCounts c = token_error_rate(ref, hyp, TokenMode::kWords);
    CHECK(c.subs == 1);
    CHECK(c.ref_len == 2);
    CHECK(c.ter() == doctest::Approx(0.5));
  }
  SUBCASE("extra whitespace does not create tokens") {
    const std::vector<uint32_t> ref = {' ', 'a', 'b', ' ', ' ', 'c', 'd', ' '};
    const std::vector<uint32_t> hyp = {'a', 'b', ' ', 'c', 'd'};
    CHECK(token_error_rate(ref, hyp, TokenMode::kWords).errors() == 0);
  }
}

TEST_CASE("backtraced edit counts sum to the minimal distance") {
  Rng rng(31);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<uint32_t> ref(static_cast<size_t>(rng.uniform_int(9)));
    std::vector<uint32_t> hyp(static_cast<size_t>(rng.uniform_int(9)));
    for (uint32_t& c : ref) c = 'a' + uint32_t(rng.uniform_int(4));
    for (uint32_t& c : hyp) c = 'a' + uint32_t(rng.uniform_int(4));
    const EditCounts c = token_error_rate(ref, hyp, TokenMode::kChars);
    CHECK(c.errors() == plain_edit_distance(ref, hyp));
    CHECK(c.ref_len == static_cast<long>(ref.size()));
    CHECK(static_cast<long>(ref.size()) - c.dels + c.ins == static_cast<long>(hyp.size()));
  }
}

TEST_CASE("training learns a separable toy task end to end") {
  // Three classes with constant, well separated frames.
  AsrConfig cfg;
  cfg.feature_dim = 3;
  cfg.context = 1;
  cfg.hidden = 16;
  cfg.vocab = 3;
  cfg.epochs = 60;
  cfg.batch_size = 3;
  cfg.optimizer.learning_rate = 0.02;
  cfg.seed = 11;

  std::vector<std::vector<int>> targets;
  std::vector<DenseMatrix> features;
  for (int rep = 0; rep < 3; ++rep) {
    for (int c = 0; c < 3; ++c) {
      DenseMatrix f(4, 3);
      f.fill(0.0);
      for (int t = 0; t < 4; ++t) f.at(t, c) = 2.0;
      targets.push_back({c});
      features.push_back(std::move(f));
    }
  }

  AsrTrainReport report;
  const AsrModel model = train_asr(targets, features, cfg, &report);
  REQUIRE(report.epochs.size() == 60);
  CHECK(report.epochs.back().loss < report.epochs.front().loss);
  CHECK(report.epochs.back().loss < 0.2);

  for (int c = 0; c < 3; ++c) {
    const auto hyps = ctc_prefix_beam_search(asr_logits(model, features[c]), cfg.blank(), 8, 1);
    REQUIRE(!hyps.empty());
    CHECK(hyps[0].tokens == std::vector<int>{c});
  }
}

TEST_CASE("unfittable and empty targets are skipped, not trained on") {
  AsrConfig cfg;
  cfg.feature_dim = 2;
  cfg.context = 0;
  cfg.hidden = 4;
  cfg.vocab = 3;
  cfg.epochs = 1;
  cfg.seed = 3;

  std::vector<std::vector<int>> targets = {{0, 1}, {0, 1, 2}, {}};
  std::vector<DenseMatrix> features;
  features.emplace_back(4, 2);
  features.emplace_back(2, 2);  // needs 3 frames
  features.emplace_back(4, 2);
  for (auto& f : features) f.fill(0.1);

  AsrTrainReport report;
  train_asr(targets, features, cfg, &report);
  REQUIRE(report.epochs.size() == 1);
  CHECK(report.epochs[0].skipped == 2);

  CHECK_THROWS_AS(train_asr(targets, {features[0]}, cfg, nullptr), DataError);
}

TEST_CASE("models survive save and load") {
  TempDir tmp;
  AsrConfig cfg;
  cfg.feature_dim = 3;
  cfg.context = 1;
  cfg.hidden = 8;
  cfg.vocab = 4;
  cfg.seed = 21;
  const AsrModel model = make_asr_model(cfg);

  const std::string p1 = tmp.file("asr1.json");
  const std::string p2 = tmp.file("asr2.json");
  save_asr_model(model, p1);
  const AsrModel loaded = load_asr_model(p1);
  CHECK(loaded.config.vocab == 4);
  CHECK(loaded.config.hidden == 8);
  CHECK(loaded.config.seed == 21);
  save_asr_model(loaded, p2);

  std::ifstream f1(p1), f2(p2);
  const std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(c1 == c2);

  Rng rng(77);
  DenseMatrix f(5, 3);
  for (double& v : f.data) v = rng.gaussian();
  const DenseMatrix a = asr_logits(model, f);
  const DenseMatrix b = asr_logits(loaded, f);
  REQUIRE(a.data.size() == b.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) {
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-5));
  }
}
