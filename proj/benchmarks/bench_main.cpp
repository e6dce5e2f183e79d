#include <benchmark/benchmark.h>

#include <vector>

#include "bytevq/asr.hpp"
#include "bytevq/autoencoder.hpp"
#include "bytevq/codec.hpp"
#include "bytevq/ctc.hpp"
#include "bytevq/quantizer.hpp"
#include "bytevq/subword.hpp"
#include "bytevq/synth.hpp"
#include "bytevq/utf8.hpp"

using namespace bytevq;

namespace {

void BM_RvqQuantize(benchmark::State& state) {
  const int dim = 32;
  const RvqCodec codec = make_rvq_codec(3, 256, dim, 0.25, 1);
  Rng rng(2);
  std::vector<double> z(dim);
  for (double& v : z) v = rng.gaussian();
  for (auto _ : state) {
    QuantizeResult q = rvq_quantize(z, codec);
    benchmark::DoNotOptimize(q.reconstruction.data());
  }
}
BENCHMARK(BM_RvqQuantize);

void BM_CtcLoss(benchmark::State& state) {
  const int T = 50;
  const int K = 64;
  Rng rng(3);
  DenseMatrix logits(T, K);
  for (double& v : logits.data) v = rng.gaussian();
  std::vector<int> targets(10);
  for (int& t : targets) t = rng.uniform_int(K - 1);
  for (auto _ : state) {
    CtcResult r = ctc_loss(logits, targets, K - 1);
    benchmark::DoNotOptimize(r.loss);
  }
}
BENCHMARK(BM_CtcLoss);

void BM_PrefixBeamSearch(benchmark::State& state) {
  const int T = 40;
  const int K = 33;
  Rng rng(4);
  DenseMatrix logits(T, K);
  for (double& v : logits.data) v = rng.gaussian();
  for (auto _ : state) {
    auto hyps = ctc_prefix_beam_search(logits, K - 1, 8, 1, 8);
    benchmark::DoNotOptimize(hyps.data());
  }
}
BENCHMARK(BM_PrefixBeamSearch);

void BM_BpeEncode(benchmark::State& state) {
  SynthTaskSpec task;
  task.latin_chars = 12;
  task.cjk_chars = 40;
  task.utterances = 200;
  task.feature_dim = 2;
  task.seed = 5;
  const SynthCorpus corpus = synth_generate(task);
  const std::vector<SymbolSeq> lines = byte_corpus_from_lines(corpus.texts);
  const SubwordVocab vocab = bpe_train(lines, 256, 512);
  for (auto _ : state) {
    for (const SymbolSeq& line : lines) {
      SymbolSeq enc = bpe_encode(vocab, line);
      benchmark::DoNotOptimize(enc.data());
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(lines.size()));
}
BENCHMARK(BM_BpeEncode);

void BM_Utf8Repair(benchmark::State& state) {
  Rng rng(6);
  std::vector<uint8_t> bytes(1024);
  for (uint8_t& b : bytes) b = static_cast<uint8_t>(rng.uniform_int(256));
  for (auto _ : state) {
    RepairResult r = utf8_repair_decode(bytes);
    benchmark::DoNotOptimize(r.text.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<long>(bytes.size()));
}
BENCHMARK(BM_Utf8Repair);

void BM_StreamDecode(benchmark::State& state) {
  AutoEncoderConfig cfg;
  cfg.charset_size = 64;
  cfg.dim = 16;
  cfg.encoder_layers = 0;
  cfg.levels = 2;
  cfg.codes_per_level = 64;
  cfg.seed = 7;
  const AutoEncoderModel model = make_autoencoder(cfg);
  std::vector<uint32_t> charset(64);
  for (int i = 0; i < 64; ++i) charset[i] = 0x61 + static_cast<uint32_t>(i);
  const CodecArtifact artifact = make_artifact(model, charset, "bench");
  Rng rng(8);
  std::vector<uint32_t> text(64);
  for (uint32_t& cp : text) cp = charset[static_cast<size_t>(rng.uniform_int(64))];
  const std::vector<int> stream = text_to_bytes(artifact, text);
  for (auto _ : state) {
    std::vector<uint32_t> labels = bytes_to_labels(artifact, stream);
    benchmark::DoNotOptimize(labels.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(text.size()));
}
BENCHMARK(BM_StreamDecode);

}  // namespace

BENCHMARK_MAIN();
