#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bytevq/asr.hpp"
#include "bytevq/benchmark.hpp"
#include "bytevq/codec.hpp"
#include "bytevq/error.hpp"
#include "bytevq/subword.hpp"
#include "bytevq/synth.hpp"
#include "bytevq/utf8.hpp"

namespace {

using namespace bytevq;

// --config is consumed before CLI11 runs; this sink only feeds --help.
std::string config_sink;

// Resolved settings go to stderr so output files stay clean.
void log_config(const CLI::App* sub) {
  std::ostringstream out;
  out << "config[" << sub->get_name() << "]:";
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    std::string name = opt->get_lnames()[0];
    if (name == "help") continue;
    std::string value;
    if (opt->count() > 0) {
      const std::vector<std::string>& rs = opt->results();
      for (size_t i = 0; i < rs.size(); ++i) value += (i ? "," : "") + rs[i];
    } else {
      value = opt->get_default_str();
      if (value.empty()) value = opt->get_expected_min() == 0 ? "false" : "\"\"";
    }
    out << ' ' << name << '=' << value;
  }
  std::cerr << out.str() << '\n';
}

std::vector<uint32_t> derive_charset(const std::vector<std::vector<uint32_t>>& lines) {
  std::set<uint32_t> cps;
  for (const auto& line : lines)
    for (uint32_t cp : line) cps.insert(cp);
  return {cps.begin(), cps.end()};
}

std::vector<std::vector<int>> lines_to_tokens(const std::vector<std::vector<uint32_t>>& lines,
                                              const std::vector<uint32_t>& charset) {
  std::unordered_map<uint32_t, int> index;
  for (size_t i = 0; i < charset.size(); ++i) index[charset[i]] = static_cast<int>(i);
  std::vector<std::vector<int>> tokens(lines.size());
  for (size_t i = 0; i < lines.size(); ++i)
    for (uint32_t cp : lines[i]) tokens[i].push_back(index.at(cp));
  return tokens;
}

std::string hash_hex(const std::vector<std::vector<uint32_t>>& lines) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash_lines(lines)));
  return buf;
}

OptimizerConfig make_optimizer(const std::string& kind, double lr) {
  OptimizerConfig opt;
  opt.kind = kind == "sgd" ? OptimizerConfig::Kind::kSgd : OptimizerConfig::Kind::kAdam;
  opt.learning_rate = lr;
  return opt;
}

// ---------------------------------------------------------------- synth-gen

struct SynthGenOpts {
  SynthTaskSpec spec;
  std::string out_text;
  std::string out_features;
  std::string out_lexicon;
};

void run_synth_gen(const SynthGenOpts& o) {
  SynthCorpus corpus = synth_generate(o.spec);
  save_text_lines(corpus.texts, o.out_text);
  save_features(corpus.features, o.out_features);
  if (!o.out_lexicon.empty()) save_lexicon(corpus, o.out_lexicon);
  std::cerr << "wrote " << corpus.texts.size() << " utterances, charset "
            << corpus.charset.size() << '\n';
}

void add_synth_gen(CLI::App& app, SynthGenOpts& o) {
  CLI::App* c = app.add_subcommand("synth-gen",
                                   "Generate the synthetic bilingual corpus and features");
  c->add_option("--latin", o.spec.latin_chars, "latin charset size (0-26)");
  c->add_option("--cjk", o.spec.cjk_chars, "cjk-like charset size");
  c->add_option("--phones", o.spec.phone_inventory, "phone inventory size");
  c->add_option("--min-phones", o.spec.min_phones, "min phones per character");
  c->add_option("--max-phones", o.spec.max_phones, "max phones per character");
  c->add_option("--homophone-rate", o.spec.homophone_rate,
                "chance a character copies an earlier one's phones");
  c->add_option("--min-frames", o.spec.min_frames, "min frames per phone");
  c->add_option("--max-frames", o.spec.max_frames, "max frames per phone");
  c->add_option("--feature-dim", o.spec.feature_dim, "feature dimension");
  c->add_option("--noise-sigma", o.spec.noise_sigma, "additive feature noise");
  c->add_option("--utterances", o.spec.utterances, "utterance count");
  c->add_option("--min-length", o.spec.min_length, "min characters per utterance");
  c->add_option("--max-length", o.spec.max_length, "max characters per utterance");
  c->add_option("--seed", o.spec.seed, "corpus seed");
  c->add_option("--out-text", o.out_text, "output text file, one utterance per line")
      ->required();
  c->add_option("--out-features", o.out_features, "output feature file (BVQF)")->required();
  c->add_option("--out-lexicon", o.out_lexicon, "optional phone lexicon dump");
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_synth_gen(o);
  });
}

// --------------------------------------------------------------- codec-train

struct CodecTrainOpts {
  std::string text;
  std::string features;
  std::string out;
  std::string checkpoint;
  std::string optimizer = "adam";
  double lr = 1e-3;
  AutoEncoderConfig cfg;
};

void run_codec_train(const CodecTrainOpts& o) {
  std::vector<std::vector<uint32_t>> lines = load_text_lines(o.text);
  if (lines.empty()) throw DataError(o.text + ": corpus is empty");
  std::vector<uint32_t> charset = derive_charset(lines);
  std::vector<std::vector<int>> corpus = lines_to_tokens(lines, charset);

  AutoEncoderConfig cfg = o.cfg;
  cfg.charset_size = static_cast<int>(charset.size());
  cfg.optimizer = make_optimizer(o.optimizer, o.lr);

  std::vector<DenseMatrix> features;
  if (!o.features.empty()) {
    features = load_features(o.features);
    if (features.size() != lines.size())
      throw DataError("feature count " + std::to_string(features.size()) +
                      " does not match text line count " + std::to_string(lines.size()));
    if (!features.empty()) cfg.feature_dim = features[0].cols;
  } else {
    if (cfg.w_acoustic != 0.0 || cfg.w_ctc != 0.0)
      throw ConfigError("--features is required unless --w-acoustic 0 and --w-ctc 0");
    features.assign(lines.size(), DenseMatrix(0, cfg.feature_dim));
  }

  TrainReport report;
  AutoEncoderModel model = train_autoencoder(corpus, features, cfg, &report);
  for (size_t e = 0; e < report.epochs.size(); ++e) {
    const EpochReport& ep = report.epochs[e];
    std::ostringstream line;
    line << "epoch " << e << ": loss " << ep.loss.total << " (label " << ep.loss.ce_label
         << " acoustic " << ep.loss.ce_acoustic << " ctc " << ep.loss.ctc << " vq "
         << ep.loss.vq << "), active";
    for (const LevelUtilization& u : ep.utilization) line << ' ' << u.active;
    line << ", infeasible " << ep.infeasible;
    if (ep.restarted_codes > 0) line << ", restarted " << ep.restarted_codes;
    std::cerr << line.str() << '\n';
  }
  if (report.stopped_early) std::cerr << "stopped early\n";

  CodecArtifact artifact = make_artifact(model, charset, hash_hex(lines));
  save_artifact(artifact, o.out);
  if (!o.checkpoint.empty()) save_checkpoint(model, charset, o.checkpoint);
  std::cerr << "round trip on the training text: " << round_trip_accuracy(artifact, lines)
            << '\n';
}

void add_codec_train(CLI::App& app, CodecTrainOpts& o) {
  CLI::App* c = app.add_subcommand("codec-train", "Train the text codec");
  c->add_option("--text", o.text, "training text, one utterance per line")->required();
  c->add_option("--features", o.features,
                "acoustic features (BVQF), parallel to the text lines");
  c->add_option("--out", o.out, "output codec artifact")->required();
  c->add_option("--checkpoint", o.checkpoint, "optional full trainer checkpoint");
  c->add_option("--dim", o.cfg.dim, "embedding width");
  c->add_option("--layers", o.cfg.encoder_layers, "causal conv layers in the label encoder");
  c->add_option("--levels", o.cfg.levels, "codebook levels N");
  c->add_option("--codes", o.cfg.codes_per_level, "codes per level M");
  c->add_option("--beta", o.cfg.beta, "commitment weight");
  c->add_option("--context", o.cfg.context, "acoustic frame context");
  c->add_option("--hidden", o.cfg.hidden, "acoustic hidden width");
  c->add_option("--w-label", o.cfg.w_label, "label reconstruction weight (w1)");
  c->add_option("--w-acoustic", o.cfg.w_acoustic, "acoustic reconstruction weight (w2)");
  c->add_option("--w-ctc", o.cfg.w_ctc, "CTC weight (w3)");
  c->add_option("--w-vq", o.cfg.w_vq, "quantization weight (w4)");
  c->add_option("--epochs", o.cfg.epochs, "training epochs");
  c->add_option("--batch", o.cfg.batch_size, "batch size");
  c->add_option("--lr", o.lr, "learning rate");
  c->add_option("--optimizer", o.optimizer, "optimizer")
      ->check(CLI::IsMember({"adam", "sgd"}));
  c->add_flag("--kmeans-init", o.cfg.kmeans_init, "warm-start codebooks with k-means");
  c->add_flag("--restart-dead-codes", o.cfg.restart_dead_codes,
              "restart codebook rows unused for --dead-code-epochs epochs");
  c->add_option("--dead-code-epochs", o.cfg.dead_code_epochs,
                "unused-epoch threshold for restarts");
  c->add_option("--stop-ce", o.cfg.stop_ce_label,
                "stop when the label CE drops below this (0 disables)");
  c->add_option("--seed", o.cfg.seed, "training seed");
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_codec_train(o);
  });
}

// ------------------------------------------------- codec-encode/codec-decode

struct CodecEncodeOpts {
  std::string codec;
  std::string in;
  std::string out;
  uint64_t seed = 0;
};

void run_codec_encode(const CodecEncodeOpts& o) {
  CodecArtifact artifact = load_artifact(o.codec);
  std::vector<std::vector<uint32_t>> lines = load_text_lines(o.in);
  std::vector<std::vector<int>> streams(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    try {
      streams[i] = text_to_bytes(artifact, lines[i]);
    } catch (const InputError& e) {
      throw InputError(o.in + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  save_streams(streams, o.out);
  std::cerr << "encoded " << streams.size() << " lines\n";
}

void add_codec_encode(CLI::App& app, CodecEncodeOpts& o) {
  CLI::App* c = app.add_subcommand("codec-encode", "Encode text into latent byte streams");
  c->add_option("--codec", o.codec, "codec artifact")->required();
  c->add_option("--in", o.in, "input text, one utterance per line")->required();
  c->add_option("--out", o.out, "output stream file")->required();
  c->add_option("--seed", o.seed, "accepted for interface uniformity (encoding is "
                                  "deterministic)");
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_codec_encode(o);
  });
}

struct CodecDecodeOpts {
  std::string codec;
  std::string in;
  std::string out;
  bool positional = false;
  uint64_t seed = 0;
};

void run_codec_decode(const CodecDecodeOpts& o) {
  CodecArtifact artifact = load_artifact(o.codec);
  std::vector<std::vector<int>> streams = load_streams(o.in, artifact.symbol_count());
  std::vector<std::vector<uint32_t>> lines(streams.size());
  for (size_t i = 0; i < streams.size(); ++i)
    lines[i] = o.positional ? bytes_to_labels_positional(artifact, streams[i])
                            : bytes_to_labels(artifact, streams[i]);
  save_text_lines(lines, o.out);
  std::cerr << "decoded " << lines.size() << " lines\n";
}

void add_codec_decode(CLI::App& app, CodecDecodeOpts& o) {
  CLI::App* c = app.add_subcommand("codec-decode",
                                   "Decode (possibly corrupted) latent byte streams to text");
  c->add_option("--codec", o.codec, "codec artifact")->required();
  c->add_option("--in", o.in, "input stream file")->required();
  c->add_option("--out", o.out, "output text file")->required();
  c->add_flag("--positional", o.positional,
              "use the fixed-chunk baseline decoder instead of accumulate-and-flush");
  c->add_option("--seed", o.seed, "accepted for interface uniformity (decoding is "
                                  "deterministic)");
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_codec_decode(o);
  });
}

// ----------------------------------------------------------------- bpe-train

struct BpeTrainOpts {
  std::string in;
  std::string out;
  std::string mode = "bytes";
  int base = 256;
  int target = 0;
  uint64_t seed = 0;
};

void run_bpe_train(const BpeTrainOpts& o) {
  std::vector<SymbolSeq> corpus;
  int base = o.base;
  if (o.mode == "bytes") {
    base = 256;
    corpus = byte_corpus_from_lines(load_text_lines(o.in));
  } else {
    corpus = latent_corpus_from_streams(load_streams(o.in, base), base);
  }
  SubwordVocab vocab = bpe_train(corpus, base, o.target);
  save_vocab(vocab, o.out);
  std::cerr << "vocab size " << vocab.size() << " (" << vocab.merges.size() << " merges"
            << (vocab.truncated ? ", pair supply ran out" : "") << ")\n";
}

void add_bpe_train(CLI::App& app, BpeTrainOpts& o) {
  CLI::App* c = app.add_subcommand("bpe-train", "Train a BPE subword vocabulary");
  c->add_option("--in", o.in, "text lines (bytes mode) or stream file (latents mode)")
      ->required();
  c->add_option("--out", o.out, "output vocabulary file")->required();
  c->add_option("--mode", o.mode, "base alphabet")
      ->check(CLI::IsMember({"bytes", "latents"}));
  c->add_option("--base", o.base, "base alphabet size (latents mode; bytes mode is 256)");
  c->add_option("--target", o.target, "target vocabulary size")->required();
  c->add_option("--seed", o.seed, "accepted for interface uniformity (training is "
                                  "deterministic)");
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_bpe_train(o);
  });
}

// ----------------------------------------------------------------- asr-train

struct AsrTrainOpts {
  std::string features;
  std::string targets;
  std::string out;
  std::string optimizer = "adam";
  double lr = 1e-3;
  AsrConfig cfg;
};

void run_asr_train(const AsrTrainOpts& o) {
  std::vector<DenseMatrix> features = load_features(o.features);
  std::vector<std::vector<int>> targets = load_streams(o.targets, o.cfg.vocab);
  if (targets.size() != features.size())
    throw DataError("target count " + std::to_string(targets.size()) +
                    " does not match feature count " + std::to_string(features.size()));
  AsrConfig cfg = o.cfg;
  if (!features.empty()) cfg.feature_dim = features[0].cols;
  cfg.optimizer = make_optimizer(o.optimizer, o.lr);

  AsrTrainReport report;
  AsrModel model = train_asr(targets, features, cfg, &report);
  for (size_t e = 0; e < report.epochs.size(); ++e)
    std::cerr << "epoch " << e << ": loss " << report.epochs[e].loss << ", skipped "
              << report.epochs[e].skipped << '\n';
  save_asr_model(model, o.out);
}

void add_asr_train(CLI::App& app, AsrTrainOpts& o) {
  CLI::App* c = app.add_subcommand("asr-train", "Train the toy CTC acoustic model");
  c->add_option("--features", o.features, "acoustic features (BVQF)")->required();
  c->add_option("--targets", o.targets, "subword id streams, parallel to the features")
      ->required();
  c->add_option("--vocab", o.cfg.vocab, "subword class count (blank is added on top)")
      ->required();
  c->add_option("--hidden", o.cfg.hidden, "hidden width");
  c->add_option("--context", o.cfg.context, "frame context");
  c->add_option("--epochs", o.cfg.epochs, "training epochs");
  c->add_option("--batch", o.cfg.batch_size, "batch size");
  c->add_option("--lr", o.lr, "learning rate");
  c->add_option("--optimizer", o.optimizer, "optimizer")
      ->check(CLI::IsMember({"adam", "sgd"}));
  c->add_option("--seed", o.cfg.seed, "training seed");
  c->add_option("--out", o.out, "output model file")->required();
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_asr_train(o);
  });
}

// ------------------------------------------------------------------ asr-eval

struct AsrEvalOpts {
  std::string model;
  std::string features;
  std::string refs;
  std::string rep = "char";
  std::string bpe;
  std::string codec;
  std::string out;
  int beam = 8;
  int prune = 16;
  uint64_t seed = 0;
};

bool looks_cjk(const std::vector<uint32_t>& text) {
  for (uint32_t cp : text)
    if (cp >= 0x2E80) return true;
  return false;
}

void run_asr_eval(const AsrEvalOpts& o) {
  AsrModel model = load_asr_model(o.model);
  std::vector<DenseMatrix> features = load_features(o.features);
  std::vector<std::vector<uint32_t>> refs = load_text_lines(o.refs);
  if (features.size() != refs.size())
    throw DataError("feature count " + std::to_string(features.size()) +
                    " does not match reference count " + std::to_string(refs.size()));

  SubwordVocab vocab;
  CodecArtifact artifact;
  std::vector<uint32_t> charset;
  if (o.rep == "char") {
    charset = derive_charset(refs);
    if (static_cast<int>(charset.size()) != model.config.vocab)
      throw ConfigError("model has " + std::to_string(model.config.vocab) +
                        " classes but the references contain " +
                        std::to_string(charset.size()) + " distinct characters");
  } else {
    if (o.bpe.empty()) throw ConfigError("--bpe is required for --rep " + o.rep);
    vocab = load_vocab(o.bpe);
    if (vocab.size() != model.config.vocab)
      throw ConfigError("model has " + std::to_string(model.config.vocab) +
                        " classes but the vocabulary has " + std::to_string(vocab.size()));
    if (o.rep == "vq") {
      if (o.codec.empty()) throw ConfigError("--codec is required for --rep vq");
      artifact = load_artifact(o.codec);
      if (vocab.base_size != artifact.symbol_count())
        throw ConfigError("vocabulary base size " + std::to_string(vocab.base_size) +
                          " does not match the codec symbol count " +
                          std::to_string(artifact.symbol_count()));
    } else if (vocab.base_size != 256) {
      throw ConfigError("--rep utf8 needs a byte vocabulary (base size 256, got " +
                        std::to_string(vocab.base_size) + ")");
    }
  }

  EvalReport report;
  report.representation = o.rep;
  report.vocab = model.config.vocab;
  for (size_t i = 0; i < features.size(); ++i) {
    DenseMatrix logits = asr_logits(model, features[i]);
    std::vector<Hypothesis> hyps =
        ctc_prefix_beam_search(logits, model.config.blank(), o.beam, 1, o.prune);
    std::vector<uint32_t> hyp_text =
        invert_tokens(o.rep, hyps.front().tokens, vocab, artifact, charset);
    bool cjk = looks_cjk(refs[i]);
    EditCounts counts = token_error_rate(refs[i], hyp_text,
                                         cjk ? TokenMode::kChars : TokenMode::kWords);
    LangScore& score = cjk ? report.cjk : report.latin;
    score.counts.add(counts);
    ++score.utterances;
  }

  std::vector<std::string> lines;
  for (bool cjk : {false, true}) {
    const LangScore& s = cjk ? report.cjk : report.latin;
    if (s.utterances == 0) continue;
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "rep=%s vocab=%d lang=%s ter=%.6f subs=%ld dels=%ld ins=%ld ref_len=%ld "
                  "utterances=%d",
                  report.representation.c_str(), report.vocab, cjk ? "cjk" : "latin",
                  s.counts.ter(), s.counts.subs, s.counts.dels, s.counts.ins, s.counts.ref_len,
                  s.utterances);
    lines.push_back(buf);
  }
  for (const std::string& line : lines) std::cout << line << '\n';
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    if (!out) throw InputError("cannot write " + o.out);
    for (const std::string& line : lines) out << line << '\n';
  }
}

void add_asr_eval(CLI::App& app, AsrEvalOpts& o) {
  CLI::App* c = app.add_subcommand("asr-eval", "Decode held-out features and score TER");
  c->add_option("--model", o.model, "trained ASR model")->required();
  c->add_option("--features", o.features, "acoustic features (BVQF)")->required();
  c->add_option("--refs", o.refs, "reference text, one utterance per line")->required();
  c->add_option("--rep", o.rep, "output representation")
      ->check(CLI::IsMember({"char", "utf8", "vq"}));
  c->add_option("--bpe", o.bpe, "BPE vocabulary (utf8/vq)");
  c->add_option("--codec", o.codec, "codec artifact (vq)");
  c->add_option("--beam", o.beam, "beam width");
  c->add_option("--prune", o.prune, "per-frame expansion cap, 0 = exact");
  c->add_option("--out", o.out, "optional key=value report file");
  c->add_option("--seed", o.seed, "accepted for interface uniformity (evaluation is "
                                  "deterministic)");
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_asr_eval(o);
  });
}

// ----------------------------------------------------------------- benchmark

struct BenchmarkOpts {
  BenchmarkConfig cfg;
  std::string codec_optimizer = "adam";
  double codec_lr = 1e-3;
  std::string asr_optimizer = "adam";
  double asr_lr = 1e-3;
  uint64_t seed = 1;
  std::string out_table;
  std::string out_report;
};

void run_benchmark_cmd(const BenchmarkOpts& o) {
  BenchmarkConfig cfg = o.cfg;
  cfg.task.seed = o.seed;
  cfg.codec.seed = o.seed;
  cfg.asr.seed = o.seed;
  cfg.codec.optimizer = make_optimizer(o.codec_optimizer, o.codec_lr);
  cfg.asr.optimizer = make_optimizer(o.asr_optimizer, o.asr_lr);

  BenchmarkResult result = run_benchmark(cfg, &std::cerr);
  std::cout << result.table;
  if (!o.out_table.empty()) {
    std::ofstream out(o.out_table);
    if (!out) throw InputError("cannot write " + o.out_table);
    out << result.table;
  }
  if (!o.out_report.empty()) {
    std::ofstream out(o.out_report);
    if (!out) throw InputError("cannot write " + o.out_report);
    for (const std::string& line : result.keyvals) out << line << '\n';
  }
}

void add_benchmark(CLI::App& app, BenchmarkOpts& o) {
  CLI::App* c = app.add_subcommand(
      "benchmark", "Train and score all requested representations on the synthetic task");
  // The desk-scale defaults: two codebook levels keep latent streams short.
  o.cfg.codec.levels = 2;
  o.cfg.codec.epochs = 12;
  o.cfg.codec.stop_ce_label = 0.02;
  o.cfg.asr.epochs = 8;

  c->add_option("--latin", o.cfg.task.latin_chars, "latin charset size");
  c->add_option("--cjk", o.cfg.task.cjk_chars, "cjk-like charset size");
  c->add_option("--phones", o.cfg.task.phone_inventory, "phone inventory size");
  c->add_option("--homophone-rate", o.cfg.task.homophone_rate, "homophone rate");
  c->add_option("--noise-sigma", o.cfg.task.noise_sigma, "feature noise");
  c->add_option("--feature-dim", o.cfg.task.feature_dim, "feature dimension");
  c->add_option("--utterances", o.cfg.task.utterances, "utterance count");
  c->add_option("--min-length", o.cfg.task.min_length, "min characters per utterance");
  c->add_option("--max-length", o.cfg.task.max_length, "max characters per utterance");

  c->add_option("--reps", o.cfg.representations, "representations to run")
      ->check(CLI::IsMember({"char", "utf8", "vq"}))
      ->delimiter(',');
  c->add_option("--vocab-sizes", o.cfg.vocab_sizes, "subword sizes to sweep")
      ->delimiter(',');
  c->add_option("--train-fraction", o.cfg.train_fraction, "train split fraction");
  c->add_option("--artifact", o.cfg.artifact_path, "reuse this codec artifact for vq");
  c->add_option("--beam", o.cfg.beam_width, "beam width");
  c->add_option("--prune", o.cfg.prune_candidates, "per-frame expansion cap, 0 = exact");

  c->add_option("--codec-dim", o.cfg.codec.dim, "codec embedding width");
  c->add_option("--codec-layers", o.cfg.codec.encoder_layers, "codec encoder layers");
  c->add_option("--codec-levels", o.cfg.codec.levels, "codebook levels N");
  c->add_option("--codec-codes", o.cfg.codec.codes_per_level, "codes per level M");
  c->add_option("--codec-beta", o.cfg.codec.beta, "commitment weight");
  c->add_option("--codec-hidden", o.cfg.codec.hidden, "codec acoustic hidden width");
  c->add_option("--codec-context", o.cfg.codec.context, "codec acoustic frame context");
  c->add_option("--w-label", o.cfg.codec.w_label, "label reconstruction weight (w1)");
  c->add_option("--w-acoustic", o.cfg.codec.w_acoustic, "acoustic reconstruction weight (w2)");
  c->add_option("--w-ctc", o.cfg.codec.w_ctc, "CTC weight (w3)");
  c->add_option("--w-vq", o.cfg.codec.w_vq, "quantization weight (w4)");
  c->add_option("--codec-epochs", o.cfg.codec.epochs, "codec training epochs");
  c->add_option("--codec-batch", o.cfg.codec.batch_size, "codec batch size");
  c->add_option("--codec-lr", o.codec_lr, "codec learning rate");
  c->add_option("--codec-optimizer", o.codec_optimizer, "codec optimizer")
      ->check(CLI::IsMember({"adam", "sgd"}));
  c->add_option("--codec-stop-ce", o.cfg.codec.stop_ce_label,
                "stop codec training when label CE drops below this (0 disables)");
  c->add_flag("--codec-kmeans-init", o.cfg.codec.kmeans_init,
              "warm-start codec codebooks with k-means");

  c->add_option("--asr-hidden", o.cfg.asr.hidden, "ASR hidden width");
  c->add_option("--asr-context", o.cfg.asr.context, "ASR frame context");
  c->add_option("--asr-epochs", o.cfg.asr.epochs, "ASR training epochs");
  c->add_option("--asr-batch", o.cfg.asr.batch_size, "ASR batch size");
  c->add_option("--asr-lr", o.asr_lr, "ASR learning rate");
  c->add_option("--asr-optimizer", o.asr_optimizer, "ASR optimizer")
      ->check(CLI::IsMember({"adam", "sgd"}));

  c->add_option("--seed", o.seed, "seed for corpus, codec and ASR training");
  c->add_option("--out-table", o.out_table, "write the result table here");
  c->add_option("--out-report", o.out_report, "write key=value report lines here");
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_benchmark_cmd(o);
  });
}

// ------------------------------------------------------------------- corrupt

struct CorruptOpts {
  std::string in;
  std::string out;
  int symbols = 0;
  double sub = 0.0;
  double del = 0.0;
  double ins = 0.0;
  uint64_t seed = 1;
};

void run_corrupt(const CorruptOpts& o) {
  std::vector<std::vector<int>> streams = load_streams(o.in, o.symbols);
  for (size_t i = 0; i < streams.size(); ++i)
    streams[i] = corrupt_stream(streams[i], o.symbols, o.sub, o.del, o.ins,
                                o.seed + static_cast<uint64_t>(i));
  save_streams(streams, o.out);
  std::cerr << "corrupted " << streams.size() << " streams\n";
}

void add_corrupt(CLI::App& app, CorruptOpts& o) {
  CLI::App* c = app.add_subcommand("corrupt", "Inject symbol errors into latent streams");
  c->add_option("--in", o.in, "input stream file")->required();
  c->add_option("--out", o.out, "output stream file")->required();
  c->add_option("--symbols", o.symbols, "symbol id universe size")->required();
  c->add_option("--sub", o.sub, "substitution rate");
  c->add_option("--del", o.del, "deletion rate");
  c->add_option("--ins", o.ins, "insertion rate");
  c->add_option("--seed", o.seed, "corruption seed (line i uses seed + i)");
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_corrupt(o);
  });
}

// ----------------------------------------------------------------- gradcheck

struct GradcheckOpts {
  double eps = 1e-4;
  double tol = 1e-3;
  int utterances = 3;
  int charset = 6;
  double w_label = 1.0;
  double w_acoustic = 0.7;
  double w_ctc = 0.5;
  double w_vq = 0.3;
  uint64_t seed = 7;
};

void run_gradcheck(const GradcheckOpts& o) {
  AutoEncoderConfig cfg;
  cfg.charset_size = o.charset;
  cfg.dim = 5;
  cfg.encoder_layers = 1;
  cfg.levels = 2;
  cfg.codes_per_level = 4;
  cfg.feature_dim = 3;
  cfg.context = 1;
  cfg.hidden = 7;
  cfg.w_label = o.w_label;
  cfg.w_acoustic = o.w_acoustic;
  cfg.w_ctc = o.w_ctc;
  cfg.w_vq = o.w_vq;
  cfg.seed = o.seed;
  AutoEncoderModel model = make_autoencoder(cfg);

  Rng rng(o.seed ^ 0x7c3a1ad2u);
  std::vector<std::vector<int>> tokens(o.utterances);
  std::vector<DenseMatrix> features(o.utterances);
  for (int u = 0; u < o.utterances; ++u) {
    int len = 2 + rng.uniform_int(3);
    for (int i = 0; i < len; ++i) tokens[u].push_back(rng.uniform_int(cfg.charset_size));
    // 2 frames per stream symbol always fits the CTC lattice.
    DenseMatrix f(cfg.levels * len * 2 + 4, cfg.feature_dim);
    for (double& v : f.data) v = rng.gaussian();
    features[u] = std::move(f);
  }
  std::vector<Utterance> batch(o.utterances);
  for (int u = 0; u < o.utterances; ++u) batch[u] = {&tokens[u], &features[u]};

  // The stop gradients inside the quantizer decouple the loss value from the
  // delivered gradient for enc.* and vq.* on purpose, so central differences
  // of the full loss are only meaningful for the quantizer-free groups. The
  // quantizer path is checked per term with the assignment held fixed, plus
  // the exact straight-through copy, and the encoder chain rule gets its own
  // quantizer-free head.
  GradCheckReport report = grad_check(
      model.params,
      [&](ParamStore&) { return batch_loss(model, batch, true).loss.total; }, o.eps, o.tol);
  int flagged = 0;
  for (const GradCheckIssue& issue : report.flagged) {
    if (issue.param.rfind("dec.", 0) != 0 && issue.param.rfind("ac.", 0) != 0) continue;
    std::cout << "  " << issue.param << "[" << issue.index << "]: analytic " << issue.analytic
              << " vs numeric " << issue.numeric << " (rel " << issue.rel_err << ")\n";
    ++flagged;
  }
  std::cout << "checked " << report.checked
            << " full-loss entries, flagged outside the quantizer: " << flagged << '\n';

  const RvqView view = model.codec_view();
  int term_entries = 0;
  int term_flagged = 0;
  int copies = 0;
  double term_max_rel = 0.0;
  Rng down_rng(o.seed ^ 0x51f0c3b7u);
  for (int u = 0; u < o.utterances; ++u) {
    const LabelEncoding enc = label_encode(model, tokens[u]);
    for (const QuantizeResult& q : enc.quantized) {
      for (size_t d = 0; d < q.reconstruction.size(); ++d)
        if (q.straight_through_output[d] != q.reconstruction[d])
          throw NumericError("straight-through output differs from the reconstruction");
      std::vector<double> downstream(q.reconstruction.size());
      for (double& v : downstream) v = down_rng.gaussian();
      const std::vector<double> copied = rvq_backward(q, view, downstream, 0.0, nullptr);
      for (size_t d = 0; d < downstream.size(); ++d)
        if (copied[d] != downstream[d])
          throw NumericError("straight-through copy is not component-wise exact");
      ++copies;

      for (int level = 0; level < view.levels(); ++level) {
        std::vector<double> z = q.level_inputs[level];
        const double* row = view.books[level]->row(q.symbols[level].index);
        std::vector<double> e(row, row + view.dim());
        std::vector<double> ge(e.size(), 0.0), gz(z.size(), 0.0), scratch(e.size(), 0.0);
        vq_codebook_term(z, e, ge);
        vq_commitment_term(z, e, model.config.beta, gz);
        for (size_t d = 0; d < e.size(); ++d) {
          double keep = e[d];
          e[d] = keep + o.eps;
          const double up = vq_codebook_term(z, e, scratch);
          e[d] = keep - o.eps;
          const double dn = vq_codebook_term(z, e, scratch);
          e[d] = keep;
          const double fd = (up - dn) / (2.0 * o.eps);
          const double rel =
              std::abs(ge[d] - fd) / std::max({std::abs(ge[d]), std::abs(fd), 1e-8});
          term_max_rel = std::max(term_max_rel, rel);
          ++term_entries;
          if (rel > o.tol) ++term_flagged;
        }
        for (size_t d = 0; d < z.size(); ++d) {
          double keep = z[d];
          z[d] = keep + o.eps;
          const double up = vq_commitment_term(z, e, model.config.beta, scratch);
          z[d] = keep - o.eps;
          const double dn = vq_commitment_term(z, e, model.config.beta, scratch);
          z[d] = keep;
          const double fd = (up - dn) / (2.0 * o.eps);
          const double rel =
              std::abs(gz[d] - fd) / std::max({std::abs(gz[d]), std::abs(fd), 1e-8});
          term_max_rel = std::max(term_max_rel, rel);
          ++term_entries;
          if (rel > o.tol) ++term_flagged;
        }
      }
    }
  }
  std::cout << "checked " << term_entries << " quantization term entries (max rel "
            << term_max_rel << ", flagged " << term_flagged << "), straight-through exact on "
            << copies << " tokens\n";

  GradCheckReport enc_report = grad_check(
      model.params,
      [&](ParamStore& params) {
        const TokenEncoderView ev = token_encoder_view(params, "enc", cfg.encoder_layers);
        TokenEncoderTrace trace;
        double loss = 0.0;
        for (int u = 0; u < o.utterances; ++u) {
          const DenseMatrix z = token_encoder_forward(ev, tokens[u], &trace);
          DenseMatrix grad(z.rows, z.cols);
          for (size_t i = 0; i < z.data.size(); ++i) {
            loss += 0.5 * z.data[i] * z.data[i];
            grad.data[i] = z.data[i];
          }
          token_encoder_backward(params, "enc", trace, grad);
        }
        return loss;
      },
      o.eps, o.tol);
  int enc_flagged = 0;
  for (const GradCheckIssue& issue : enc_report.flagged) {
    std::cout << "  " << issue.param << "[" << issue.index << "]: analytic " << issue.analytic
              << " vs numeric " << issue.numeric << " (rel " << issue.rel_err << ")\n";
    ++enc_flagged;
  }
  std::cout << "checked the encoder chain on a quadratic head, flagged: " << enc_flagged
            << '\n';

  if (flagged + term_flagged + enc_flagged > 0)
    throw NumericError(std::to_string(flagged + term_flagged + enc_flagged) +
                       " gradient entries exceed the tolerance");
  std::cout << "ok\n";
}

void add_gradcheck(CLI::App& app, GradcheckOpts& o) {
  CLI::App* c = app.add_subcommand(
      "gradcheck", "Check analytic gradients against central differences on a small fixture");
  c->add_option("--eps", o.eps, "finite-difference step");
  c->add_option("--tol", o.tol, "relative error tolerance");
  c->add_option("--utterances", o.utterances, "fixture batch size");
  c->add_option("--charset", o.charset, "fixture charset size");
  c->add_option("--w-label", o.w_label, "label reconstruction weight (w1)");
  c->add_option("--w-acoustic", o.w_acoustic, "acoustic reconstruction weight (w2)");
  c->add_option("--w-ctc", o.w_ctc, "CTC weight (w3)");
  c->add_option("--w-vq", o.w_vq, "quantization weight (w4)");
  c->add_option("--seed", o.seed, "fixture seed");
  c->add_option("--config", config_sink,
                "JSON config file (flags win over file values)");
  c->callback([&o, c] {
    log_config(c);
    run_gradcheck(o);
  });
}

// ------------------------------------------------------------- config files

std::string normalize_flag(std::string s) {
  while (!s.empty() && s.front() == '-') s.erase(s.begin());
  size_t eq = s.find('=');
  if (eq != std::string::npos) s.resize(eq);
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

// Turns --config FILE into injected arguments placed before the user's
// flags; keys the user already passed are dropped so flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (size_t i = 1; i < args.size();) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
    } else {
      ++i;
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(path + ": config must be a JSON object");

  std::set<std::string> passed;
  for (size_t i = 2; i < args.size(); ++i)
    if (args[i].rfind("--", 0) == 0) passed.insert(normalize_flag(args[i]));

  std::vector<std::string> injected;
  for (const auto& [key, value] : doc.items()) {
    if (passed.count(normalize_flag(key))) continue;
    std::string flag = "--" + key;
    if (value.is_boolean()) {
      injected.push_back(flag + (value.get<bool>() ? "=true" : "=false"));
    } else if (value.is_string()) {
      injected.push_back(flag);
      injected.push_back(value.get<std::string>());
    } else if (value.is_array()) {
      injected.push_back(flag);
      for (const auto& item : value)
        injected.push_back(item.is_string() ? item.get<std::string>() : item.dump());
    } else {
      injected.push_back(flag);
      injected.push_back(value.dump());
    }
  }
  size_t at = args.size() >= 2 ? 2 : args.size();
  args.insert(args.begin() + static_cast<long>(at), injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learned byte-level text representation toolkit"};
  app.option_defaults()->always_capture_default(true)->ignore_underscore(true);
  app.require_subcommand(1);

  SynthGenOpts synth_gen;
  CodecTrainOpts codec_train;
  CodecEncodeOpts codec_encode;
  CodecDecodeOpts codec_decode;
  BpeTrainOpts bpe_train_opts;
  AsrTrainOpts asr_train_opts;
  AsrEvalOpts asr_eval;
  BenchmarkOpts benchmark;
  CorruptOpts corrupt;
  GradcheckOpts gradcheck;

  add_synth_gen(app, synth_gen);
  add_codec_train(app, codec_train);
  add_codec_encode(app, codec_encode);
  add_codec_decode(app, codec_decode);
  add_bpe_train(app, bpe_train_opts);
  add_asr_train(app, asr_train_opts);
  add_asr_eval(app, asr_eval);
  add_benchmark(app, benchmark);
  add_corrupt(app, corrupt);
  add_gradcheck(app, gradcheck);

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::vector<const char*> ptrs;
    ptrs.reserve(args.size());
    for (const std::string& a : args) ptrs.push_back(a.c_str());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
