#include "bytevq/benchmark.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "bytevq/error.hpp"
#include "bytevq/subword.hpp"
#include "bytevq/utf8.hpp"

namespace bytevq {

void BenchmarkConfig::validate() const {
  task.validate();
  if (representations.empty()) throw ConfigError("no representations requested");
  bool any_bpe = false;
  for (const std::string& rep : representations) {
    if (rep != "char" && rep != "utf8" && rep != "vq")
      throw ConfigError("unknown representation '" + rep + "' (char, utf8, vq)");
    if (std::count(representations.begin(), representations.end(), rep) > 1)
      throw ConfigError("representation '" + rep + "' requested twice");
    if (rep != "char") any_bpe = true;
  }
  if (any_bpe && vocab_sizes.empty()) throw ConfigError("no subword sizes requested");
  for (int v : vocab_sizes)
    if (v < 2) throw ConfigError("subword size must be at least 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0, 1)");
  if (beam_width < 1) throw ConfigError("beam_width must be at least 1");
  if (prune_candidates < 0) throw ConfigError("prune_candidates must be non-negative");
}

namespace {

std::string pct(const LangScore& s) {
  if (s.utterances == 0) return "      -";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%7.2f", s.counts.ter() * 100.0);
  return buf;
}

std::string render_table(const std::vector<std::string>& reps, const std::vector<int>& sizes,
                         const std::vector<EvalReport>& reports, int charset_size) {
  // Rows are representations, columns subword sizes, one block per language.
  // The char row repeats its single result since it ignores the size sweep.
  std::ostringstream out;
  auto find = [&](const std::string& rep, int vocab) -> const EvalReport* {
    for (const EvalReport& r : reports)
      if (r.representation == rep && (rep == "char" || r.vocab == vocab)) return &r;
    return nullptr;
  };
  for (bool cjk : {false, true}) {
    bool any = false;
    for (const EvalReport& r : reports)
      any = any || (cjk ? r.cjk : r.latin).utterances > 0;
    if (!any) continue;
    out << (cjk ? "cjk TER% (character tokens)" : "latin TER% (word tokens)") << "\n";
    out << "rep   ";
    for (int v : sizes) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%8d", v);
      out << buf;
    }
    out << "\n";
    for (const std::string& rep : reps) {
      char name[16];
      std::snprintf(name, sizeof(name), "%-6s", rep.c_str());
      out << name;
      for (int v : sizes) {
        const EvalReport* r = find(rep, v);
        out << " " << (r ? pct(cjk ? r->cjk : r->latin) : "      -");
      }
      out << "\n";
    }
    out << "\n";
  }
  bool has_char =
      std::find(reps.begin(), reps.end(), std::string("char")) != reps.end();
  if (has_char)
    out << "char decodes the raw charset (" << charset_size
        << " classes); its result does not vary with the subword budget\n";
  return out.str();
}

}  // namespace

std::vector<uint32_t> invert_tokens(const std::string& rep, const std::vector<int>& tokens,
                                    const SubwordVocab& vocab, const CodecArtifact& artifact,
                                    const std::vector<uint32_t>& charset) {
  if (rep == "char") {
    std::vector<uint32_t> text;
    for (int t : tokens) {
      if (t < 0 || t >= static_cast<int>(charset.size()))
        throw InputError("token " + std::to_string(t) + " outside the charset");
      text.push_back(charset[t]);
    }
    return text;
  }
  SymbolSeq expanded = bpe_decode(vocab, SymbolSeq(tokens.begin(), tokens.end()));
  if (rep == "utf8") {
    std::vector<uint8_t> bytes;
    for (Symbol s : expanded) {
      if (s == vocab.boundary()) {
        if (!bytes.empty()) bytes.push_back(' ');
      } else {
        bytes.push_back(static_cast<uint8_t>(s));
      }
    }
    return utf8_repair_decode(bytes).text;
  }
  if (rep != "vq") throw InputError("unknown representation '" + rep + "'");
  std::vector<int> stream;
  for (Symbol s : expanded)
    if (s != vocab.boundary()) stream.push_back(s);
  return bytes_to_labels(artifact, stream);
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config, std::ostream* log) {
  config.validate();
  auto say = [log](const std::string& line) {
    if (log) *log << line << std::endl;
  };

  SynthCorpus corpus = synth_generate(config.task);
  const int n = static_cast<int>(corpus.texts.size());
  const int train_n = static_cast<int>(config.train_fraction * n);
  if (train_n < 1 || train_n >= n)
    throw ConfigError("train fraction leaves an empty split (" + std::to_string(train_n) + "/" +
                      std::to_string(n - train_n) + ")");
  const std::vector<uint32_t>& charset = corpus.charset;
  const int charset_size = static_cast<int>(charset.size());
  say("corpus: " + std::to_string(n) + " utterances, charset " + std::to_string(charset_size) +
      ", train " + std::to_string(train_n) + " / test " + std::to_string(n - train_n));

  std::unordered_map<uint32_t, int> char_index;
  for (int i = 0; i < charset_size; ++i) char_index[charset[i]] = i;
  auto to_tokens = [&](const std::vector<uint32_t>& text) {
    std::vector<int> tokens;
    tokens.reserve(text.size());
    for (uint32_t cp : text) tokens.push_back(char_index.at(cp));
    return tokens;
  };

  std::vector<DenseMatrix> train_features(corpus.features.begin(),
                                          corpus.features.begin() + train_n);

  BenchmarkResult result;
  bool want_vq = std::find(config.representations.begin(), config.representations.end(),
                           std::string("vq")) != config.representations.end();
  CodecArtifact artifact;
  if (want_vq) {
    if (!config.artifact_path.empty()) {
      artifact = load_artifact(config.artifact_path);
      for (uint32_t cp : charset)
        if (artifact.token_of(cp) < 0)
          throw ConfigError("codec artifact does not cover the task charset");
      say("codec: loaded " + config.artifact_path);
    } else {
      AutoEncoderConfig cc = config.codec;
      cc.charset_size = charset_size;
      cc.feature_dim = config.task.feature_dim;
      std::vector<std::vector<int>> codec_tokens(train_n);
      for (int i = 0; i < train_n; ++i) codec_tokens[i] = to_tokens(corpus.texts[i]);
      say("codec: training on " + std::to_string(train_n) + " utterances, " +
          std::to_string(cc.epochs) + " epochs");
      AutoEncoderModel model = train_autoencoder(codec_tokens, train_features, cc, nullptr);
      std::vector<std::vector<uint32_t>> train_texts(corpus.texts.begin(),
                                                     corpus.texts.begin() + train_n);
      char hash[24];
      std::snprintf(hash, sizeof(hash), "%016llx",
                    static_cast<unsigned long long>(hash_lines(train_texts)));
      artifact = make_artifact(model, charset, hash);
    }
    std::vector<std::vector<uint32_t>> test_texts(corpus.texts.begin() + train_n,
                                                  corpus.texts.end());
    result.codec_round_trip = round_trip_accuracy(artifact, test_texts);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "codec: held-out round trip %.4f", result.codec_round_trip);
    say(buf);
  }

  std::vector<int> sizes = config.vocab_sizes;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  for (const std::string& rep : config.representations) {
    // Base symbol sequences for every utterance; BPE (when used) sees only
    // the train slice.
    std::vector<SymbolSeq> base;
    int base_size = 0;
    if (rep == "char") {
      base.resize(n);
      for (int i = 0; i < n; ++i) {
        std::vector<int> tokens = to_tokens(corpus.texts[i]);
        base[i].assign(tokens.begin(), tokens.end());
      }
    } else if (rep == "utf8") {
      base = byte_corpus_from_lines(corpus.texts);
      base_size = 256;
    } else {
      std::vector<std::vector<int>> streams(n);
      for (int i = 0; i < n; ++i) streams[i] = text_to_bytes(artifact, corpus.texts[i]);
      base = latent_corpus_from_streams(streams, artifact.symbol_count());
      base_size = artifact.symbol_count();
    }

    std::vector<int> run_sizes = rep == "char" ? std::vector<int>{charset_size} : sizes;
    for (int target : run_sizes) {
      SubwordVocab vocab;
      int classes = charset_size;
      if (rep != "char") {
        std::vector<SymbolSeq> train_base(base.begin(), base.begin() + train_n);
        vocab = bpe_train(train_base, base_size, target);
        classes = vocab.size();
        say("run " + rep + "/" + std::to_string(target) + ": vocab " +
            std::to_string(classes) + (vocab.truncated ? " (pair supply ran out)" : ""));
      } else {
        say("run char: " + std::to_string(classes) + " classes");
      }

      std::vector<std::vector<int>> train_targets(train_n);
      for (int i = 0; i < train_n; ++i) {
        const SymbolSeq& seq = rep == "char" ? base[i] : bpe_encode(vocab, base[i]);
        train_targets[i].assign(seq.begin(), seq.end());
      }

      AsrConfig ac = config.asr;
      ac.feature_dim = config.task.feature_dim;
      ac.vocab = classes;
      AsrTrainReport train_report;
      AsrModel asr = train_asr(train_targets, train_features, ac, &train_report);
      if (!train_report.epochs.empty()) {
        const AsrEpoch& last = train_report.epochs.back();
        char buf[96];
        std::snprintf(buf, sizeof(buf), "run %s/%d: final loss %.4f, %d skipped",
                      rep.c_str(), target, last.loss, last.skipped);
        say(buf);
      }

      EvalReport report;
      report.representation = rep;
      report.vocab = rep == "char" ? classes : target;
      for (int i = train_n; i < n; ++i) {
        DenseMatrix logits = asr_logits(asr, corpus.features[i]);
        std::vector<Hypothesis> hyps = ctc_prefix_beam_search(
            logits, ac.blank(), config.beam_width, 1, config.prune_candidates);
        std::vector<uint32_t> hyp_text =
            invert_tokens(rep, hyps.front().tokens, vocab, artifact, charset);

        TokenMode mode = corpus.is_cjk[i] ? TokenMode::kChars : TokenMode::kWords;
        EditCounts counts = token_error_rate(corpus.texts[i], hyp_text, mode);
        LangScore& score = corpus.is_cjk[i] ? report.cjk : report.latin;
        score.counts.add(counts);
        ++score.utterances;
      }
      result.reports.push_back(report);
      say("run " + rep + "/" + std::to_string(report.vocab) + ": latin " + pct(report.latin) +
          "  cjk " + pct(report.cjk));
    }
  }

  result.table = render_table(config.representations, sizes, result.reports, charset_size);

  {
    std::ostringstream line;
    line << "utterances=" << n << " train=" << train_n << " test=" << (n - train_n)
         << " charset=" << charset_size;
    result.keyvals.push_back(line.str());
  }
  if (result.codec_round_trip >= 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "codec_round_trip=%.6f", result.codec_round_trip);
    result.keyvals.push_back(buf);
  }
  for (const EvalReport& r : result.reports) {
    for (bool cjk : {false, true}) {
      const LangScore& s = cjk ? r.cjk : r.latin;
      if (s.utterances == 0) continue;
      char buf[192];
      std::snprintf(buf, sizeof(buf),
                    "rep=%s vocab=%d lang=%s ter=%.6f subs=%ld dels=%ld ins=%ld ref_len=%ld "
                    "utterances=%d",
                    r.representation.c_str(), r.vocab, cjk ? "cjk" : "latin", s.counts.ter(),
                    s.counts.subs, s.counts.dels, s.counts.ins, s.counts.ref_len, s.utterances);
      result.keyvals.push_back(buf);
    }
  }
  return result;
}

}  // namespace bytevq
