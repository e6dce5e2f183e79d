#include "bytevq/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bytevq/error.hpp"
#include "bytevq/utf8.hpp"

namespace bytevq {

namespace {

constexpr uint32_t kCjkBase = 0x4E00;
constexpr char kMagic[4] = {'B', 'V', 'Q', 'F'};
constexpr uint32_t kFeatureVersion = 1;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

int range_int(Rng& rng, int lo, int hi) { return lo + rng.uniform_int(hi - lo + 1); }

}  // namespace

void SynthTaskSpec::validate() const {
  require(latin_chars >= 0 && latin_chars <= 26, "latin_chars must be in [0, 26]");
  require(cjk_chars >= 0 && cjk_chars <= 20000, "cjk_chars must be in [0, 20000]");
  require(latin_chars + cjk_chars >= 1, "charset is empty");
  require(phone_inventory >= 1, "phone_inventory must be positive");
  require(min_phones >= 1 && min_phones <= max_phones, "need 1 <= min_phones <= max_phones");
  require(min_frames >= 1 && min_frames <= max_frames, "need 1 <= min_frames <= max_frames");
  require(feature_dim >= 1, "feature_dim must be positive");
  require(noise_sigma >= 0.0, "noise_sigma must be non-negative");
  require(homophone_rate >= 0.0 && homophone_rate <= 1.0, "homophone_rate must be in [0, 1]");
  int charset_size = latin_chars + (latin_chars > 0 ? 1 : 0) + cjk_chars;
  require(homophone_rate == 0.0 || charset_size >= 2,
          "homophone_rate > 0 needs at least two characters to share phones");
  require(utterances >= 0, "utterances must be non-negative");
  require(min_length >= 1 && min_length <= max_length, "need 1 <= min_length <= max_length");
}

SynthCorpus synth_generate(const SynthTaskSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  SynthCorpus corpus;
  for (int i = 0; i < spec.latin_chars; ++i) corpus.charset.push_back('a' + uint32_t(i));
  if (spec.latin_chars > 0) corpus.charset.push_back(' ');
  for (int i = 0; i < spec.cjk_chars; ++i) corpus.charset.push_back(kCjkBase + uint32_t(i));
  int charset_size = int(corpus.charset.size());

  corpus.prototypes = DenseMatrix(spec.phone_inventory, spec.feature_dim);
  for (double& v : corpus.prototypes.data) v = rng.gaussian();

  corpus.phone_frames.resize(spec.phone_inventory);
  for (int& f : corpus.phone_frames) f = range_int(rng, spec.min_frames, spec.max_frames);

  // Homophones copy the full phone sequence of an earlier character, so with
  // noise_sigma 0 their feature blocks are bit-identical.
  corpus.lexicon.resize(charset_size);
  for (int i = 0; i < charset_size; ++i) {
    if (i > 0 && rng.uniform01() < spec.homophone_rate) {
      corpus.lexicon[i] = corpus.lexicon[rng.uniform_int(i)];
      continue;
    }
    int phones = range_int(rng, spec.min_phones, spec.max_phones);
    corpus.lexicon[i].resize(phones);
    for (int& p : corpus.lexicon[i]) p = rng.uniform_int(spec.phone_inventory);
  }

  auto char_index = [&](uint32_t cp) {
    for (int i = 0; i < charset_size; ++i)
      if (corpus.charset[i] == cp) return i;
    throw DataError("codepoint not in charset");
  };

  for (int u = 0; u < spec.utterances; ++u) {
    bool cjk;
    if (spec.latin_chars == 0) {
      cjk = true;
    } else if (spec.cjk_chars == 0) {
      cjk = false;
    } else {
      cjk = rng.uniform01() < 0.5;
    }
    int length = range_int(rng, spec.min_length, spec.max_length);

    std::vector<uint32_t> text;
    if (cjk) {
      for (int i = 0; i < length; ++i)
        text.push_back(kCjkBase + uint32_t(rng.uniform_int(spec.cjk_chars)));
    } else {
      int remaining = length;
      while (remaining > 0) {
        int word = remaining < 2 ? remaining : range_int(rng, 2, std::min(5, remaining));
        if (!text.empty()) text.push_back(' ');
        for (int i = 0; i < word; ++i)
          text.push_back('a' + uint32_t(rng.uniform_int(spec.latin_chars)));
        remaining -= word;
      }
    }

    int total_frames = 0;
    for (uint32_t cp : text)
      for (int p : corpus.lexicon[char_index(cp)]) total_frames += corpus.phone_frames[p];

    DenseMatrix feat(total_frames, spec.feature_dim);
    int t = 0;
    for (uint32_t cp : text) {
      for (int p : corpus.lexicon[char_index(cp)]) {
        for (int rep = 0; rep < corpus.phone_frames[p]; ++rep, ++t) {
          const double* proto = corpus.prototypes.row(p);
          double* out = feat.row(t);
          for (int d = 0; d < spec.feature_dim; ++d)
            out[d] = proto[d] + spec.noise_sigma * rng.gaussian();
        }
      }
    }

    corpus.texts.push_back(std::move(text));
    corpus.is_cjk.push_back(cjk);
    corpus.features.push_back(std::move(feat));
  }
  return corpus;
}

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {
      (unsigned char)(v & 0xFF), (unsigned char)((v >> 8) & 0xFF),
      (unsigned char)((v >> 16) & 0xFF), (unsigned char)((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, double v) {
  float f = float(v);
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

uint32_t take_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError(path + ": truncated feature file");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

double take_f32(std::istream& in, const std::string& path) {
  uint32_t bits = take_u32(in, path);
  float f;
  std::memcpy(&f, &bits, 4);
  return double(f);
}

}  // namespace

void save_features(const std::vector<DenseMatrix>& features, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  uint32_t dim = features.empty() ? 0 : uint32_t(features[0].cols);
  for (const DenseMatrix& m : features)
    if (uint32_t(m.cols) != dim) throw InputError("feature dim differs between utterances");
  out.write(kMagic, 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, dim);
  put_u32(out, uint32_t(features.size()));
  for (const DenseMatrix& m : features) {
    put_u32(out, uint32_t(m.rows));
    for (double v : m.data) put_f32(out, v);
  }
  if (!out) throw InputError("write failed: " + path);
}

std::vector<DenseMatrix> load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path + ": not a feature file");
  uint32_t version = take_u32(in, path);
  if (version != kFeatureVersion)
    throw DataError(path + ": feature format version " + std::to_string(version) +
                    " is not supported (this build reads version " +
                    std::to_string(kFeatureVersion) + ")");
  uint32_t dim = take_u32(in, path);
  uint32_t count = take_u32(in, path);
  std::vector<DenseMatrix> features;
  features.reserve(count);
  for (uint32_t u = 0; u < count; ++u) {
    uint32_t frames = take_u32(in, path);
    if (frames > (1u << 24) || dim > (1u << 16))
      throw DataError(path + ": unreasonable utterance size");
    DenseMatrix m(static_cast<int>(frames), static_cast<int>(dim));
    for (double& v : m.data) v = take_f32(in, path);
    features.push_back(std::move(m));
  }
  if (in.peek() != EOF) throw DataError(path + ": trailing bytes after last utterance");
  return features;
}

void save_text_lines(const std::vector<std::vector<uint32_t>>& lines, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& line : lines) out << codepoints_to_string(line) << '\n';
  if (!out) throw InputError("write failed: " + path);
}

std::vector<std::vector<uint32_t>> load_text_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::vector<uint32_t>> lines;
  std::string raw;
  while (std::getline(in, raw)) {
    try {
      lines.push_back(string_to_codepoints(raw));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lines.size() + 1) + ": " + e.what());
    }
  }
  return lines;
}

void save_lexicon(const SynthCorpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  for (size_t i = 0; i < corpus.charset.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "U+%04X", corpus.charset[i]);
    out << buf;
    for (int p : corpus.lexicon[i]) out << ' ' << p;
    out << '\n';
  }
  if (!out) throw InputError("write failed: " + path);
}

}  // namespace bytevq
