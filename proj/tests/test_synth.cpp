#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "bytevq/error.hpp"
#include "bytevq/synth.hpp"
#include "testutil.hpp"

using namespace bytevq;

namespace {

SynthTaskSpec small_spec() {
  SynthTaskSpec spec;
  spec.latin_chars = 4;
  spec.cjk_chars = 4;
  spec.phone_inventory = 6;
  spec.utterances = 20;
  spec.min_length = 3;
  spec.max_length = 6;
  spec.seed = 41;
  return spec;
}

bool row_matches_some_prototype(const SynthCorpus& c, const double* row) {
  for (int p = 0; p < c.prototypes.rows; ++p) {
    bool same = true;
    for (int d = 0; d < c.prototypes.cols; ++d) {
      if (row[d] != c.prototypes.row(p)[d]) {
        same = false;
        break;
      }
    }
    if (same) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  const SynthTaskSpec spec = small_spec();
  const SynthCorpus a = synth_generate(spec);
  const SynthCorpus b = synth_generate(spec);
  CHECK(a.charset == b.charset);
  CHECK(a.texts == b.texts);
  CHECK(a.lexicon == b.lexicon);
  REQUIRE(a.features.size() == b.features.size());
  for (size_t u = 0; u < a.features.size(); ++u) {
    CHECK(a.features[u].data == b.features[u].data);
  }
  SynthTaskSpec other = spec;
  other.seed = 42;
  CHECK(synth_generate(other).texts != a.texts);
}

TEST_CASE("charset is latin block, space, then the cjk block") {
  const SynthCorpus c = synth_generate(small_spec());
  REQUIRE(c.charset.size() == 9);
  CHECK(c.charset[0] == 'a');
  CHECK(c.charset[3] == 'd');
  CHECK(c.charset[4] == ' ');
  CHECK(c.charset[5] == 0x4E00);
  CHECK(c.charset[8] == 0x4E03);
}

TEST_CASE("fixed phone and frame counts give exact utterance lengths") {
  SynthTaskSpec spec;
  spec.latin_chars = 0;
  spec.cjk_chars = 4;
  spec.phone_inventory = 5;
  spec.min_phones = 2;
  spec.max_phones = 2;
  spec.min_frames = 3;
  spec.max_frames = 3;
  spec.homophone_rate = 0.0;
  spec.min_length = 4;
  spec.max_length = 4;
  spec.utterances = 6;
  spec.seed = 7;
  const SynthCorpus c = synth_generate(spec);
  for (size_t u = 0; u < c.features.size(); ++u) {
    CHECK(c.texts[u].size() == 4);
    CHECK(c.features[u].rows == 4 * 2 * 3);
    CHECK(c.features[u].cols == spec.feature_dim);
    CHECK(c.is_cjk[u]);
  }
}

TEST_CASE("homophone rate one collapses the lexicon to a single entry") {
  SynthTaskSpec spec = small_spec();
  spec.homophone_rate = 1.0;
  const SynthCorpus c = synth_generate(spec);
  for (const auto& phones : c.lexicon) CHECK(phones == c.lexicon[0]);
}

TEST_CASE("zero noise reproduces prototypes frame for frame") {
  SynthTaskSpec spec = small_spec();
  spec.noise_sigma = 0.0;
  const SynthCorpus c = synth_generate(spec);
  for (const DenseMatrix& feat : c.features) {
    for (int t = 0; t < feat.rows; ++t) {
      CHECK(row_matches_some_prototype(c, feat.row(t)));
    }
  }
}

TEST_CASE("latin utterances are words of 2 to 5 letters") {
  SynthTaskSpec spec = small_spec();
  spec.cjk_chars = 0;
  spec.utterances = 30;
  const SynthCorpus c = synth_generate(spec);
  for (const auto& text : c.texts) {
    REQUIRE(!text.empty());
    CHECK(text.front() != ' ');
    CHECK(text.back() != ' ');
    int letters = 0;
    int word = 0;
    for (size_t i = 0; i < text.size(); ++i) {
      if (text[i] == ' ') {
        CHECK(word >= 1);
        word = 0;
        CHECK(text[i - 1] != ' ');
      } else {
        letters += 1;
        word += 1;
        CHECK(word <= 5);
      }
    }
    CHECK(letters >= spec.min_length);
    CHECK(letters <= spec.max_length);
  }
}

TEST_CASE("mixed specs produce both languages") {
  SynthTaskSpec spec = small_spec();
  spec.utterances = 60;
  const SynthCorpus c = synth_generate(spec);
  int cjk = 0;
  for (bool b : c.is_cjk) cjk += b ? 1 : 0;
  CHECK(cjk > 5);
  CHECK(cjk < 55);
}

TEST_CASE("spec validation rejects out-of-range fields") {
  SynthTaskSpec spec = small_spec();
  spec.latin_chars = 27;
  CHECK_THROWS_AS(synth_generate(spec), ConfigError);
  spec = small_spec();
  spec.min_phones = 0;
  CHECK_THROWS_AS(synth_generate(spec), ConfigError);
  spec = small_spec();
  spec.min_length = 9;
  spec.max_length = 3;
  CHECK_THROWS_AS(synth_generate(spec), ConfigError);
  spec = small_spec();
  spec.noise_sigma = -0.5;
  CHECK_THROWS_AS(synth_generate(spec), ConfigError);
  spec = small_spec();
  spec.latin_chars = 0;
  spec.cjk_chars = 1;
  spec.homophone_rate = 0.5;
  CHECK_THROWS_AS(synth_generate(spec), ConfigError);
  spec = small_spec();
  spec.latin_chars = 0;
  spec.cjk_chars = 0;
  CHECK_THROWS_AS(synth_generate(spec), ConfigError);
}

TEST_CASE("feature files round trip through single precision") {
  TempDir tmp;
  const SynthCorpus c = synth_generate(small_spec());
  const std::string path = tmp.file("feat.bvqf");
  save_features(c.features, path);
  const std::vector<DenseMatrix> loaded = load_features(path);
  REQUIRE(loaded.size() == c.features.size());
  for (size_t u = 0; u < loaded.size(); ++u) {
    REQUIRE(loaded[u].rows == c.features[u].rows);
    REQUIRE(loaded[u].cols == c.features[u].cols);
    for (size_t i = 0; i < loaded[u].data.size(); ++i) {
      CHECK(loaded[u].data[i] == double(float(c.features[u].data[i])));
    }
  }
}

TEST_CASE("empty feature lists are representable") {
  TempDir tmp;
  const std::string path = tmp.file("feat.bvqf");
  save_features({}, path);
  CHECK(load_features(path).empty());
}

TEST_CASE("feature loader rejects damaged files") {
  TempDir tmp;
  const SynthCorpus c = synth_generate(small_spec());
  const std::string path = tmp.file("feat.bvqf");
  save_features(c.features, path);

  SUBCASE("wrong magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOPE", 4);
    f.close();
    try {
      load_features(path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("not a feature file") != std::string::npos);
    }
  }
  SUBCASE("truncation") {
    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(content.data(), std::streamsize(content.size() - 6));
    out.close();
    CHECK_THROWS_AS(load_features(path), DataError);
  }
  SUBCASE("trailing garbage") {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.write("xx", 2);
    out.close();
    CHECK_THROWS_AS(load_features(path), DataError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_features(tmp.file("absent.bvqf")), InputError);
  }
}

TEST_CASE("text lines round trip and reject invalid utf-8 by line") {
  TempDir tmp;
  const std::string path = tmp.file("lines.txt");
  const std::vector<std::vector<uint32_t>> lines = {
      {0x61, 0x20, 0x62}, {}, {0x4E2D, 0x6587}};
  save_text_lines(lines, path);
  CHECK(load_text_lines(path) == lines);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "ok\n\xFF\xFE\n";
  out.close();
  try {
    load_text_lines(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("lexicon files list one entry per character") {
  TempDir tmp;
  const SynthCorpus c = synth_generate(small_spec());
  const std::string path = tmp.file("lexicon.txt");
  save_lexicon(c, path);
  std::ifstream in(path);
  std::string line;
  size_t count = 0;
  while (std::getline(in, line)) {
    REQUIRE(line.rfind("U+", 0) == 0);
    count += 1;
  }
  CHECK(count == c.charset.size());
}
