#include <string>
#include <vector>

#include "doctest.h"

#include "bytevq/numerics.hpp"
#include "bytevq/subword.hpp"
#include "bytevq/utf8.hpp"
#include "testutil.hpp"

using namespace bytevq;

namespace {

SymbolSeq bytes_of(const std::string& s) {
  SymbolSeq seq;
  for (unsigned char c : s) seq.push_back(static_cast<Symbol>(c));
  return seq;
}

}  // namespace

TEST_CASE("banana: first merge is (a, n) by the lowest-left-id tie break") {
  // Pair counts: (b,a)=1, (a,n)=2, (n,a)=2. The 2-2 tie goes to 'a' < 'n'.
  SubwordVocab vocab = bpe_train({bytes_of("banana")}, 256, 258);
  REQUIRE(vocab.merges.size() >= 1);
  CHECK(vocab.merges[0].left == 97);
  CHECK(vocab.merges[0].right == 110);
  CHECK(vocab.merges[0].merged == 257);  // 256 base + boundary
}

TEST_CASE("encode applies merges leftmost first") {
  SubwordVocab vocab;
  vocab.base_size = 256;
  vocab.merges.push_back({97, 97, 257});  // (a, a) -> aa
  const SymbolSeq encoded = bpe_encode(vocab, bytes_of("aaa"));
  CHECK(encoded == SymbolSeq{257, 97});
}

TEST_CASE("decode expands nested merges to base symbols") {
  SubwordVocab vocab;
  vocab.base_size = 256;
  vocab.merges.push_back({97, 97, 257});   // X = aa
  vocab.merges.push_back({257, 97, 258});  // Y = Xa
  CHECK(bpe_decode(vocab, {258}) == SymbolSeq{97, 97, 97});
}

TEST_CASE("boundary markers are never merged") {
  // Heavy (boundary, a) and (a, boundary) pressure; only (a,a) may merge.
  std::vector<SymbolSeq> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back({256, 97, 97, 256, 97, 97});
  SubwordVocab vocab = bpe_train(corpus, 256, 300);
  for (const MergeRule& rule : vocab.merges) {
    CHECK(rule.left != vocab.boundary());
    CHECK(rule.right != vocab.boundary());
  }
}

TEST_CASE("training stops early when the pair supply runs out") {
  SubwordVocab vocab = bpe_train({bytes_of("ab")}, 256, 500);
  CHECK(vocab.truncated);
  CHECK(vocab.size() < 500);
}

TEST_CASE("round trip identity on every corpus line") {
  Rng rng(31);
  std::vector<SymbolSeq> corpus;
  for (int i = 0; i < 40; ++i) {
    SymbolSeq seq = {256};
    const int len = 1 + rng.uniform_int(30);
    for (int j = 0; j < len; ++j) {
      if (rng.uniform01() < 0.1) {
        seq.push_back(256);  // boundary mid-sequence
      } else {
        seq.push_back(97 + rng.uniform_int(6));
      }
    }
    corpus.push_back(std::move(seq));
  }
  SubwordVocab vocab = bpe_train(corpus, 256, 290);
  for (const SymbolSeq& line : corpus) {
    CHECK(bpe_decode(vocab, bpe_encode(vocab, line)) == line);
  }
}

TEST_CASE("two runs produce identical merge tables") {
  std::vector<SymbolSeq> corpus = {bytes_of("the cat sat on the mat"),
                                   bytes_of("the bat and the rat")};
  SubwordVocab a = bpe_train(corpus, 256, 280);
  SubwordVocab b = bpe_train(corpus, 256, 280);
  REQUIRE(a.merges.size() == b.merges.size());
  for (size_t i = 0; i < a.merges.size(); ++i) {
    CHECK(a.merges[i].left == b.merges[i].left);
    CHECK(a.merges[i].right == b.merges[i].right);
    CHECK(a.merges[i].merged == b.merges[i].merged);
  }
}

TEST_CASE("merged tokens shorten the encoding") {
  std::vector<SymbolSeq> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back(bytes_of("abcabcabc"));
  SubwordVocab vocab = bpe_train(corpus, 256, 270);
  CHECK(bpe_encode(vocab, bytes_of("abcabcabc")).size() < 9);
}

TEST_CASE("encode rejects non-base symbols") {
  SubwordVocab vocab;
  vocab.base_size = 256;
  vocab.merges.push_back({97, 97, 257});
  CHECK_THROWS_AS(bpe_encode(vocab, {257}), InputError);
  CHECK_THROWS_AS(bpe_encode(vocab, {-1}), InputError);
  CHECK_THROWS_AS(bpe_decode(vocab, {258}), InputError);
}

TEST_CASE("byte corpus gives every word a leading boundary") {
  const std::vector<uint32_t> line = string_to_codepoints("ab cd");
  std::vector<SymbolSeq> corpus = byte_corpus_from_lines({line});
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0] == SymbolSeq{256, 97, 98, 256, 99, 100});
}

TEST_CASE("byte corpus treats an unspaced line as one segment") {
  const std::vector<uint32_t> line = {0x4E2D, 0x6587};
  std::vector<SymbolSeq> corpus = byte_corpus_from_lines({line});
  REQUIRE(corpus.size() == 1);
  // One boundary, then the UTF-8 bytes of both characters.
  SymbolSeq expect = {256};
  for (uint8_t b : utf8_encode(line)) expect.push_back(b);
  CHECK(corpus[0] == expect);
}

TEST_CASE("latent corpus gets one boundary per utterance") {
  std::vector<SymbolSeq> corpus = latent_corpus_from_streams({{3, 17, 3}, {}}, 32);
  REQUIRE(corpus.size() == 2);
  CHECK(corpus[0] == SymbolSeq{32, 3, 17, 3});
  CHECK(corpus[1] == SymbolSeq{32});
}

TEST_CASE("vocab survives a save/load round trip") {
  TempDir tmp;
  std::vector<SymbolSeq> corpus = {bytes_of("banana band bandana")};
  SubwordVocab vocab = bpe_train(corpus, 256, 270);
  const std::string path = tmp.file("vocab.bpe");
  save_vocab(vocab, path);
  SubwordVocab loaded = load_vocab(path);
  CHECK(loaded.base_size == vocab.base_size);
  CHECK(loaded.reserved == vocab.reserved);
  CHECK(loaded.truncated == vocab.truncated);
  REQUIRE(loaded.merges.size() == vocab.merges.size());
  for (size_t i = 0; i < vocab.merges.size(); ++i) {
    CHECK(loaded.merges[i].left == vocab.merges[i].left);
    CHECK(loaded.merges[i].right == vocab.merges[i].right);
    CHECK(loaded.merges[i].merged == vocab.merges[i].merged);
  }
  CHECK_THROWS_AS(load_vocab(tmp.file("missing.bpe")), DataError);
}

TEST_CASE("training rejects bad arguments") {
  CHECK_THROWS_AS(bpe_train({}, 256, 300), ConfigError);
  CHECK_THROWS_AS(bpe_train({{97}}, 256, 100), ConfigError);
  CHECK_THROWS_AS(bpe_train({{300}}, 256, 300), InputError);
}
