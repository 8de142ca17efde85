#include <gtest/gtest.h>

#include "pbl/error.hpp"
#include "pbl/reserved_tokens.hpp"
#include "pbl/tokenizer.hpp"
#include "test_support.hpp"

namespace pbl {
namespace {

using testing::TempDir;

const std::vector<std::string> kCorpus = {
    "The movie was great, truly great.",
    "the plot was dull",
    "Great acting; dull script!",
};

TEST(Tokenizer, ReservedTokensHaveFixedIds) {
  const auto t = Tokenizer::build(kCorpus);
  EXPECT_EQ(t.token(0), "<bos>");
  EXPECT_EQ(t.token(1), "<pad>");
  EXPECT_EQ(t.token(2), "<unk>");
  EXPECT_EQ(t.encode("negative"), std::vector<int>{kNegativeId});
  EXPECT_EQ(t.encode("neutral"), std::vector<int>{kNeutralId});
  EXPECT_EQ(t.encode("Positive"), std::vector<int>{kPositiveId});
}

TEST(Tokenizer, ReservedWordsInCorpusAreNotDuplicated) {
  const std::vector<std::string> corpus = {"positive positive negative words"};
  const auto t = Tokenizer::build(corpus);
  EXPECT_EQ(t.size(), kReservedTokens + 1);
  EXPECT_EQ(t.token(kReservedTokens), "words");
}

TEST(Tokenizer, OutOfVocabularyMapsToUnk) {
  const auto t = Tokenizer::build(kCorpus);
  EXPECT_EQ(t.encode("zyzzyva"), std::vector<int>{kUnkId});
  EXPECT_EQ(t.id_of("zyzzyva"), kUnkId);
}

TEST(Tokenizer, SplitsLowercasedWordsAndPunctuation) {
  EXPECT_EQ(Tokenizer::split("Don't STOP, now!"), (std::vector<std::string>{"don't", "stop", ",", "now", "!"}));
  EXPECT_EQ(Tokenizer::split("  \t "), std::vector<std::string>{});
  EXPECT_EQ(Tokenizer::split("review : ok"), (std::vector<std::string>{"review", ":", "ok"}));
}

TEST(Tokenizer, OrdersByFrequencyThenLexicographically) {
  const auto t = Tokenizer::build(kCorpus);
  // great x3, dull x2, the x2, was x2, then singletons alphabetically.
  EXPECT_EQ(t.token(6), "great");
  EXPECT_EQ(t.token(7), "dull");
  EXPECT_EQ(t.token(8), "the");
  EXPECT_EQ(t.token(9), "was");
  EXPECT_EQ(t.token(10), "!");
  EXPECT_EQ(t.token(11), ",");
}

TEST(Tokenizer, CapLimitsVocabulary) {
  const auto t = Tokenizer::build(kCorpus, 8);
  EXPECT_EQ(t.size(), 8);
  EXPECT_EQ(t.id_of("the"), kUnkId);
  EXPECT_THROW(Tokenizer::build(kCorpus, 5), Error);
}

TEST(Tokenizer, EmptyCorpusIsDataError) {
  try {
    Tokenizer::build(std::vector<std::string>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
}

TEST(Tokenizer, SameCorpusGivesIdenticalVocabularyFiles) {
  TempDir dir;
  Tokenizer::build(kCorpus).save(dir / "a.txt");
  Tokenizer::build(kCorpus).save(dir / "b.txt");
  EXPECT_EQ(testing::read_file(dir / "a.txt"), testing::read_file(dir / "b.txt"));
  EXPECT_EQ(Tokenizer::build(kCorpus).fingerprint(), Tokenizer::build(kCorpus).fingerprint());
}

TEST(Tokenizer, FileRoundTripPreservesIds) {
  TempDir dir;
  const auto t = Tokenizer::build(kCorpus);
  t.save(dir / "vocab.txt");
  const auto u = Tokenizer::load(dir / "vocab.txt");
  EXPECT_EQ(u.tokens(), t.tokens());
  EXPECT_EQ(u.fingerprint(), t.fingerprint());
  // line number = id
  const auto text = testing::read_file(dir / "vocab.txt");
  EXPECT_EQ(text.substr(0, 6), "<bos>\n");
}

TEST(Tokenizer, EncodeDecodeIsIdentityInVocabulary) {
  const auto t = Tokenizer::build(kCorpus);
  const std::string text = "the movie was great , truly dull !";
  const auto ids = t.encode(text);
  EXPECT_EQ(t.decode(ids), text);
  EXPECT_EQ(t.encode(t.decode(ids)), ids);
  EXPECT_EQ(t.encode(text), t.encode(text));
}

TEST(Tokenizer, LoadRejectsMissingReservedPrefix) {
  TempDir dir;
  testing::write_file(dir / "v.txt", "<bos>\n<pad>\n<unk>\nnegative\npositive\nneutral\n");
  try {
    Tokenizer::load(dir / "v.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
  }
}

}  // namespace
}  // namespace pbl
