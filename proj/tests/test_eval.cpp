#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cap/error.hpp"
#include "cap/eval.hpp"
#include "oracles.hpp"

namespace cap::eval {
namespace {

DocumentSet random_corpus(std::mt19937_64& rng) {
  const std::vector<std::string> words = {"the", "cat", "sat", "on", "a", "mat", ",", "dog", "ran", "home", "."};
  DocumentSet docs(1 + rng() % 4);
  for (auto& doc : docs) {
    for (auto s = 1 + rng() % 3; s > 0; --s) {
      std::string sentence;
      for (auto w = 1 + rng() % 9; w > 0; --w) sentence += words[rng() % words.size()] + " ";
      doc.push_back(sentence);
    }
  }
  return docs;
}

TEST(Tokenize, SeparatesPunctuation) {
  EXPECT_EQ(tokenize("Hello, world!", "en"), (std::vector<std::string>{"Hello", ",", "world", "!"}));
  EXPECT_EQ(tokenize("你好，世界", "zh"), (std::vector<std::string>{"你", "好", "，", "世", "界"}));
}

TEST(DBleu, IdentityIsHundred) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto h = random_corpus(rng);
    ASSERT_DOUBLE_EQ(d_bleu(h, h), 100.0);
  }
}

TEST(DBleu, NoSharedTokensIsZero) {
  EXPECT_EQ(d_bleu({{"a b c d"}}, {{"w x y z"}}), 0.0);
}

TEST(DBleu, MatchesIndependentOracle) {
  const DocumentSet hyp = {{"The cat sat on the mat.", "It was happy."}, {"A dog ran home quickly."}};
  const DocumentSet ref = {{"The cat sat on a mat.", "It was very happy."}, {"The dog ran home."}};
  const double expected = cap::testing::oracle_bleu({"The cat sat on the mat. It was happy.", "A dog ran home quickly."},
                                                    {"The cat sat on a mat. It was very happy.", "The dog ran home."});
  EXPECT_NEAR(d_bleu(hyp, ref), expected, 0.1);
  EXPECT_NEAR(d_bleu(hyp, ref), 48.4597, 1e-3);
}

TEST(DBleu, RandomCorporaMatchOracle) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto h = random_corpus(rng);
    auto r = random_corpus(rng);
    r.resize(h.size(), {"the cat"});
    std::vector<std::string> hj, rj;
    for (const auto& d : h) hj.push_back(join_document(d));
    for (const auto& d : r) rj.push_back(join_document(d));
    ASSERT_NEAR(d_bleu(h, r), cap::testing::oracle_bleu(hj, rj), 1e-9);
  }
}

TEST(DBleu, SentenceBoundariesDoNotMatter) {
  const DocumentSet ref = {{"one two three four five six"}};
  EXPECT_DOUBLE_EQ(d_bleu({{"one two", "three four five"}}, ref), d_bleu({{"one two three", "four five"}}, ref));
}

TEST(DBleu, PermutationInvariant) {
  std::mt19937_64 rng(3);
  auto h = random_corpus(rng);
  auto r = random_corpus(rng);
  r.resize(h.size(), {"a mat"});
  const double base = d_bleu(h, r);
  std::reverse(h.begin(), h.end());
  std::reverse(r.begin(), r.end());
  EXPECT_NEAR(d_bleu(h, r), base, 1e-12);
  EXPECT_NEAR(chrf2(h, r), chrf2(std::vector(h.rbegin(), h.rend()), std::vector(r.rbegin(), r.rend())), 1e-12);
}

TEST(DBleu, Errors) {
  try {
    d_bleu({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyEvalSet);
  }
  try {
    d_bleu({{"a"}}, {{"a"}, {"b"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Alignment);
  }
}

TEST(Chrf, IdentityIsHundred) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto h = random_corpus(rng);
    ASSERT_DOUBLE_EQ(chrf2(h, h), 100.0);
  }
}

TEST(Chrf, DisjointIsZero) { EXPECT_EQ(chrf2({{"abc"}}, {{"xyz"}}), 0.0); }

TEST(Chrf, ToyCaseByHand) {
  // "abcd" vs "abce": orders 1..4 exist on both sides, orders 5 and 6 on neither.
  // Matches per order: 3/4, 2/3, 1/2, 0/1, so P = R = (3/4 + 2/3 + 1/2 + 0) / 4 = 23/48.
  EXPECT_NEAR(chrf2({{"abcd"}}, {{"abce"}}), 100.0 * 23.0 / 48.0, 1e-6);
}

TEST(Chrf, RecallWeighted) {
  // Hypothesis "ab" against "abcd": orders 1 and 2 are effective.
  // P = (1 + 1) / 2 = 1; R = (2/4 + 1/3) / 2 = 5/12; F2 = 5PR / (4P + R).
  const double p = 1.0, r = 5.0 / 12.0;
  EXPECT_NEAR(chrf2({{"ab"}}, {{"abcd"}}), 100.0 * 5 * p * r / (4 * p + r), 1e-9);
}

TEST(Chrf, WhitespaceIgnored) { EXPECT_DOUBLE_EQ(chrf2({{"a b c"}}, {{"abc"}}), 100.0); }

TEST(Zpt, WholeWordCaseInsensitive) {
  EXPECT_TRUE(contains_whole_word("His main research focuses", "his"));
  EXPECT_FALSE(contains_whole_word("whose", "who"));
  EXPECT_TRUE(contains_whole_word("(he) left", "He"));
  EXPECT_FALSE(contains_whole_word("Then", "he"));
}

TEST(Zpt, AccuracyAndAlignment) {
  const std::vector<ZptAnnotation> ann = {{"s", "r", {"His", "He"}}, {"s", "r", {"She"}}};
  EXPECT_DOUBLE_EQ(zpt_accuracy(std::vector<std::string>{"His work", "It is"}, ann), 0.5);
  EXPECT_DOUBLE_EQ(zpt_accuracy(std::vector<std::string>{"His work", "she is"}, ann), 1.0);
  try {
    zpt_accuracy(std::vector<std::string>{"x"}, ann);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Alignment);
  }
}

TEST(Zpt, ReadRejectsMultiTokenPronoun) {
  std::istringstream ok(R"({"source":"s","reference":"r","expected_pronouns":[" He "]})" "\n");
  EXPECT_EQ(read_zpt_annotations(ok)[0].expected_pronouns[0], "He");
  std::istringstream bad(R"({"source":"s","reference":"r","expected_pronouns":["he she"]})" "\n");
  EXPECT_THROW(read_zpt_annotations(bad), Error);
  std::istringstream empty(R"({"source":"s","reference":"r","expected_pronouns":[]})" "\n");
  EXPECT_THROW(read_zpt_annotations(empty), Error);
}

TEST(Report, TableHasStrategyRowsAndPairColumns) {
  EvalReport report;
  report.rows.push_back({"Zero-shot", "de-en", {12.5, 40.25, std::nullopt, 1, 2}});
  report.rows.push_back({"Ours", "de-en", {13.75, 41.0, 0.5, 1, 2}});
  const auto table = report.render_table();
  EXPECT_NE(table.find("Zero-shot"), std::string::npos);
  EXPECT_NE(table.find("de-en d-BLEU"), std::string::npos);
  EXPECT_NE(table.find("13.75"), std::string::npos);
  const auto j = report.to_json();
  EXPECT_FALSE(j["rows"][0].contains("zpt_accuracy"));
  EXPECT_TRUE(j["rows"][1].contains("zpt_accuracy"));
}

}  // namespace
}  // namespace cap::eval
