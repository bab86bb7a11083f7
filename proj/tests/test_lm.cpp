#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gadkit/lm.hpp"
#include "support/oracle.hpp"

namespace gadkit {
namespace {

using testing::binary_model;

Vocabulary bin_vocab() { return Vocabulary({"0", "1", "<eos>"}, 2); }

void expect_normalized(const std::vector<double>& p) {
  double s = 0.0;
  for (double v : p) {
    EXPECT_GE(v, 0.0);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-9);
}

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / ("gadkit_lm_" + name);
  std::ofstream(path) << content;
  return path.string();
}

TEST(Vocabulary, Validation) {
  EXPECT_THROW(Vocabulary({"a", "a", "<eos>"}, 2), UsageError);
  EXPECT_THROW(Vocabulary({"a", "", "<eos>"}, 2), UsageError);
  EXPECT_THROW(Vocabulary({"a", "b"}, 2), UsageError);
  EXPECT_THROW(Vocabulary({"a", "b"}, -1), UsageError);
  const auto v = bin_vocab();
  EXPECT_EQ(v.detokenize(TokenSeq{1, 0, 2}), "10");
  EXPECT_NE(v.fingerprint(), Vocabulary({"0", "1", "</s>"}, 2).fingerprint());
}

TEST(Vocabulary, LongestMatch) {
  const Vocabulary v({"a", "ab", "abc", "c", "<eos>"}, 4);
  EXPECT_EQ(tokenize_longest_match(v, "abcab"), (TokenSeq{2, 1}));
  EXPECT_EQ(tokenize_longest_match(v, "aac"), (TokenSeq{0, 0, 3}));
  EXPECT_THROW(tokenize_longest_match(v, "ax"), UsageError);
}

TEST(TableModel, RootVectorNormalized) {
  const auto p = next_distribution(binary_model(), TokenSeq{});
  expect_normalized(p);
  EXPECT_NEAR(p[0], 0.45, 1e-15);
  EXPECT_NEAR(p[1], 0.45, 1e-15);
  EXPECT_NEAR(p[2], 0.1, 1e-15);
}

TEST(TableModel, LoadRoundTripMatchesFile) {
  const auto j = detail::parse_json_file(testing::fixture("binary.json"));
  const auto& m = binary_model();
  for (const auto& [key, probs] : j.at("nodes").items()) {
    const auto p = next_distribution(m, detail::parse_prefix_key(key));
    const auto expected = probs.get<std::vector<double>>();
    double total = 0.0;
    for (double x : expected) total += x;
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], expected[i] / total, 1e-15) << key;
  }
  // An unlisted prefix gets the default vector.
  const auto d = next_distribution(m, TokenSeq{0, 1, 0, 1, 0, 1, 0});
  EXPECT_NEAR(d[2], 0.4, 1e-15);
}

TEST(TableModel, Errors) {
  EXPECT_THROW(load_table_model("/nonexistent/model.json"), IoError);
  const auto trunc = write_temp("trunc.json", R"({"vocab": ["a", "<eos>"], "eos": 1, "default": [0.5)");
  EXPECT_THROW(load_table_model(trunc), CorruptFileError);
  const auto bad_len = write_temp("badlen.json", R"({"vocab": ["a", "<eos>"], "eos": 1, "default": [1.0]})");
  EXPECT_THROW(load_table_model(bad_len), CorruptFileError);
  const auto neg = write_temp("neg.json", R"({"vocab": ["a", "<eos>"], "eos": 1, "default": [1.5, -0.5]})");
  EXPECT_THROW(load_table_model(neg), CorruptFileError);
  const auto& m = binary_model();
  EXPECT_THROW(m.next_logprobs(TokenSeq{0, 2}), UsageError);
  EXPECT_THROW(m.next_logprobs(TokenSeq{7}), UsageError);
}

TEST(NGram, UnigramHandCount) {
  // Corpus "11", "10": tokens seen 1,1,EOS,1,0,EOS.
  const auto m = train_ngram(bin_vocab(), {{1, 1}, {1, 0}}, 1, 1.0);
  const auto p = next_distribution(m, TokenSeq{});
  EXPECT_NEAR(p[1], 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(p[0], 2.0 / 9.0, 1e-15);
  EXPECT_NEAR(p[2], 3.0 / 9.0, 1e-15);
  // Order 1 ignores context.
  EXPECT_EQ(m.next_logprobs(TokenSeq{0, 0, 1}), m.next_logprobs(TokenSeq{}));
}

TEST(NGram, BigramContext) {
  const auto m = train_ngram(bin_vocab(), {{1, 1}, {1, 0}}, 2, 0.5);
  // After "1": next tokens seen are 1, EOS, 0 -> counts (1, 1, 1), total 3.
  const auto p = next_distribution(m, TokenSeq{1});
  EXPECT_NEAR(p[0], 1.5 / 4.5, 1e-15);
  // Sequence start: "1" twice.
  const auto s = next_distribution(m, TokenSeq{});
  EXPECT_NEAR(s[1], 2.5 / 3.5, 1e-15);
}

TEST(NGram, EmptyCorpusIsUniform) {
  const auto m = train_ngram(bin_vocab(), {}, 1, 1.0);
  for (double v : next_distribution(m, TokenSeq{0, 1})) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(NGram, PositivityAndNormalization) {
  const auto m = load_ngram_model(testing::fixture("sygus_bv2.json"), 3, 0.05);
  const auto n = static_cast<double>(m.vocabulary().size());
  TokenSeq prefix;
  for (TokenId t : {0, 1, 5, 9, 4, 12}) {
    const auto p = next_distribution(m, prefix);
    expect_normalized(p);
    for (double v : p) EXPECT_GT(v, 0.0);
    // Lower bound alpha / (total + alpha |V|) with total <= corpus size.
    for (double v : p) EXPECT_GE(v, 0.05 / (200.0 + 0.05 * n));
    prefix.push_back(t);
  }
}

TEST(NGram, Validation) {
  EXPECT_THROW(NGramModel(bin_vocab(), 0, 1.0), UsageError);
  EXPECT_THROW(NGramModel(bin_vocab(), 2, 0.0), UsageError);
  NGramModel m(bin_vocab(), 2, 1.0);
  EXPECT_THROW(m.observe(TokenSeq{0, 2}), UsageError);
}

TEST(SequenceLogprob, SingleEos) {
  const auto& m = binary_model();
  EXPECT_DOUBLE_EQ(sequence_logprob(m, TokenSeq{2}), std::log(0.1));
}

TEST(SequenceLogprob, UniformModel) {
  const TableModel m(bin_vocab(), {1.0, 1.0, 1.0}, {});
  for (std::size_t k = 1; k <= 6; ++k) {
    TokenSeq s(k - 1, 1);
    s.push_back(2);
    EXPECT_NEAR(sequence_logprob(m, s), static_cast<double>(k) * std::log(1.0 / 3.0), 1e-12);
  }
}

TEST(SequenceLogprob, SumOfStepsAndErrors) {
  const auto& m = binary_model();
  const TokenSeq s{1, 1, 1, 1, 1, 2};
  double expected = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    expected += std::log(next_distribution(m, TokenSeq(s.begin(), s.begin() + static_cast<long>(i)))[s[i]]);
  }
  EXPECT_NEAR(sequence_logprob(m, s), expected, 1e-12);
  EXPECT_THROW(sequence_logprob(m, TokenSeq{}), UsageError);
  EXPECT_THROW(sequence_logprob(m, TokenSeq{1, 0}), UsageError);
  EXPECT_THROW(sequence_logprob(m, TokenSeq{2, 1, 2}), UsageError);
}

TEST(SequenceLogprob, ZeroProbabilityIsNegInf) {
  // Under the fixture, the rare branch "10" has P(EOS) = 0.
  EXPECT_EQ(sequence_logprob(binary_model(), TokenSeq{1, 0, 2}), kNegInf);
}

}  // namespace
}  // namespace gadkit
