#include <gtest/gtest.h>

#include <cmath>

#include "gadkit/exact.hpp"
#include "gadkit/metrics.hpp"
#include "support/oracle.hpp"

namespace gadkit {
namespace {

using testing::binary_grammar;
using testing::binary_model;

const Grammar& all_binary_strings() {
  static const Grammar g = parse_bnf("S ::= \"\" | \"0\" S | \"1\" S\n");
  return g;
}

// Stops within two tokens, so nothing is lost beyond a bound of 2.
const TableModel& stopping_model() {
  static const TableModel m(binary_model().vocabulary(), {0.0, 0.0, 1.0},
                            {{TokenSeq{}, {0.3, 0.3, 0.4}}, {TokenSeq{0}, {0.2, 0.3, 0.5}}, {TokenSeq{1}, {0.1, 0.1, 0.8}}});
  return m;
}

// GCD law by brute force: walk every sequence, renormalizing over tokens whose
// text keeps the string a prefix of some sentence (per the bounded language).
std::map<TokenSeq, double> brute_force_gcd(const TokenModel& m, const testing::LanguageOracle& lang, std::size_t bound) {
  std::map<TokenSeq, double> out;
  const Vocabulary& v = m.vocabulary();
  TokenSeq prefix;
  std::function<void(double)> rec = [&](double mass) {
    const std::string text = v.detokenize(prefix);
    const auto p = next_distribution(m, prefix);
    std::vector<double> w(p.size(), 0.0);
    double z = 0.0;
    for (TokenId t = 0; t < v.size(); ++t) {
      const bool ok = t == v.eos() ? lang.accepts(text) : lang.is_prefix(text + v.text(t));
      if (ok) w[t] = p[t];
      z += w[t];
    }
    for (TokenId t = 0; t < v.size(); ++t) {
      if (w[t] == 0.0) continue;
      if (t == v.eos()) {
        out[prefix] += mass * w[t] / z;
      } else if (prefix.size() < bound) {
        prefix.push_back(t);
        rec(mass * w[t] / z);
        prefix.pop_back();
      }
    }
  };
  rec(1.0);
  return out;
}

TEST(EnumerateQ, AllStringsIsTheModel) {
  const auto q = enumerate_q(stopping_model(), all_binary_strings(), 2);
  EXPECT_NEAR(q.normalizer, 1.0, 1e-12);
  EXPECT_EQ(q.support.size(), 7u);
  for (const auto& [seq, m] : q.support) {
    TokenSeq s = seq;
    s.push_back(2);
    EXPECT_NEAR(m.prob, std::exp(sequence_logprob(stopping_model(), s)), 1e-15);
  }
  EXPECT_EQ(q.tail_mass, 0.0);
}

TEST(EnumerateQ, BinaryFixtureSupport) {
  const auto q = enumerate_q(binary_model(), binary_grammar(), 6);
  // "00000" plus every length-5 string starting with '1'.
  EXPECT_EQ(q.support.size(), 17u);
  double total = 0.0;
  for (const auto& [seq, m] : q.support) {
    EXPECT_TRUE(accepts(binary_grammar(), m.text)) << m.text;
    EXPECT_EQ(m.text.size(), 5u);
    total += m.prob;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_GT(q.normalizer, 0.0);
  EXPECT_LE(q.normalizer, 1.0);
  EXPECT_NEAR(q.efg.at(TokenSeq{}), q.normalizer, 1e-15);
}

TEST(EnumerateQ, EfgOfForcedPrefix) {
  const auto q = enumerate_q(binary_model(), binary_grammar(), 6);
  const double p_eos = 1e-30 / (1.0 + 1e-30);
  EXPECT_NEAR(q.efg.at(TokenSeq{0, 0, 0, 0}) / (0.45 * p_eos), 1.0, 1e-12);
  EXPECT_NEAR(q.edge_efg(TokenSeq{0, 0, 0, 0}, 0) / p_eos, 1.0, 1e-12);
  EXPECT_EQ(q.edge_efg(TokenSeq{0, 0, 0, 0}, 1), 0.0);
  EXPECT_EQ(q.edge_efg(TokenSeq{0, 0, 0, 0, 0}, 2), 1.0);
  EXPECT_EQ(q.edge_efg(TokenSeq{0, 0, 0, 0}, 2), 0.0);
}

TEST(EnumerateQ, JointMassMatchesSequenceLogprob) {
  const auto q = enumerate_q(binary_model(), binary_grammar(), 6);
  const auto& m = q.support.at(TokenSeq{0, 0, 0, 0, 0});
  EXPECT_NEAR(m.log_p, sequence_logprob(binary_model(), TokenSeq{0, 0, 0, 0, 0, 2}), 1e-12);
}

TEST(EnumerateQ, AgreesWithBruteForce) {
  struct Case {
    Grammar g;
    std::shared_ptr<TokenModel> m;
    std::size_t bound;
  };
  const Vocabulary v({"a", "b", "ab", "<eos>"}, 3);
  std::vector<Case> cases;
  cases.push_back({binary_grammar(), std::make_shared<TableModel>(binary_model()), 6});
  cases.push_back({parse_bnf("S ::= \"a\" T | \"b\" | \"\"\nT ::= \"ab\" | \"b\" | \"ba\" | \"bab\"\n"),
                   std::make_shared<NGramModel>(train_ngram(v, {{0, 1}, {2, 2}, {1}}, 2, 0.3)), 4});
  for (const auto& c : cases) {
    const testing::LanguageOracle lang{testing::bounded_language(c.g, 16)};
    double c_brute = 0.0;
    const auto brute = testing::brute_force_q(*c.m, lang, c.bound, &c_brute);
    const auto q = enumerate_q(*c.m, c.g, c.bound);
    EXPECT_NEAR(q.normalizer, c_brute, 1e-12);
    ASSERT_EQ(q.support.size(), brute.size());
    for (const auto& [seq, p] : brute) EXPECT_NEAR(q.probability(seq), p, 1e-12);
    const auto gcd = enumerate_gcd(*c.m, c.g, c.bound);
    const auto gcd_brute = brute_force_gcd(*c.m, lang, c.bound);
    for (const auto& [seq, p] : gcd_brute) EXPECT_NEAR(gcd.probability(seq), p, 1e-12);
  }
}

TEST(EnumerateQ, EfgRecursion) {
  const auto q = enumerate_q(binary_model(), binary_grammar(), 6);
  for (const auto& [prefix, c] : q.efg) {
    const auto p = next_distribution(binary_model(), prefix);
    double rec = 0.0;
    for (TokenId t = 0; t < 3; ++t) rec += p[t] * q.edge_efg(prefix, t);
    EXPECT_NEAR(rec, c, 1e-12);
  }
}

TEST(EnumerateQ, MassAccounting) {
  for (const char* f : {"binary", "sygus_bv2", "brackets"}) {
    const Grammar g = parse_bnf(detail::read_file(testing::fixture(std::string(f) + ".bnf")));
    std::unique_ptr<TokenModel> m;
    if (std::string(f) == "binary") {
      m = std::make_unique<TableModel>(binary_model());
    } else {
      m = std::make_unique<NGramModel>(load_ngram_model(testing::fixture(std::string(f) + ".json"), 3, 0.05));
    }
    const auto q = enumerate_q(*m, g, 64);
    EXPECT_NEAR(q.normalizer, 1.0 - q.dead_mass - q.tail_mass, 1e-12) << f;
    const auto gcd = enumerate_gcd(*m, g, 64);
    double total = 0.0;
    for (const auto& [seq, s] : gcd.support) total += s.prob;
    EXPECT_NEAR(total, 1.0, 1e-9) << f;
  }
}

TEST(EnumerateQ, TailMassRejected) {
  try {
    enumerate_q(binary_model(), all_binary_strings(), 3);
    FAIL();
  } catch (const TailMassError& e) {
    EXPECT_GT(e.residual(), 1e-12);
    EXPECT_NE(std::string(e.what()).find("tail mass"), std::string::npos);
  }
  EXPECT_THROW(enumerate_gcd(binary_model(), all_binary_strings(), 3), TailMassError);
  // A loose tolerance accepts the same instance.
  EXPECT_NO_THROW(enumerate_q(binary_model(), all_binary_strings(), 3, 1.0));
}

TEST(EnumerateGcd, SingleSentenceIsPointMass) {
  const auto g = enumerate_gcd(binary_model(), parse_bnf("S ::= \"0110\"\n"), 6);
  ASSERT_EQ(g.support.size(), 1u);
  EXPECT_EQ(g.support.begin()->second.prob, 1.0);
}

TEST(EnumerateGcd, ZerosSentenceGetsRootSplit) {
  const auto g = enumerate_gcd(binary_model(), binary_grammar(), 6);
  // After '0' every step is forced, so the sentence keeps P(0)/(P(0)+P(1)).
  EXPECT_NEAR(g.probability(TokenSeq{0, 0, 0, 0, 0}), 0.45 / (0.45 + 0.45), 1e-12);
}

TEST(EnumerateGcd, AllStringsIsTheModel) {
  const auto g = enumerate_gcd(stopping_model(), all_binary_strings(), 2);
  const auto q = enumerate_q(stopping_model(), all_binary_strings(), 2);
  for (const auto& [seq, m] : q.support) EXPECT_NEAR(g.probability(seq), m.prob, 1e-15);
}

TEST(ExactKl, SelfIsZero) {
  const auto q = enumerate_q(binary_model(), binary_grammar(), 6);
  EXPECT_EQ(exact_kl(q, q), 0.0);
}

TEST(ExactKl, ConstantOffsetIdentity) {
  const auto q = enumerate_q(binary_model(), binary_grammar(), 6);
  const auto gcd = enumerate_gcd(binary_model(), binary_grammar(), 6);
  const auto p = q.model_restricted();
  EXPECT_NEAR(exact_kl(gcd, p) - exact_kl(gcd, q), -std::log(q.normalizer), 1e-9);
  EXPECT_NEAR(exact_kl(q, p) - exact_kl(q, q) + std::log(q.normalizer), 0.0, 1e-9);
  EXPECT_GT(exact_kl(gcd, q), 1.0);
}

TEST(ExactKl, SupportViolation) {
  const auto a = enumerate_gcd(binary_model(), parse_bnf("S ::= \"0110\"\n"), 6);
  const auto b = enumerate_gcd(binary_model(), parse_bnf("S ::= \"0111\"\n"), 6);
  EXPECT_THROW(exact_kl(a, b), SupportError);
}

TEST(Enumerate, Errors) {
  EXPECT_THROW(enumerate_q(binary_model(), parse_bnf("S ::= S\n"), 5), UsageError);
  EXPECT_THROW(enumerate_q(binary_model(), binary_grammar(), 6, -1.0), UsageError);
  // Only "101" is allowed and the model never stops there.
  EXPECT_THROW(enumerate_q(binary_model(), parse_bnf("S ::= \"101\"\n"), 6), UsageError);
}

}  // namespace
}  // namespace gadkit
