// Release gate: one PASS/FAIL line per acceptance criterion. Exits nonzero if
// any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

#include "gadkit/cli.hpp"
#include "support/oracle.hpp"

namespace {

using namespace gadkit;
using gadkit::testing::binary_grammar;
using gadkit::testing::binary_model;
using gadkit::testing::fixture;

struct Fixture {
  std::string name;
  Grammar grammar;
  std::shared_ptr<TokenModel> model;
};

std::vector<Fixture> fixtures() {
  std::vector<Fixture> out;
  out.push_back({"binary", binary_grammar(), std::make_shared<TableModel>(binary_model())});
  for (const char* f : {"sygus_bv2", "brackets"}) {
    out.push_back({f, parse_bnf(detail::read_file(fixture(std::string(f) + ".bnf"))),
                   std::make_shared<NGramModel>(load_ngram_model(fixture(std::string(f) + ".json"), 3, 0.05))});
  }
  return out;
}

DecodeConfig config(std::uint64_t seed, std::uint64_t iterations) {
  DecodeConfig c;
  c.seed = seed;
  c.iterations = iterations;
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <typename Fn>
void criterion(int id, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// 1. Recognizer against the derivation-enumeration oracle on every string of
// length <= 8. A string with a dead proper prefix is dead for both sides
// (checked on the first dead character), so the search only extends live ones.
void parser_correctness() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t checked = 0, mismatches = 0;
  for (const auto& f : fixtures()) {
    // Every fixture language is finite, so a generous bound gives all of it.
    const gadkit::testing::LanguageOracle lang{gadkit::testing::bounded_language(f.grammar, 512)};
    const std::string& alphabet = f.grammar.alphabet();
    std::string s;
    std::function<void(const RecognizerState&)> rec = [&](const RecognizerState& state) {
      ++checked;
      if (accepts(f.grammar, s) != lang.accepts(s) || state.complete() != lang.accepts(s) ||
          state.alive() != lang.is_prefix(s) || is_prefix(f.grammar, s) != lang.is_prefix(s)) {
        ++mismatches;
      }
      if (!state.alive() || s.size() == 8) return;
      // Characters outside the alphabet are dead from any state.
      s.push_back('\x01');
      ++checked;
      if (is_prefix(f.grammar, s) || lang.is_prefix(s)) ++mismatches;
      s.pop_back();
      for (char c : alphabet) {
        s.push_back(c);
        rec(advance(state, c));
        s.pop_back();
      }
    };
    rec(init_state(f.grammar));
  }
  const double t = seconds_since(start);
  report(1, mismatches == 0 && t < 30.0,
         std::to_string(checked) + " strings, " + std::to_string(mismatches) + " mismatches, " + fmt("%.1f s", t));
}

double max_gap(const SamplerTrie& trie, const ExactDistribution& q) {
  double gap = -1.0;
  trie.for_each_expanded([&](std::span<const TokenId> p, const TrieNode& n) {
    for (TokenId t = 0; t < trie.vocabulary().size(); ++t) {
      gap = std::max(gap, std::exp(n.log_ctilde[t]) - q.edge_efg(p, t));
    }
  });
  return gap;
}

double min_gap(const SamplerTrie& trie, const ExactDistribution& q) {
  double gap = 1.0;
  trie.for_each_expanded([&](std::span<const TokenId> p, const TrieNode& n) {
    for (TokenId t = 0; t < trie.vocabulary().size(); ++t) {
      gap = std::min(gap, std::exp(n.log_ctilde[t]) - q.edge_efg(p, t));
    }
  });
  return gap;
}

// 2 and 3 share one 2,000-iteration ASAp run on the binary fixture.
void asap_properties() {
  const auto start = std::chrono::steady_clock::now();
  const auto& m = binary_model();
  const auto& g = binary_grammar();
  const auto q = enumerate_q(m, g, 6);
  SamplerTrie trie(g, m.vocabulary());
  std::size_t violations = 0;
  double worst = 1.0;
  std::int64_t converged_at = -1;
  const auto traces = run_asap(m, g, config(17, 2000), trie, [&](const SampleTrace& trace) {
    const double lo = min_gap(trie, q);
    worst = std::min(worst, lo);
    if (lo < -1e-12) ++violations;
    if (converged_at < 0 && max_gap(trie, q) < 1e-6) converged_at = static_cast<std::int64_t>(trace.iteration);
  });
  const double t = seconds_since(start);
  report(2, violations == 0,
         std::to_string(violations) + " iterations with c~ - c < -1e-12 (min " + fmt("%.3g", worst) + ")");

  const std::vector<SampleTrace> late(traces.end() - 500, traces.end());
  const double tv = empirical_tv(late, q);
  report(3, converged_at >= 0 && tv < 0.05 && t < 120.0,
         "max gap < 1e-6 at iteration " + std::to_string(converged_at) + fmt(", late TV %.4f, %.1f s", tv, t));
}

// 4. GCD keeps the root split for "00000"; Q gives it almost nothing.
void gcd_bias() {
  const auto& m = binary_model();
  const auto& g = binary_grammar();
  const auto q = enumerate_q(m, g, 6);
  const auto gcd = enumerate_gcd(m, g, 6);
  const TokenSeq zeros{0, 0, 0, 0, 0};
  const auto root = next_distribution(m, TokenSeq{});
  const double split = root[0] / (root[0] + root[1]);
  const double g0 = gcd.probability(zeros);
  const double q0 = q.probability(zeros);
  const auto traces = run_gcd(m, g, config(17, 2000));
  double hits = 0.0;
  for (const auto& tr : traces) hits += tr.text == "00000";
  const double freq = hits / 2000.0;
  const double sigma = std::sqrt(g0 * (1.0 - g0) / 2000.0);
  const bool ok = std::fabs(g0 - split) < 1e-12 && q0 < 1e-4 && std::fabs(freq - g0) <= 3.0 * sigma;
  report(4, ok, fmt("GCD oracle %.6f (P(0)=%.2f, renormalized %.4f), Q %.3g", g0, root[0], split, q0) +
                    fmt(", empirical %.4f within %.4f", freq, 3.0 * sigma));
}

// 5. exact_kl(D||P) - exact_kl(D||Q) + log C = 0.
void kl_identity() {
  const auto& m = binary_model();
  const auto& g = binary_grammar();
  const auto q = enumerate_q(m, g, 6);
  const auto gcd = enumerate_gcd(m, g, 6);
  const auto p = q.model_restricted();
  double worst = 0.0;
  for (const auto* d : {&gcd, &q}) {
    worst = std::max(worst, std::fabs(exact_kl(*d, p) - exact_kl(*d, q) + q.log_normalizer));
  }
  report(5, worst < 1e-9, fmt("max residual %.3g", worst));
}

// 6. ASAp's windowed KL drops; GCD's stays at its exact value.
void window_kl() {
  const auto& m = binary_model();
  const auto& g = binary_grammar();
  SamplerTrie trie(g, m.vocabulary());
  const auto asap = kl_series(run_asap(m, g, config(17, 2000), trie), 500);
  const bool drop = asap.back() <= asap.front() - 0.1;

  const auto gcd_exact = enumerate_gcd(m, g, 6);
  const double kl = exact_kl(gcd_exact, gcd_exact.model_restricted());
  double second = 0.0;
  for (const auto& [seq, s] : gcd_exact.support) second += s.prob * std::pow(s.log_prob - s.log_p - kl, 2);
  const double sigma = std::sqrt(second / 500.0);
  const auto gcd = kl_series(run_gcd(m, g, config(17, 2000)), 500);
  double worst = 0.0;
  for (std::size_t k = 0; k < gcd.size(); k += 500) worst = std::max(worst, std::fabs(gcd[k] - kl));
  worst = std::max(worst, std::fabs(gcd.back() - kl));
  report(6, drop && worst <= 3.0 * sigma,
         fmt("ASAp first %.4f last %.4f; GCD max |window - %.4f| = %.4f", asap.front(), asap.back(), kl, worst) +
             fmt(" (3 sigma %.4f)", 3.0 * sigma));
}

// 7. With an empty trie the ASAp weights are the GCD weights.
void gcd_equals_first_asap() {
  std::size_t cases = 0, differ = 0;
  for (const auto& f : fixtures()) {
    for (std::uint64_t seed : {0, 1, 17, 12345}) {
      const auto cfg = config(seed, 1);
      SamplerTrie trie(f.grammar, f.model->vocabulary());
      const auto a = sample_asap(*f.model, f.grammar, cfg, trie);
      const auto b = sample_gcd(*f.model, f.grammar, cfg, 0);
      ++cases;
      if (a.tokens != b.tokens || a.log_q != b.log_q) ++differ;
    }
  }
  report(7, differ == 0, std::to_string(cases) + " first samples, " + std::to_string(differ) + " differ");
}

// 8. Every GCD and ASAp sample is a sentence, per the oracle language.
void grammaticality() {
  std::size_t samples = 0, bad = 0;
  for (const auto& f : fixtures()) {
    const gadkit::testing::LanguageOracle lang{gadkit::testing::bounded_language(f.grammar, 512)};
    for (std::uint64_t seed : {0, 1, 17}) {
      SamplerTrie trie(f.grammar, f.model->vocabulary());
      auto traces = run_asap(*f.model, f.grammar, config(seed, 500), trie);
      const auto gcd = run_gcd(*f.model, f.grammar, config(seed, 500));
      traces.insert(traces.end(), gcd.begin(), gcd.end());
      for (const auto& t : traces) {
        ++samples;
        if (!t.grammatical || !lang.accepts(t.text)) ++bad;
      }
    }
  }
  report(8, bad == 0, std::to_string(samples) + " samples, " + std::to_string(bad) + " ungrammatical");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 9. Through the CLI: 1,000 + save + load + 1,000 equals 2,000 straight.
void persistence() {
  const auto dir = std::filesystem::temp_directory_path() / "gadkit_acceptance";
  std::filesystem::create_directories(dir);
  auto path = [&](const char* name) { return (dir / name).string(); };
  RunConfig rc;
  rc.grammar_path = fixture("binary.bnf");
  rc.model_spec = "table:" + fixture("binary.json");
  rc.decoder = "asap";
  rc.seed = 17;
  rc.iterations = 2000;
  rc.output = path("straight.jsonl");
  cmd_run(rc);
  rc.iterations = 1000;
  rc.output = path("first.jsonl");
  rc.trie_out = path("trie.json");
  cmd_run(rc);
  rc.output = path("second.jsonl");
  rc.trie_in = path("trie.json");
  rc.trie_out.clear();
  cmd_run(rc);
  const std::string straight = slurp(path("straight.jsonl"));
  const std::string resumed = slurp(path("first.jsonl")) + slurp(path("second.jsonl"));
  report(9, !straight.empty() && straight == resumed,
         std::to_string(straight.size()) + " bytes straight, " + std::to_string(resumed.size()) + " resumed, " +
             (straight == resumed ? "identical" : "different"));
}

// 10. Rejection samples follow Q, and attempts per sample match 1 / C.
void rejection() {
  const auto& m = binary_model();
  const auto& g = binary_grammar();
  const auto q = enumerate_q(m, g, 6);
  const auto traces = run_rejection(m, g, config(17, 2000));
  const double tv = empirical_tv(traces, q);
  double attempts = 0.0;
  for (const auto& t : traces) attempts += static_cast<double>(t.attempts);
  const double c = q.normalizer;
  const double n = static_cast<double>(traces.size());
  // Total attempts for n successes is negative binomial.
  const double mean = n / c;
  const double sigma = std::sqrt(n * (1.0 - c)) / c;
  const double rate = n / attempts;
  report(10, tv < 0.05 && std::fabs(attempts - mean) <= 3.0 * sigma,
         fmt("TV %.4f, acceptance %.4f vs C %.4f (attempts %.0f", tv, rate, c, attempts) +
             fmt(", expected %.0f +- %.0f)", mean, 3.0 * sigma));
}

}  // namespace

int main() {
  criterion(1, parser_correctness);
  criterion(2, asap_properties);  // also reports 3
  criterion(4, gcd_bias);
  criterion(5, kl_identity);
  criterion(6, window_kl);
  criterion(7, gcd_equals_first_asap);
  criterion(8, grammaticality);
  criterion(9, persistence);
  criterion(10, rejection);
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
