// Runs GCD and ASAp side by side on the five-character binary grammar and
// prints how often each ends in '1' against the exact answer.
#include <cstdio>
#include <string>

#include "gadkit/gadkit.hpp"

int main(int argc, char** argv) {
  using namespace gadkit;
  const std::string dir = argc > 1 ? argv[1] : GADKIT_FIXTURE_DIR;
  const Grammar grammar = parse_bnf(detail::read_file(dir + "/binary.bnf"));
  const TableModel model = load_table_model(dir + "/binary.json");

  const auto q = enumerate_q(model, grammar, 8);
  const Predicate ends_in_one = parse_predicate("ends_with:1");
  std::printf("exact: C = %.4f, P(ends in 1 | grammatical) = %.4f\n", q.normalizer, exact_expectation(q, ends_in_one));

  DecodeConfig config;
  config.seed = 17;
  config.iterations = 2000;
  const auto gcd = run_gcd(model, grammar, config);
  SamplerTrie trie(grammar, model.vocabulary());
  const auto asap = run_asap(model, grammar, config, trie);

  for (const auto& [name, traces] : {std::pair{"gcd", &gcd}, std::pair{"asap", &asap}}) {
    const auto kl = kl_series(*traces, 500);
    const std::vector<SampleTrace> late(traces->end() - 500, traces->end());
    std::printf("%-4s  ends in 1: all %.3f, last 500 %.3f   window KL: first %.3f, last %.3f\n", name,
                expectation_series(*traces, ends_in_one).back(), expectation_series(late, ends_in_one).back(),
                kl.front(), kl.back());
  }
  return 0;
}
