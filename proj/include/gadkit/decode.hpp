/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/decode.hpp
 * \brief Rejection, GCD and ASAp samplers, plus the JSON Lines trace format.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "gadkit/errors.hpp"
#include "gadkit/grammar.hpp"
#include "gadkit/lm.hpp"
#include "gadkit/rng.hpp"
#include "gadkit/trie.hpp"

namespace gadkit {

/// One sampling step. The sampling probability is exp(log_weight - log_norm).
struct StepRecord {
  TokenId token = 0;
  double log_p = 0.0;       // unmasked model log-probability of the token
  double log_weight = 0.0;  // numerator the sampler used
  double log_norm = 0.0;    // log of the sum of all numerators at this step
};

struct SampleTrace {
  std::uint64_t iteration = 0;
  TokenSeq tokens;  // ends with EOS
  std::string text;
  double log_p = 0.0;
  double log_q = 0.0;
  bool grammatical = false;
  std::vector<StepRecord> steps;
  std::uint64_t attempts = 1;  // rejection sampler only
};

struct DecodeConfig {
  std::size_t max_len = 64;  // content tokens, EOS not counted
  std::uint64_t seed = 0;
  std::uint64_t iterations = 1;
  std::uint64_t max_attempts = 100000;

  void validate() const {
    if (max_len < 1) throw UsageError("max_len must be at least 1");
    if (iterations < 1) throw UsageError("iterations must be at least 1");
    if (max_attempts < 1) throw UsageError("max_attempts must be at least 1");
  }
};

namespace detail {

inline void finish_trace(SampleTrace& trace, const Grammar& grammar, const Vocabulary& vocab) {
  trace.text = vocab.detokenize(trace.tokens);
  trace.grammatical = accepts(grammar, trace.text);
}

// Shared ancestral walk over trie nodes. `weight_of` gives the log numerator
// of each token at a node; GCD and ASAp differ only there.
template <typename WeightFn>
SampleTrace walk(const TokenModel& model, SamplerTrie& trie, const DecodeConfig& config, std::uint64_t iteration,
                 WeightFn weight_of, bool asap) {
  const Vocabulary& vocab = model.vocabulary();
  const auto eos = static_cast<std::size_t>(vocab.eos());
  const CounterRng rng(config.seed);
  SampleTrace trace;
  trace.iteration = iteration;
  TrieNode* node = &trie.root();
  std::vector<double> weights(static_cast<std::size_t>(vocab.size()));
  for (std::uint64_t step = 0;; ++step) {
    if (!node->expanded) trie.expand(*node, trace.tokens, model);
    const bool at_cap = trace.tokens.size() >= config.max_len;
    bool gcd_mass = false;
    for (std::size_t t = 0; t < weights.size(); ++t) {
      weights[t] = (at_cap && t != eos) ? kNegInf : weight_of(*node, t);
      if (node->mask[t] && node->log_probs[t] != kNegInf && !(at_cap && t != eos)) gcd_mass = true;
    }
    const double log_norm = log_sum_exp(weights);
    if (log_norm == kNegInf) {
      if (at_cap) throw BudgetError("max_len reached with no admissible EOS");
      if (asap && gcd_mass) throw InvariantError("ASAp normalizer vanished at a viable prefix");
      throw BudgetError("dead end after '" + vocab.detokenize(trace.tokens) + "': no admissible token has positive probability");
    }
    const auto t = ancestral_step_log(weights, rng.uniform(iteration, step));
    trace.steps.push_back({static_cast<TokenId>(t), node->log_probs[t], weights[t], log_norm});
    trace.log_p += node->log_probs[t];
    trace.log_q += weights[t] - log_norm;
    trace.tokens.push_back(static_cast<TokenId>(t));
    if (t == eos) break;
    node = &trie.child(*node, static_cast<TokenId>(t));
  }
  return trace;
}

inline double gcd_weight(const TrieNode& node, std::size_t t) {
  return node.mask[t] ? node.log_probs[t] : kNegInf;
}

inline double asap_weight(const TrieNode& node, std::size_t t) { return node.log_probs[t] + node.log_ctilde[t]; }

}  // namespace detail

/*!
 * \brief One GCD sample: each step draws from P masked to admissible tokens.
 *  `cache` holds model conditionals and masks only; it is never reweighted.
 */
inline SampleTrace sample_gcd(const TokenModel& model, const Grammar& grammar, const DecodeConfig& config,
                              std::uint64_t iteration, SamplerTrie& cache) {
  config.validate();
  auto trace = detail::walk(model, cache, config, iteration, detail::gcd_weight, false);
  detail::finish_trace(trace, grammar, model.vocabulary());
  return trace;
}

inline SampleTrace sample_gcd(const TokenModel& model, const Grammar& grammar, const DecodeConfig& config,
                              std::uint64_t iteration = 0) {
  SamplerTrie cache(grammar, model.vocabulary());
  return sample_gcd(model, grammar, config, iteration, cache);
}

inline std::vector<SampleTrace> run_gcd(const TokenModel& model, const Grammar& grammar, const DecodeConfig& config) {
  config.validate();
  SamplerTrie cache(grammar, model.vocabulary());
  std::vector<SampleTrace> out;
  out.reserve(config.iterations);
  for (std::uint64_t i = 0; i < config.iterations; ++i) out.push_back(sample_gcd(model, grammar, config, i, cache));
  return out;
}

/*!
 * \brief One ASAp iteration: sample from P weighted by the trie's c~, then
 *  record the sample and refresh c~ along its path. The RNG iteration key is
 *  the trie's sample count, so a reloaded trie continues the same stream.
 */
inline SampleTrace sample_asap(const TokenModel& model, const Grammar& grammar, const DecodeConfig& config,
                               SamplerTrie& trie) {
  config.validate();
  auto trace = detail::walk(model, trie, config, trie.sample_count(), detail::asap_weight, true);
  trie.record_and_backpropagate(trace.tokens);
  detail::finish_trace(trace, grammar, model.vocabulary());
  return trace;
}

inline std::vector<SampleTrace> run_asap(const TokenModel& model, const Grammar& grammar, const DecodeConfig& config,
                                         SamplerTrie& trie,
                                         const std::function<void(const SampleTrace&)>& on_sample = {}) {
  config.validate();
  if (!(trie.vocabulary() == model.vocabulary())) throw UsageError("trie and model vocabularies differ");
  if (trie.grammar().fingerprint() != grammar.fingerprint()) throw UsageError("trie was built for another grammar");
  std::vector<SampleTrace> out;
  out.reserve(config.iterations);
  for (std::uint64_t i = 0; i < config.iterations; ++i) {
    out.push_back(sample_asap(model, grammar, config, trie));
    if (on_sample) on_sample(out.back());
  }
  return out;
}

/*!
 * \brief Draws from the unmasked model until a sample is grammatical. An
 *  attempt is abandoned as soon as its prefix leaves the prefix language or
 *  exceeds max_len, which does not change the accepted-sample law.
 * \throws BudgetError when config.max_attempts attempts fail.
 */
inline SampleTrace sample_rejection(const TokenModel& model, const Grammar& grammar, const DecodeConfig& config,
                                    std::uint64_t iteration, SamplerTrie& cache) {
  config.validate();
  const Vocabulary& vocab = model.vocabulary();
  const auto eos = static_cast<std::size_t>(vocab.eos());
  const CounterRng rng(config.seed);
  for (std::uint64_t attempt = 0; attempt < config.max_attempts; ++attempt) {
    SampleTrace trace;
    trace.iteration = iteration;
    trace.attempts = attempt + 1;
    TrieNode* node = &cache.root();
    bool accepted = false;
    for (std::uint64_t step = 0;; ++step) {
      if (!node->expanded) cache.expand(*node, trace.tokens, model);
      const auto t = ancestral_step_log(node->log_probs, rng.uniform(iteration, step, attempt));
      const double lp = node->log_probs[t];
      trace.steps.push_back({static_cast<TokenId>(t), lp, lp, 0.0});
      trace.log_p += lp;
      trace.tokens.push_back(static_cast<TokenId>(t));
      if (!node->mask[t] || (t != eos && trace.tokens.size() > config.max_len)) break;
      if (t == eos) {
        accepted = true;
        break;
      }
      node = &cache.child(*node, static_cast<TokenId>(t));
    }
    if (accepted) {
      trace.log_q = trace.log_p;
      detail::finish_trace(trace, grammar, vocab);
      return trace;
    }
  }
  throw BudgetError("rejection sampler exhausted " + std::to_string(config.max_attempts) + " attempts");
}

inline std::vector<SampleTrace> run_rejection(const TokenModel& model, const Grammar& grammar,
                                              const DecodeConfig& config) {
  config.validate();
  SamplerTrie cache(grammar, model.vocabulary());
  std::vector<SampleTrace> out;
  out.reserve(config.iterations);
  for (std::uint64_t i = 0; i < config.iterations; ++i) {
    out.push_back(sample_rejection(model, grammar, config, i, cache));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON Lines traces
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json trace_to_json(const SampleTrace& trace) {
  nlohmann::ordered_json j;
  j["iter"] = trace.iteration;
  j["tokens"] = trace.tokens;
  j["text"] = trace.text;
  j["log_p"] = trace.log_p;
  j["log_q"] = trace.log_q;
  j["grammatical"] = trace.grammatical;
  return j;
}

inline void write_trace_line(std::ostream& out, const SampleTrace& trace) { out << trace_to_json(trace).dump() << '\n'; }

inline void write_traces(const std::string& path, const std::vector<SampleTrace>& traces) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& t : traces) write_trace_line(out, t);
  if (!out) throw IoError("error writing '" + path + "'");
}

inline SampleTrace trace_from_json(const nlohmann::json& j) {
  SampleTrace t;
  t.iteration = j.at("iter").get<std::uint64_t>();
  t.tokens = j.at("tokens").get<TokenSeq>();
  t.text = j.at("text").get<std::string>();
  t.log_p = j.at("log_p").get<double>();
  t.log_q = j.at("log_q").get<double>();
  t.grammatical = j.at("grammatical").get<bool>();
  return t;
}

/// Reads a JSONL trace file. Steps are not part of the format.
inline std::vector<SampleTrace> read_traces(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<SampleTrace> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(trace_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw CorruptFileError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return out;
}

}  // namespace gadkit
