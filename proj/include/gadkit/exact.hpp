/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/exact.hpp
 * \brief Enumeration oracle for small instances: the grammar-conditioned
 *  distribution Q, its normalizer C, exact expected future grammaticality,
 *  and the exact law of the GCD sampler.
 */
#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gadkit/errors.hpp"
#include "gadkit/grammar.hpp"
#include "gadkit/lm.hpp"

namespace gadkit {

class SupportError : public InvariantError {
 public:
  using InvariantError::InvariantError;
};

struct SentenceMass {
  double prob = 0.0;      // probability under this distribution
  double log_prob = kNegInf;
  double log_p = kNegInf;  // joint model log-probability, EOS included
  std::string text;
};

struct ExactDistribution {
  std::map<TokenSeq, SentenceMass> support;  // keys exclude the EOS
  double normalizer = 0.0;                    // C for Q; total mass for GCD
  double log_normalizer = kNegInf;
  std::map<TokenSeq, double> efg;  // exact c(p) for every viable prefix within the bound (Q only)
  double dead_mass = 0.0;          // mass that left the prefix language (or hit a GCD dead end)
  double tail_mass = 0.0;          // viable mass beyond the length bound
  TokenId eos = 0;

  /// The model itself restricted to this support; unnormalized (sums to C for Q).
  ExactDistribution model_restricted() const {
    ExactDistribution d = *this;
    d.efg.clear();
    d.normalizer = 0.0;
    for (auto& [seq, m] : d.support) {
      m.log_prob = m.log_p;
      m.prob = std::exp(m.log_p);
      d.normalizer += m.prob;
    }
    d.log_normalizer = safe_log(d.normalizer);
    return d;
  }

  double probability(std::span<const TokenId> sentence) const {
    auto it = support.find(TokenSeq(sentence.begin(), sentence.end()));
    return it == support.end() ? 0.0 : it->second.prob;
  }

  /*!
   * \brief Exact c(prefix.token). The EOS edge is 1 on a sentence; edges that
   *  leave the prefix language are 0.
   */
  double edge_efg(std::span<const TokenId> prefix, TokenId token) const {
    TokenSeq p(prefix.begin(), prefix.end());
    if (token == eos) return support.count(p) ? 1.0 : 0.0;
    p.push_back(token);
    auto it = efg.find(p);
    return it == efg.end() ? 0.0 : it->second;
  }
};

namespace detail {

struct Enumerator {
  const TokenModel& model;
  std::size_t len_bound;
  bool gcd;
  ExactDistribution out;
  std::vector<double> sentence_logs;
  TokenSeq prefix;
  std::vector<double> path_logp;  // GCD only: model log-probs along the prefix

  // Returns c(prefix) for Q; for GCD the return value is unused.
  double visit(const RecognizerState& state, double log_mass) {
    const Vocabulary& vocab = model.vocabulary();
    const TokenId eos = vocab.eos();
    const auto logs = model.next_logprobs(prefix);
    std::vector<RecognizerState> next;
    std::vector<double> weights(logs.size(), kNegInf);
    next.reserve(logs.size());
    for (TokenId t = 0; t < vocab.size(); ++t) {
      const auto i = static_cast<std::size_t>(t);
      if (t == eos) {
        next.push_back(state);
        if (state.complete()) weights[i] = logs[i];
      } else {
        next.push_back(admissible(state, vocab.text(t)));
        if (next.back().alive()) weights[i] = logs[i];
      }
    }
    double log_norm = 0.0;
    if (gcd) {
      log_norm = log_sum_exp(weights);
      if (log_norm == kNegInf) {
        out.dead_mass += std::exp(log_mass);
        return 0.0;
      }
    } else {
      for (std::size_t i = 0; i < logs.size(); ++i) {
        if (weights[i] == kNegInf) out.dead_mass += std::exp(log_mass + logs[i]);
      }
    }
    double c = 0.0;
    for (TokenId t = 0; t < vocab.size(); ++t) {
      const auto i = static_cast<std::size_t>(t);
      if (weights[i] == kNegInf) continue;
      const double step = gcd ? weights[i] - log_norm : logs[i];
      const double mass = log_mass + step;
      if (t == eos) {
        auto& m = out.support[prefix];
        m.log_prob = mass;
        m.log_p = gcd ? model_log_p(logs[i]) : mass;
        m.text = vocab.detokenize(prefix);
        sentence_logs.push_back(mass);
        c += std::exp(logs[i]);
        continue;
      }
      if (prefix.size() + 1 > len_bound) {
        out.tail_mass += std::exp(mass);
        continue;
      }
      prefix.push_back(t);
      if (gcd) path_logp.push_back(logs[i]);
      const double child = visit(next[i], mass);
      if (gcd) path_logp.pop_back();
      if (!gcd) out.efg[prefix] = child;
      prefix.pop_back();
      c += std::exp(logs[i]) * child;
    }
    return c;
  }

  double model_log_p(double eos_log) const {
    double s = eos_log;
    for (double v : path_logp) s += v;
    return s;
  }
};

inline ExactDistribution enumerate(const TokenModel& model, const Grammar& grammar, std::size_t len_bound,
                                   double tail_tol, bool gcd) {
  if (!(tail_tol >= 0.0)) throw UsageError("tail tolerance must be non-negative");
  Enumerator e{model, len_bound, gcd, {}, {}, {}, {}};
  e.out.eos = model.vocabulary().eos();
  const RecognizerState root = init_state(grammar);
  if (!root.alive()) throw UsageError("grammar has no sentences");
  const double c_root = e.visit(root, 0.0);
  if (!gcd) e.out.efg[TokenSeq{}] = c_root;
  if (e.out.tail_mass > tail_tol) throw TailMassError(e.out.tail_mass, tail_tol);
  if (e.out.support.empty()) throw UsageError("no sentence with positive probability within the length bound");
  e.out.log_normalizer = log_sum_exp(e.sentence_logs);
  e.out.normalizer = std::exp(e.out.log_normalizer);
  for (auto& [seq, m] : e.out.support) {
    if (!gcd) m.log_prob = m.log_p - e.out.log_normalizer;
    m.prob = std::exp(m.log_prob);
  }
  return std::move(e.out);
}

}  // namespace detail

/*!
 * \brief Exact Q = P restricted to L(G) and renormalized, by depth-first
 *  enumeration of viable prefixes up to len_bound content tokens.
 * \throws TailMassError when more than tail_tol viable mass lies beyond the bound.
 */
inline ExactDistribution enumerate_q(const TokenModel& model, const Grammar& grammar, std::size_t len_bound,
                                     double tail_tol = 1e-12) {
  return detail::enumerate(model, grammar, len_bound, tail_tol, false);
}

/// Exact law of the GCD sampler. `normalizer` is its total mass (1 unless dead ends exist).
inline ExactDistribution enumerate_gcd(const TokenModel& model, const Grammar& grammar, std::size_t len_bound,
                                       double tail_tol = 1e-12) {
  return detail::enumerate(model, grammar, len_bound, tail_tol, true);
}

/*!
 * \brief KL(a || b) over sentences, using the stored log-probabilities.
 *  b need not be normalized.
 * \throws SupportError when a puts mass where b has none.
 */
inline double exact_kl(const ExactDistribution& a, const ExactDistribution& b) {
  double kl = 0.0;
  for (const auto& [seq, m] : a.support) {
    if (m.prob == 0.0) continue;
    auto it = b.support.find(seq);
    if (it == b.support.end() || it->second.log_prob == kNegInf) {
      throw SupportError("KL undefined: '" + m.text + "' has no mass in the second distribution");
    }
    kl += m.prob * (m.log_prob - it->second.log_prob);
  }
  return kl;
}

/// Expected value of a sentence predicate under an exact distribution.
template <typename Pred>
double exact_expectation(const ExactDistribution& d, Pred&& pred) {
  double s = 0.0;
  for (const auto& [seq, m] : d.support) {
    if (pred(seq, m.text)) s += m.prob;
  }
  return s;
}

}  // namespace gadkit
