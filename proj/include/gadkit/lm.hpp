/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/lm.hpp
 * \brief Autoregressive token models: the abstract next-token interface plus
 *  the explicit-table and additive-smoothing n-gram backends. The remote
 *  backend lives in remote.hpp so that only its users pull in the HTTP
 *  client.
 *
 *  All distributions are carried as natural-log probabilities; a zero
 *  probability is -infinity.
 */
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gadkit/detail/hash.hpp"
#include "gadkit/errors.hpp"

namespace gadkit {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(v))) without overflow; -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

/*!
 * \brief Ordered token texts with one distinguished end-of-sequence token.
 *  The EOS text is never fed to the grammar.
 */
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, TokenId eos) : tokens_(std::move(tokens)), eos_(eos) {
    if (tokens_.empty()) throw UsageError("vocabulary is empty");
    if (eos_ < 0 || eos_ >= size()) throw UsageError("vocabulary eos index out of range");
    std::unordered_set<std::string> seen;
    for (const auto& t : tokens_) {
      if (t.empty()) throw UsageError("vocabulary tokens must be non-empty");
      if (!seen.insert(t).second) throw UsageError("duplicate vocabulary token '" + t + "'");
    }
  }

  TokenId size() const { return static_cast<TokenId>(tokens_.size()); }
  TokenId eos() const { return eos_; }
  const std::string& text(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool valid(TokenId id) const { return id >= 0 && id < size(); }

  /// Concatenated text of the non-EOS tokens.
  std::string detokenize(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
      if (id != eos_) out += text(id);
    }
    return out;
  }

  std::string fingerprint() const {
    detail::Fnv1a h;
    h.update_u64(tokens_.size());
    for (const auto& t : tokens_) {
      h.update_u64(t.size());
      h.update(t);
    }
    h.update_u64(static_cast<std::uint64_t>(eos_));
    return h.hex();
  }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> tokens_;
  TokenId eos_ = 0;
};

/// Greedy longest-match tokenization of text (no EOS appended).
inline TokenSeq tokenize_longest_match(const Vocabulary& vocab, std::string_view text) {
  TokenSeq out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    TokenId best = -1;
    std::size_t best_len = 0;
    for (TokenId id = 0; id < vocab.size(); ++id) {
      if (id == vocab.eos()) continue;
      const auto& t = vocab.text(id);
      if (t.size() > best_len && text.substr(pos, t.size()) == t) {
        best = id;
        best_len = t.size();
      }
    }
    if (best < 0) throw UsageError("cannot tokenize text at offset " + std::to_string(pos));
    out.push_back(best);
    pos += best_len;
  }
  return out;
}

/*!
 * \brief Next-token conditional P(w_i | w_{1:i-1}) over a fixed vocabulary.
 */
class TokenModel {
 public:
  virtual ~TokenModel() = default;

  const Vocabulary& vocabulary() const { return vocab_; }

  /// Log-probabilities over the vocabulary after `prefix` (which holds no EOS).
  virtual std::vector<double> next_logprobs(std::span<const TokenId> prefix) const = 0;

  /// Identifies the model contents, so traces and tries can be matched to it.
  virtual std::string fingerprint() const = 0;

 protected:
  explicit TokenModel(Vocabulary vocab) : vocab_(std::move(vocab)) {}

  void check_prefix(std::span<const TokenId> prefix) const {
    for (TokenId id : prefix) {
      if (!vocab_.valid(id)) throw UsageError("token index " + std::to_string(id) + " out of range");
      if (id == vocab_.eos()) throw UsageError("model prefix must not contain EOS");
    }
  }

  /// Validates a linear-space vector and returns its normalized logs.
  std::vector<double> normalized_logs(const std::vector<double>& probs, const std::string& where) const {
    if (probs.size() != static_cast<std::size_t>(vocab_.size())) {
      throw ModelError(where + ": expected " + std::to_string(vocab_.size()) + " entries, got " +
                       std::to_string(probs.size()));
    }
    double total = 0.0;
    for (double p : probs) {
      if (!std::isfinite(p) || p < 0.0) throw ModelError(where + ": probabilities must be finite and non-negative");
      total += p;
    }
    if (!(total > 0.0)) throw ModelError(where + ": probabilities sum to zero");
    std::vector<double> logs(probs.size());
    const double log_total = std::log(total);
    for (std::size_t i = 0; i < probs.size(); ++i) logs[i] = safe_log(probs[i]) - log_total;
    return logs;
  }

 private:
  Vocabulary vocab_;
};

/// Linear-space next-token distribution.
inline std::vector<double> next_distribution(const TokenModel& model, std::span<const TokenId> prefix) {
  auto logs = model.next_logprobs(prefix);
  for (double& v : logs) v = std::exp(v);
  return logs;
}

/*!
 * \brief Joint log-probability of a sequence terminated by exactly one EOS.
 *  Returns -inf when some step has zero probability.
 */
inline double sequence_logprob(const TokenModel& model, std::span<const TokenId> tokens) {
  const TokenId eos = model.vocabulary().eos();
  if (tokens.empty() || tokens.back() != eos) throw UsageError("sequence must end with EOS");
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (tokens[i] == eos) throw UsageError("EOS in the interior of a sequence");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto logs = model.next_logprobs(tokens.first(i));
    if (!model.vocabulary().valid(tokens[i])) throw UsageError("token index out of range");
    total += logs[static_cast<std::size_t>(tokens[i])];
  }
  return total;
}

// ---------------------------------------------------------------------------
// Table model
// ---------------------------------------------------------------------------

/*!
 * \brief Explicit prefix-keyed conditionals with a default vector for every
 *  prefix that has no entry of its own.
 */
class TableModel final : public TokenModel {
 public:
  TableModel(Vocabulary vocab, const std::vector<double>& default_probs,
             const std::map<TokenSeq, std::vector<double>>& node_probs)
      : TokenModel(std::move(vocab)) {
    default_ = normalized_logs(default_probs, "default vector");
    for (const auto& [prefix, probs] : node_probs) {
      check_prefix(prefix);
      nodes_.emplace(prefix, normalized_logs(probs, "node vector"));
    }
  }

  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const override {
    check_prefix(prefix);
    auto it = nodes_.find(TokenSeq(prefix.begin(), prefix.end()));
    return it != nodes_.end() ? it->second : default_;
  }

  std::string fingerprint() const override {
    detail::Fnv1a h;
    h.update("table");
    h.update(vocabulary().fingerprint());
    auto put = [&](const std::vector<double>& v) {
      for (double x : v) h.update_u64(std::bit_cast<std::uint64_t>(x));
    };
    put(default_);
    for (const auto& [prefix, logs] : nodes_) {
      h.update_u64(prefix.size());
      for (TokenId id : prefix) h.update_u64(static_cast<std::uint64_t>(id));
      put(logs);
    }
    return h.hex();
  }

  const std::map<TokenSeq, std::vector<double>>& nodes() const { return nodes_; }
  const std::vector<double>& default_logprobs() const { return default_; }

 private:
  std::vector<double> default_;
  std::map<TokenSeq, std::vector<double>> nodes_;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return ss.str();
}

inline nlohmann::json parse_json_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  try {
    return Vocabulary(j.at("vocab").get<std::vector<std::string>>(), j.at("eos").get<TokenId>());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("bad vocabulary: ") + e.what());
  }
}

inline TokenSeq parse_prefix_key(const std::string& key) {
  TokenSeq out;
  std::istringstream ss(key);
  std::string part;
  while (ss >> part) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size()) throw CorruptFileError("bad prefix key '" + key + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

/*!
 * \brief Table model from JSON:
 *  {"vocab": [...], "eos": i, "default": [p...], "nodes": {"<space-joined ids>": [p...]}}
 */
inline TableModel table_model_from_json(const nlohmann::json& j) {
  Vocabulary vocab = detail::vocabulary_from_json(j);
  try {
    std::map<TokenSeq, std::vector<double>> nodes;
    if (j.contains("nodes")) {
      for (const auto& [key, probs] : j.at("nodes").items()) {
        nodes.emplace(detail::parse_prefix_key(key), probs.get<std::vector<double>>());
      }
    }
    return TableModel(std::move(vocab), j.at("default").get<std::vector<double>>(), nodes);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("bad table model: ") + e.what());
  } catch (const ModelError& e) {
    throw CorruptFileError(std::string("bad table model: ") + e.what());
  }
}

inline TableModel load_table_model(const std::string& path) {
  return table_model_from_json(detail::parse_json_file(path));
}

// ---------------------------------------------------------------------------
// N-gram model
// ---------------------------------------------------------------------------

/*!
 * \brief Order-n model with additive smoothing:
 *  P(t | ctx) = (count(ctx, t) + alpha) / (count(ctx) + alpha * |V|),
 *  where ctx is the last n-1 tokens (fewer at the start of a sequence).
 *  Every entry is strictly positive.
 */
class NGramModel final : public TokenModel {
 public:
  NGramModel(Vocabulary vocab, int order, double alpha) : TokenModel(std::move(vocab)), order_(order), alpha_(alpha) {
    if (order_ < 1) throw UsageError("n-gram order must be >= 1");
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw UsageError("n-gram smoothing constant must be > 0");
  }

  /// Counts every position of a sequence, including its terminating EOS.
  void observe(std::span<const TokenId> sentence) {
    check_prefix(sentence);
    TokenSeq seq(sentence.begin(), sentence.end());
    seq.push_back(vocabulary().eos());
    for (std::size_t i = 0; i < seq.size(); ++i) {
      auto& row = counts_[context(std::span<const TokenId>(seq).first(i))];
      if (row.counts.empty()) row.counts.assign(static_cast<std::size_t>(vocabulary().size()), 0.0);
      row.counts[static_cast<std::size_t>(seq[i])] += 1.0;
      row.total += 1.0;
    }
  }

  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const override {
    check_prefix(prefix);
    const auto n = static_cast<std::size_t>(vocabulary().size());
    auto it = counts_.find(context(prefix));
    const double total = it != counts_.end() ? it->second.total : 0.0;
    const double log_denom = std::log(total + alpha_ * static_cast<double>(n));
    std::vector<double> out(n);
    for (std::size_t t = 0; t < n; ++t) {
      const double c = it != counts_.end() ? it->second.counts[t] : 0.0;
      out[t] = std::log(c + alpha_) - log_denom;
    }
    return out;
  }

  std::string fingerprint() const override {
    detail::Fnv1a h;
    h.update("ngram");
    h.update(vocabulary().fingerprint());
    h.update_u64(static_cast<std::uint64_t>(order_));
    h.update_u64(std::bit_cast<std::uint64_t>(alpha_));
    for (const auto& [ctx, row] : counts_) {
      h.update_u64(ctx.size());
      for (TokenId id : ctx) h.update_u64(static_cast<std::uint64_t>(id));
      for (double c : row.counts) h.update_u64(std::bit_cast<std::uint64_t>(c));
    }
    return h.hex();
  }

  int order() const { return order_; }
  double alpha() const { return alpha_; }

 private:
  struct Row {
    std::vector<double> counts;
    double total = 0.0;
  };

  TokenSeq context(std::span<const TokenId> prefix) const {
    const std::size_t keep = std::min(prefix.size(), static_cast<std::size_t>(order_ - 1));
    return TokenSeq(prefix.end() - static_cast<std::ptrdiff_t>(keep), prefix.end());
  }

  int order_;
  double alpha_;
  std::map<TokenSeq, Row> counts_;
};

/// Trains on token sequences given without EOS. An empty corpus gives the uniform model.
inline NGramModel train_ngram(const Vocabulary& vocab, const std::vector<TokenSeq>& corpus, int order, double alpha) {
  NGramModel model(vocab, order, alpha);
  for (const auto& s : corpus) model.observe(s);
  return model;
}

/*!
 * \brief Corpus file: {"vocab": [...], "eos": i, "corpus": [...]} where each
 *  corpus entry is either a text (tokenized by longest match) or an array of
 *  token ids, never including EOS.
 */
inline NGramModel load_ngram_model(const std::string& path, int order, double alpha) {
  const auto j = detail::parse_json_file(path);
  Vocabulary vocab = detail::vocabulary_from_json(j);
  std::vector<TokenSeq> corpus;
  try {
    for (const auto& entry : j.at("corpus")) {
      if (entry.is_string()) {
        corpus.push_back(tokenize_longest_match(vocab, entry.get<std::string>()));
      } else {
        corpus.push_back(entry.get<TokenSeq>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("bad corpus file: ") + e.what());
  } catch (const UsageError& e) {
    throw CorruptFileError(std::string("bad corpus file: ") + e.what());
  }
  return train_ngram(vocab, corpus, order, alpha);
}

}  // namespace gadkit
