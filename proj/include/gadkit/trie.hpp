/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/trie.hpp
 * \brief The sampler trie behind adaptive sampling: per-prefix cached model
 *  conditionals, grammar masks, and the over-approximation c~ of the
 *  expected future grammaticality of every one-token extension.
 *
 *  c~ is stored on parent edges: node(p).log_ctilde[t] holds log c~(p.t).
 *  An edge whose child has never been sampled keeps the mask value (1 for
 *  an admissible token, 0 otherwise). After a sequence is sampled its
 *  edges are refreshed from the end inwards with
 *      c~(p.t) = sum_u P(u | p.t) * c~(p.t.u).
 *  The EOS edge of a complete prefix is exact (1) and never refreshed.
 */
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gadkit/errors.hpp"
#include "gadkit/grammar.hpp"
#include "gadkit/lm.hpp"

namespace gadkit {

/// Grammar mask over a vocabulary: true iff prefix.token stays a viable
/// prefix; the EOS entry is true iff the prefix itself is a sentence.
inline std::vector<std::uint8_t> token_mask(const RecognizerState& state, const Vocabulary& vocab) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(vocab.size()), 0);
  if (!state.alive()) return mask;
  for (TokenId t = 0; t < vocab.size(); ++t) {
    mask[static_cast<std::size_t>(t)] = t == vocab.eos() ? state.complete() : admissible(state, vocab.text(t)).alive();
  }
  return mask;
}

struct TrieNode {
  explicit TrieNode(RecognizerState state) : recognizer(std::move(state)) {}

  RecognizerState recognizer;
  bool expanded = false;
  std::vector<double> log_probs;
  std::vector<std::uint8_t> mask;
  std::vector<double> log_ctilde;
  std::map<TokenId, std::unique_ptr<TrieNode>> children;
};

class SamplerTrie {
 public:
  static constexpr int kFormatVersion = 1;

  SamplerTrie(const Grammar& grammar, Vocabulary vocab)
      : grammar_(grammar), vocab_(std::move(vocab)), root_(std::make_unique<TrieNode>(init_state(grammar))) {}

  const Grammar& grammar() const { return grammar_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  TrieNode& root() { return *root_; }
  const TrieNode& root() const { return *root_; }
  std::uint64_t sample_count() const { return sample_count_; }

  /// Node for a token prefix (no EOS), or nullptr when it was never created.
  const TrieNode* find(std::span<const TokenId> prefix) const {
    const TrieNode* node = root_.get();
    for (TokenId t : prefix) {
      auto it = node->children.find(t);
      if (it == node->children.end()) return nullptr;
      node = it->second.get();
    }
    return node;
  }

  /*!
   * \brief Caches P(.|prefix) with one model call, computes the grammar mask
   *  and initializes every c~ edge to its mask value.
   */
  void expand(TrieNode& node, std::span<const TokenId> prefix, const TokenModel& model) const {
    if (node.expanded) throw InvariantError("trie node expanded twice");
    auto log_probs = model.next_logprobs(prefix);
    if (log_probs.size() != static_cast<std::size_t>(vocab_.size())) {
      throw ModelError("model returned a vector of the wrong length");
    }
    node.mask = token_mask(node.recognizer, vocab_);
    node.log_ctilde.assign(node.mask.size(), kNegInf);
    for (std::size_t t = 0; t < node.mask.size(); ++t) {
      if (node.mask[t]) node.log_ctilde[t] = 0.0;
    }
    node.log_probs = std::move(log_probs);
    node.expanded = true;
  }

  /// Child for an admissible non-EOS token, created on first use.
  TrieNode& child(TrieNode& parent, TokenId token) {
    if (token == vocab_.eos()) throw InvariantError("EOS has no trie child");
    auto& slot = parent.children[token];
    if (!slot) slot = std::make_unique<TrieNode>(admissible(parent.recognizer, vocab_.text(token)));
    return *slot;
  }

  /*!
   * \brief Records a sampled sequence (ending in EOS) and refreshes c~ on its
   *  edges from the last token inwards.
   * \throws InvariantError when the path was not sampled through this trie.
   */
  void record_and_backpropagate(std::span<const TokenId> sequence) {
    if (sequence.empty() || sequence.back() != vocab_.eos()) {
      throw InvariantError("recorded sequence must end with EOS");
    }
    const std::size_t n = sequence.size();
    std::vector<TrieNode*> path{root_.get()};
    for (std::size_t i = 0; i + 1 < n; ++i) {
      TrieNode* node = path.back();
      auto it = node->children.find(sequence[i]);
      if (!node->expanded || it == node->children.end()) throw InvariantError("recorded path not found in trie");
      path.push_back(it->second.get());
    }
    for (TrieNode* node : path) {
      if (!node->expanded) throw InvariantError("recorded path not expanded");
    }
    if (!path.back()->mask[static_cast<std::size_t>(vocab_.eos())]) {
      throw InvariantError("recorded sequence is not a sentence");
    }
    std::vector<double> terms(static_cast<std::size_t>(vocab_.size()));
    for (std::size_t i = n - 1; i >= 1; --i) {
      const TrieNode& node = *path[i];
      for (std::size_t t = 0; t < terms.size(); ++t) terms[t] = node.log_probs[t] + node.log_ctilde[t];
      // The refreshed sum never exceeds the old bound in exact arithmetic; the
      // min absorbs rounding so c~ stays monotone and at most 1.
      double& edge = path[i - 1]->log_ctilde[static_cast<std::size_t>(sequence[i - 1])];
      edge = std::min(edge, log_sum_exp(terms));
    }
    ++sample_count_;
  }

  /*!
   * \brief Current c~ of a token prefix. The prefix may end with EOS.
   *  Unvisited prefixes get the grammar's 0/1 answer.
   */
  double efg(std::span<const TokenId> prefix) const { return std::exp(log_efg(prefix)); }

  double log_efg(std::span<const TokenId> prefix) const {
    for (std::size_t i = 0; i + 1 < prefix.size(); ++i) {
      if (prefix[i] == vocab_.eos()) throw UsageError("EOS inside a prefix");
    }
    if (prefix.empty()) {
      if (root_->expanded) return edge_sum(*root_);
      return root_->recognizer.alive() ? 0.0 : kNegInf;
    }
    // Deepest existing node along prefix[0 .. n-2].
    const TrieNode* node = root_.get();
    std::size_t depth = 0;
    while (depth + 1 < prefix.size()) {
      auto it = node->children.find(prefix[depth]);
      if (it == node->children.end()) break;
      node = it->second.get();
      ++depth;
    }
    if (depth + 1 == prefix.size() && node->expanded) {
      return node->log_ctilde[static_cast<std::size_t>(prefix.back())];
    }
    RecognizerState state = node->recognizer;
    for (std::size_t i = depth; i < prefix.size(); ++i) {
      if (prefix[i] == vocab_.eos()) return state.complete() ? 0.0 : kNegInf;
      state = admissible(state, vocab_.text(prefix[i]));
    }
    return state.alive() ? 0.0 : kNegInf;
  }

  /// Visits every expanded node with its token prefix.
  void for_each_expanded(const std::function<void(std::span<const TokenId>, const TrieNode&)>& fn) const {
    TokenSeq prefix;
    visit(*root_, prefix, fn);
  }

  /// Snapshot as JSON. Log values are written as shortest round-trip decimal strings.
  nlohmann::json to_json(const std::string& model_fingerprint) const {
    nlohmann::json j;
    j["version"] = kFormatVersion;
    j["encoding"] = "natural-log";
    j["vocab_fingerprint"] = vocab_.fingerprint();
    j["grammar_fingerprint"] = grammar_.fingerprint();
    j["model_fingerprint"] = model_fingerprint;
    j["sample_count"] = sample_count_;
    j["nodes"] = node_to_json(*root_);
    return j;
  }

  void save(const std::string& path, const std::string& model_fingerprint) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write trie snapshot '" + path + "'");
    out << to_json(model_fingerprint).dump() << '\n';
    if (!out) throw IoError("error writing trie snapshot '" + path + "'");
  }

  /*!
   * \brief Restores a snapshot. Recognizer states are replayed from the
   *  grammar and masks are checked against it.
   * \throws CorruptFileError on malformed content or version mismatch;
   *  UsageError when fingerprints do not match the given grammar / vocab / model.
   */
  static SamplerTrie from_json(const nlohmann::json& j, const Grammar& grammar, const Vocabulary& vocab,
                               const std::string& model_fingerprint) {
    SamplerTrie trie(grammar, vocab);
    try {
      if (j.at("version").get<int>() != kFormatVersion) {
        throw CorruptFileError("unsupported trie snapshot version " + j.at("version").dump());
      }
      if (j.at("vocab_fingerprint").get<std::string>() != vocab.fingerprint()) {
        throw UsageError("trie snapshot was built for a different vocabulary");
      }
      if (j.contains("grammar_fingerprint") && j.at("grammar_fingerprint").get<std::string>() != grammar.fingerprint()) {
        throw UsageError("trie snapshot was built for a different grammar");
      }
      if (j.contains("model_fingerprint") && j.at("model_fingerprint").get<std::string>() != model_fingerprint) {
        throw UsageError("trie snapshot was built for a different model");
      }
      trie.sample_count_ = j.at("sample_count").get<std::uint64_t>();
      trie.node_from_json(j.at("nodes"), *trie.root_);
    } catch (const nlohmann::json::exception& e) {
      throw CorruptFileError(std::string("corrupt trie snapshot: ") + e.what());
    }
    return trie;
  }

  static SamplerTrie load(const std::string& path, const Grammar& grammar, const Vocabulary& vocab,
                          const std::string& model_fingerprint) {
    return from_json(detail::parse_json_file(path), grammar, vocab, model_fingerprint);
  }

 private:
  double edge_sum(const TrieNode& node) const {
    std::vector<double> terms(node.log_probs.size());
    for (std::size_t t = 0; t < terms.size(); ++t) terms[t] = node.log_probs[t] + node.log_ctilde[t];
    return log_sum_exp(terms);
  }

  static void visit(const TrieNode& node, TokenSeq& prefix,
                    const std::function<void(std::span<const TokenId>, const TrieNode&)>& fn) {
    if (!node.expanded) return;
    fn(prefix, node);
    for (const auto& [t, c] : node.children) {
      prefix.push_back(t);
      visit(*c, prefix, fn);
      prefix.pop_back();
    }
  }

  static std::string encode(double v) {
    if (v == kNegInf) return "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  }

  static double decode(const std::string& s) {
    if (s == "-inf") return kNegInf;
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw CorruptFileError("bad number '" + s + "'");
    return v;
  }

  nlohmann::json node_to_json(const TrieNode& node) const {
    nlohmann::json j = nlohmann::json::object();
    if (node.expanded) {
      auto strings = [](const std::vector<double>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) a.push_back(encode(x));
        return a;
      };
      j["probs"] = strings(node.log_probs);
      j["ctilde"] = strings(node.log_ctilde);
      nlohmann::json m = nlohmann::json::array();
      for (auto b : node.mask) m.push_back(static_cast<int>(b));
      j["mask"] = std::move(m);
    }
    nlohmann::json children = nlohmann::json::object();
    for (const auto& [t, c] : node.children) children[std::to_string(t)] = node_to_json(*c);
    j["children"] = std::move(children);
    return j;
  }

  void node_from_json(const nlohmann::json& j, TrieNode& node) {
    const auto n = static_cast<std::size_t>(vocab_.size());
    if (j.contains("probs")) {
      auto numbers = [&](const nlohmann::json& a) {
        std::vector<double> v;
        for (const auto& x : a) v.push_back(decode(x.get<std::string>()));
        if (v.size() != n) throw CorruptFileError("trie node vector has the wrong length");
        return v;
      };
      node.log_probs = numbers(j.at("probs"));
      node.log_ctilde = numbers(j.at("ctilde"));
      node.mask = j.at("mask").get<std::vector<std::uint8_t>>();
      if (node.mask != token_mask(node.recognizer, vocab_)) {
        throw CorruptFileError("trie snapshot mask does not match the grammar");
      }
      for (std::size_t t = 0; t < n; ++t) {
        if (!node.mask[t] && node.log_ctilde[t] != kNegInf) throw CorruptFileError("masked edge with c~ > 0");
        if (node.log_ctilde[t] > 0.0) throw CorruptFileError("c~ above 1 in trie snapshot");
      }
      node.expanded = true;
    }
    for (const auto& [key, child_json] : j.at("children").items()) {
      const TokenId t = detail::parse_prefix_key(key).at(0);
      if (!vocab_.valid(t) || t == vocab_.eos()) throw CorruptFileError("bad child token '" + key + "'");
      if (!node.expanded || !node.mask[static_cast<std::size_t>(t)]) {
        throw CorruptFileError("trie child under an unexpanded node or masked edge");
      }
      node_from_json(child_json, child(node, t));
    }
  }

  Grammar grammar_;
  Vocabulary vocab_;
  std::unique_ptr<TrieNode> root_;
  std::uint64_t sample_count_ = 0;
};

}  // namespace gadkit
