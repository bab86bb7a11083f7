/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/grammar.hpp
 * \brief Context-free grammars read from BNF text, plus an incremental
 *  character-level Earley recognizer answering sentence / viable-prefix
 *  queries.
 *
 *  Terminal literals may be longer than one character. The recognizer
 *  consumes them one character at a time, so a vocabulary token can end in
 *  the middle of a literal or span several literals.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gadkit/detail/hash.hpp"
#include "gadkit/errors.hpp"

namespace gadkit {

struct GrammarSymbol {
  enum class Kind : std::uint8_t { kNonterminal, kTerminal };
  Kind kind;
  /// Index into Grammar::nonterminals() or Grammar::terminals().
  std::int32_t id;

  static GrammarSymbol nonterminal(std::int32_t id) { return {Kind::kNonterminal, id}; }
  static GrammarSymbol terminal(std::int32_t id) { return {Kind::kTerminal, id}; }
  bool is_terminal() const { return kind == Kind::kTerminal; }
  friend bool operator==(const GrammarSymbol&, const GrammarSymbol&) = default;
};

struct Production {
  std::int32_t lhs;
  std::vector<GrammarSymbol> rhs;
};

/*!
 * \brief An immutable CFG. Copies share the same underlying data, so a
 *  Grammar is cheap to pass around and safe to read from many threads.
 */
class Grammar {
 public:
  Grammar(std::vector<std::string> nonterminals, std::vector<std::string> terminals, std::int32_t start,
          std::vector<Production> productions);

  const std::vector<std::string>& nonterminals() const { return data_->nonterminals; }
  const std::vector<std::string>& terminals() const { return data_->terminals; }
  const std::vector<Production>& productions() const { return data_->productions; }
  std::int32_t start() const { return data_->start; }
  const std::string& start_name() const { return data_->nonterminals[data_->start]; }

  /// Sorted distinct characters occurring in terminal literals.
  const std::string& alphabet() const { return data_->alphabet; }
  /// False when the start symbol derives no terminal string at all.
  bool has_sentence() const { return data_->productive[data_->start]; }
  bool nullable(std::int32_t nonterminal) const { return data_->nullable[nonterminal]; }

  /// Canonical BNF rendering; parse_bnf(to_bnf()) yields an equal grammar.
  std::string to_bnf() const;
  std::string fingerprint() const;

  // Character-level rules used by the recognizer. Only rules whose symbols
  // are all productive are kept, which makes "chart column non-empty"
  // equivalent to "consumed text is a viable prefix".
  struct CharRule {
    std::int32_t lhs;
    /// >= 0: nonterminal id; < 0: character code encoded as -(c + 1).
    std::vector<std::int32_t> rhs;
  };
  const std::vector<CharRule>& char_rules() const { return data_->char_rules; }
  const std::vector<std::uint32_t>& char_rules_for(std::int32_t nonterminal) const {
    return data_->rules_by_lhs[nonterminal];
  }

  static constexpr std::int32_t encode_char(char c) {
    return -static_cast<std::int32_t>(static_cast<unsigned char>(c)) - 1;
  }

 private:
  struct Data {
    std::vector<std::string> nonterminals;
    std::vector<std::string> terminals;
    std::vector<Production> productions;
    std::int32_t start = 0;
    std::string alphabet;
    std::vector<bool> productive;
    std::vector<bool> nullable;
    std::vector<CharRule> char_rules;
    std::vector<std::vector<std::uint32_t>> rules_by_lhs;
  };
  std::shared_ptr<const Data> data_;
};

/*!
 * \brief Parse the BNF dialect: `Name ::= alt | alt`, juxtaposition is
 *  concatenation, terminals are double-quoted with escapes \" \\ \n \t,
 *  `""` is the empty string, `#` comments to end of line. A rule starts at
 *  the beginning of a line; following lines that do not open a new rule
 *  continue it. The start symbol is `root` if defined, else the first lhs.
 * \throws GrammarError on syntax errors, undefined nonterminals and empty input.
 */
inline Grammar parse_bnf(std::string_view text);

enum class ParseStatus : std::uint8_t { kDead, kAlive, kComplete };

/*!
 * \brief Incremental recognizer configuration after consuming some text.
 *
 *  kComplete: the text is a sentence. kAlive: the text is a proper viable
 *  prefix. kDead: no extension is a sentence; absorbing.
 *  States are immutable values; advancing returns a new state that shares
 *  the earlier chart columns with its parent.
 */
class RecognizerState {
 public:
  ParseStatus status() const { return status_; }
  bool alive() const { return status_ != ParseStatus::kDead; }
  bool complete() const { return status_ == ParseStatus::kComplete; }
  std::size_t consumed() const { return consumed_; }
  const Grammar& grammar() const { return grammar_; }

  RecognizerState advance(char ch) const;

 private:
  struct Item {
    std::uint32_t rule;
    std::uint32_t dot;
    std::uint32_t origin;
  };
  struct Column {
    std::vector<Item> items;
    // Item indices in this column whose next symbol is the key nonterminal.
    std::unordered_map<std::int32_t, std::vector<std::uint32_t>> waiting;
  };

  explicit RecognizerState(Grammar grammar) : grammar_(std::move(grammar)) {}
  void close(Column& column, std::uint32_t position) const;
  ParseStatus classify(const Column& column) const;

  friend inline RecognizerState init_state(const Grammar& grammar);

  Grammar grammar_;
  std::vector<std::shared_ptr<const Column>> columns_;
  ParseStatus status_ = ParseStatus::kDead;
  std::size_t consumed_ = 0;
};

inline RecognizerState init_state(const Grammar& grammar);

inline RecognizerState advance(const RecognizerState& state, char ch) { return state.advance(ch); }

/// Folds advance over the characters of a (non-empty) token text.
inline RecognizerState admissible(const RecognizerState& state, std::string_view token_text);

inline bool accepts(const Grammar& grammar, std::string_view text);
inline bool is_prefix(const Grammar& grammar, std::string_view text);

// ---------------------------------------------------------------------------
// Implementation
// ---------------------------------------------------------------------------

inline Grammar::Grammar(std::vector<std::string> nonterminals, std::vector<std::string> terminals,
                        std::int32_t start, std::vector<Production> productions) {
  auto data = std::make_shared<Data>();
  const auto n_nt = static_cast<std::int32_t>(nonterminals.size());
  const auto n_t = static_cast<std::int32_t>(terminals.size());
  if (n_nt == 0 || productions.empty()) throw GrammarError("empty grammar");
  if (start < 0 || start >= n_nt) throw GrammarError("start symbol is not a declared nonterminal");
  bool start_has_rule = false;
  for (const auto& p : productions) {
    if (p.lhs < 0 || p.lhs >= n_nt) throw GrammarError("production lhs is not a declared nonterminal");
    start_has_rule |= p.lhs == start;
    for (const auto& s : p.rhs) {
      const std::int32_t bound = s.is_terminal() ? n_t : n_nt;
      if (s.id < 0 || s.id >= bound) throw GrammarError("production references an undeclared symbol");
    }
  }
  if (!start_has_rule) throw GrammarError("no production for start symbol '" + nonterminals[start] + "'");

  data->nonterminals = std::move(nonterminals);
  data->terminals = std::move(terminals);
  data->productions = std::move(productions);
  data->start = start;

  std::string alphabet;
  for (const auto& t : data->terminals) alphabet += t;
  std::sort(alphabet.begin(), alphabet.end());
  alphabet.erase(std::unique(alphabet.begin(), alphabet.end()), alphabet.end());
  data->alphabet = std::move(alphabet);

  auto fixpoint = [&](auto&& symbol_ok) {
    std::vector<bool> flag(n_nt, false);
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& p : data->productions) {
        if (flag[p.lhs]) continue;
        if (std::all_of(p.rhs.begin(), p.rhs.end(), [&](const GrammarSymbol& s) { return symbol_ok(s, flag); })) {
          flag[p.lhs] = true;
          changed = true;
        }
      }
    }
    return flag;
  };
  data->productive = fixpoint([](const GrammarSymbol& s, const std::vector<bool>& f) {
    return s.is_terminal() || f[s.id];
  });
  data->nullable = fixpoint([&](const GrammarSymbol& s, const std::vector<bool>& f) {
    return s.is_terminal() ? data->terminals[s.id].empty() : f[s.id];
  });

  data->rules_by_lhs.resize(n_nt);
  for (const auto& p : data->productions) {
    bool keep = std::all_of(p.rhs.begin(), p.rhs.end(), [&](const GrammarSymbol& s) {
      return s.is_terminal() || data->productive[s.id];
    });
    if (!keep) continue;
    CharRule rule{p.lhs, {}};
    for (const auto& s : p.rhs) {
      if (s.is_terminal()) {
        for (char c : data->terminals[s.id]) rule.rhs.push_back(encode_char(c));
      } else {
        rule.rhs.push_back(s.id);
      }
    }
    if (rule.rhs.size() >= (1u << 16)) throw GrammarError("production too long");
    data->rules_by_lhs[p.lhs].push_back(static_cast<std::uint32_t>(data->char_rules.size()));
    data->char_rules.push_back(std::move(rule));
  }
  if (data->char_rules.size() >= (1u << 24)) throw GrammarError("too many productions");
  data_ = std::move(data);
}

namespace detail {

inline std::string quote_literal(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

}  // namespace detail

inline std::string Grammar::to_bnf() const {
  // Start symbol first so the rendering re-parses to the same start even
  // without a `root` rule.
  std::vector<std::int32_t> order{data_->start};
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(data_->nonterminals.size()); ++i) {
    if (i != data_->start) order.push_back(i);
  }
  std::string out;
  for (std::int32_t nt : order) {
    bool first = true;
    for (const auto& p : data_->productions) {
      if (p.lhs != nt) continue;
      out += first ? data_->nonterminals[nt] + " ::=" : std::string(" |");
      first = false;
      if (p.rhs.empty()) out += " \"\"";
      for (const auto& s : p.rhs) {
        out += ' ';
        out += s.is_terminal() ? detail::quote_literal(data_->terminals[s.id]) : data_->nonterminals[s.id];
      }
    }
    if (!first) out += '\n';
  }
  return out;
}

inline std::string Grammar::fingerprint() const {
  detail::Fnv1a h;
  h.update(to_bnf());
  return h.hex();
}

// ---------------------------------------------------------------------------
// BNF reader
// ---------------------------------------------------------------------------

namespace detail {

class BnfLexer {
 public:
  enum class Kind { kIdent, kDefine, kPipe, kString, kEnd };
  struct Token {
    Kind kind;
    std::string text;
    std::size_t line;
    std::size_t column;
    bool line_start;
  };

  explicit BnfLexer(std::string_view src) : src_(src) {}

  std::vector<Token> tokenize() {
    std::vector<Token> out;
    bool line_start = true;
    while (true) {
      skip_blank(line_start);
      const std::size_t line = line_, col = col_;
      if (pos_ >= src_.size()) {
        out.push_back({Kind::kEnd, "", line, col, line_start});
        return out;
      }
      char c = src_[pos_];
      if (is_ident_start(c)) {
        std::string id;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) id += take();
        out.push_back({Kind::kIdent, std::move(id), line, col, line_start});
      } else if (src_.substr(pos_, 3) == "::=") {
        take(), take(), take();
        out.push_back({Kind::kDefine, "::=", line, col, line_start});
      } else if (c == '|') {
        take();
        out.push_back({Kind::kPipe, "|", line, col, line_start});
      } else if (c == '"') {
        out.push_back({Kind::kString, read_string(), line, col, line_start});
      } else {
        throw GrammarError(std::string("unexpected character '") + c + "'", line, col);
      }
      line_start = false;
    }
  }

 private:
  static bool is_ident_start(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
  }
  static bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9') || c == '-'; }

  char take() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_blank(bool& line_start) {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') {
        take();
        line_start = true;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        take();
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') take();
      } else {
        return;
      }
    }
  }

  std::string read_string() {
    const std::size_t line = line_, col = col_;
    take();  // opening quote
    std::string value;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') throw GrammarError("unterminated string literal", line, col);
      char c = take();
      if (c == '"') return value;
      if (c != '\\') {
        value += c;
        continue;
      }
      if (pos_ >= src_.size()) throw GrammarError("unterminated string literal", line, col);
      const std::size_t esc_line = line_, esc_col = col_ - 1;
      char e = take();
      switch (e) {
        case '"': value += '"'; break;
        case '\\': value += '\\'; break;
        case 'n': value += '\n'; break;
        case 't': value += '\t'; break;
        default: throw GrammarError(std::string("unknown escape '\\") + e + "'", esc_line, esc_col);
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

}  // namespace detail

inline Grammar parse_bnf(std::string_view text) {
  using Lexer = detail::BnfLexer;
  using Kind = Lexer::Kind;
  const auto tokens = Lexer(text).tokenize();

  std::vector<std::string> nonterminals;
  std::unordered_map<std::string, std::int32_t> nt_index;
  std::vector<bool> defined;
  std::vector<std::string> terminals;
  std::unordered_map<std::string, std::int32_t> t_index;
  std::vector<Production> productions;
  // First reference site of each nonterminal, for undefined-symbol errors.
  std::vector<std::pair<std::size_t, std::size_t>> first_use;

  auto intern_nt = [&](const Lexer::Token& tok) {
    auto [it, inserted] = nt_index.emplace(tok.text, static_cast<std::int32_t>(nonterminals.size()));
    if (inserted) {
      nonterminals.push_back(tok.text);
      defined.push_back(false);
      first_use.emplace_back(tok.line, tok.column);
    }
    return it->second;
  };
  auto intern_t = [&](const std::string& lit) {
    auto [it, inserted] = t_index.emplace(lit, static_cast<std::int32_t>(terminals.size()));
    if (inserted) terminals.push_back(lit);
    return it->second;
  };
  auto starts_rule = [&](std::size_t i) {
    return tokens[i].kind == Kind::kIdent && tokens[i + 1].kind == Kind::kDefine;
  };

  std::int32_t first_lhs = -1;
  std::size_t i = 0;
  while (tokens[i].kind != Kind::kEnd) {
    const auto& head = tokens[i];
    if (!starts_rule(i)) throw GrammarError("expected a rule of the form 'Name ::= ...'", head.line, head.column);
    if (!head.line_start) throw GrammarError("a rule must start on a new line", head.line, head.column);
    const std::int32_t lhs = intern_nt(head);
    defined[lhs] = true;
    if (first_lhs < 0) first_lhs = lhs;
    i += 2;

    std::vector<GrammarSymbol> alt;
    bool alt_empty = true;
    auto finish_alt = [&](const Lexer::Token& at) {
      if (alt_empty) throw GrammarError("empty alternative (write \"\" for the empty string)", at.line, at.column);
      productions.push_back({lhs, std::move(alt)});
      alt.clear();
      alt_empty = true;
    };
    while (true) {
      const auto& tok = tokens[i];
      if (tok.kind == Kind::kEnd || starts_rule(i)) {
        finish_alt(tok);
        break;
      }
      if (tok.kind == Kind::kPipe) {
        finish_alt(tok);
      } else if (tok.kind == Kind::kIdent) {
        alt.push_back(GrammarSymbol::nonterminal(intern_nt(tok)));
        alt_empty = false;
      } else if (tok.kind == Kind::kString) {
        if (!tok.text.empty()) alt.push_back(GrammarSymbol::terminal(intern_t(tok.text)));
        alt_empty = false;
      } else {
        throw GrammarError("unexpected '" + tok.text + "'", tok.line, tok.column);
      }
      ++i;
    }
  }
  if (productions.empty()) throw GrammarError("empty grammar", 1, 1);
  for (std::size_t k = 0; k < nonterminals.size(); ++k) {
    if (!defined[k]) {
      throw GrammarError("undefined nonterminal '" + nonterminals[k] + "'", first_use[k].first, first_use[k].second);
    }
  }
  auto root = nt_index.find("root");
  const std::int32_t start = root != nt_index.end() ? root->second : first_lhs;
  return Grammar(std::move(nonterminals), std::move(terminals), start, std::move(productions));
}

// ---------------------------------------------------------------------------
// Earley recognizer
// ---------------------------------------------------------------------------

inline void RecognizerState::close(Column& column, std::uint32_t position) const {
  const auto& rules = grammar_.char_rules();
  std::unordered_set<std::uint64_t> seen;
  auto key = [](const Item& it) {
    return (static_cast<std::uint64_t>(it.rule) << 40) | (static_cast<std::uint64_t>(it.dot) << 24) |
           static_cast<std::uint64_t>(it.origin);
  };
  for (const auto& it : column.items) seen.insert(key(it));
  auto add = [&](Item it) {
    if (seen.insert(key(it)).second) column.items.push_back(it);
  };

  for (std::size_t k = 0; k < column.items.size(); ++k) {
    const Item item = column.items[k];
    const auto& rule = rules[item.rule];
    if (item.dot < rule.rhs.size()) {
      const std::int32_t next = rule.rhs[item.dot];
      if (next < 0) continue;  // waits for a character
      column.waiting[next].push_back(static_cast<std::uint32_t>(k));
      for (std::uint32_t r : grammar_.char_rules_for(next)) add({r, 0, position});
      // Aycock-Horspool: step over nullable nonterminals during prediction,
      // so same-column completions never need to be revisited.
      if (grammar_.nullable(next)) add({item.rule, item.dot + 1, item.origin});
      continue;
    }
    // Same-column completions are exactly the nullable case handled above.
    if (item.origin == position) continue;
    const Column& origin = *columns_[item.origin];
    auto waiting = origin.waiting.find(rule.lhs);
    if (waiting == origin.waiting.end()) continue;
    for (std::uint32_t idx : waiting->second) {
      const Item& parent = origin.items[idx];
      add({parent.rule, parent.dot + 1, parent.origin});
    }
  }
}

inline ParseStatus RecognizerState::classify(const Column& column) const {
  if (column.items.empty()) return ParseStatus::kDead;
  const auto& rules = grammar_.char_rules();
  for (const auto& it : column.items) {
    const auto& rule = rules[it.rule];
    if (it.origin == 0 && it.dot == rule.rhs.size() && rule.lhs == grammar_.start()) return ParseStatus::kComplete;
  }
  return ParseStatus::kAlive;
}

inline RecognizerState init_state(const Grammar& grammar) {
  RecognizerState state(grammar);
  auto column = std::make_shared<RecognizerState::Column>();
  if (grammar.has_sentence()) {
    for (std::uint32_t r : grammar.char_rules_for(grammar.start())) column->items.push_back({r, 0, 0});
    state.close(*column, 0);
  }
  state.status_ = state.classify(*column);
  if (state.status_ != ParseStatus::kDead) state.columns_.push_back(std::move(column));
  return state;
}

inline RecognizerState RecognizerState::advance(char ch) const {
  RecognizerState next(*this);
  ++next.consumed_;
  if (status_ == ParseStatus::kDead) return next;
  if (consumed_ + 1 >= (1u << 24)) throw InvariantError("recognizer input too long");

  const std::int32_t code = Grammar::encode_char(ch);
  const auto& rules = grammar_.char_rules();
  auto column = std::make_shared<Column>();
  for (const auto& it : columns_.back()->items) {
    const auto& rhs = rules[it.rule].rhs;
    if (it.dot < rhs.size() && rhs[it.dot] == code) column->items.push_back({it.rule, it.dot + 1, it.origin});
  }
  if (column->items.empty()) {
    next.status_ = ParseStatus::kDead;
    next.columns_.clear();
    return next;
  }
  next.close(*column, static_cast<std::uint32_t>(consumed_ + 1));
  next.status_ = next.classify(*column);
  next.columns_.push_back(std::move(column));
  return next;
}

inline RecognizerState admissible(const RecognizerState& state, std::string_view token_text) {
  if (token_text.empty()) throw UsageError("admissible: token text must be non-empty");
  RecognizerState cur = state;
  for (char c : token_text) cur = cur.advance(c);
  return cur;
}

inline bool accepts(const Grammar& grammar, std::string_view text) {
  RecognizerState s = init_state(grammar);
  for (char c : text) s = s.advance(c);
  return s.complete();
}

inline bool is_prefix(const Grammar& grammar, std::string_view text) {
  RecognizerState s = init_state(grammar);
  for (char c : text) s = s.advance(c);
  return s.alive();
}

}  // namespace gadkit
