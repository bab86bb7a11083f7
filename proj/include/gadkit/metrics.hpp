/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/metrics.hpp
 * \brief Sliding-window KL estimates, cumulative predicate expectations and
 *  total-variation distances against the exact oracle.
 */
#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gadkit/decode.hpp"
#include "gadkit/errors.hpp"
#include "gadkit/exact.hpp"

namespace gadkit {

struct Predicate {
  enum class Kind { kEndsWith, kContains, kEquals, kGrammatical };
  Kind kind = Kind::kGrammatical;
  std::string argument;

  bool operator()(const std::string& text, bool grammatical) const {
    switch (kind) {
      case Kind::kEndsWith:
        return text.size() >= argument.size() && text.compare(text.size() - argument.size(), argument.size(), argument) == 0;
      case Kind::kContains:
        return text.find(argument) != std::string::npos;
      case Kind::kEquals:
        return text == argument;
      case Kind::kGrammatical:
        return grammatical;
    }
    return false;
  }
  bool operator()(const SampleTrace& t) const { return (*this)(t.text, t.grammatical); }

  std::string to_string() const {
    switch (kind) {
      case Kind::kEndsWith: return "ends_with:" + argument;
      case Kind::kContains: return "contains:" + argument;
      case Kind::kEquals: return "equals:" + argument;
      case Kind::kGrammatical: return "grammatical";
    }
    return "";
  }
};

/// Parses `ends_with:<s>`, `contains:<s>`, `equals:<s>` or `grammatical`.
inline Predicate parse_predicate(const std::string& spec) {
  Predicate p;
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  if (colon != std::string::npos) p.argument = spec.substr(colon + 1);
  if (kind == "ends_with") {
    p.kind = Predicate::Kind::kEndsWith;
  } else if (kind == "contains") {
    p.kind = Predicate::Kind::kContains;
  } else if (kind == "equals") {
    p.kind = Predicate::Kind::kEquals;
  } else if (kind == "grammatical" && colon == std::string::npos) {
    p.kind = Predicate::Kind::kGrammatical;
  } else {
    throw UsageError("unknown predicate '" + spec + "'");
  }
  if (p.kind != Predicate::Kind::kGrammatical && colon == std::string::npos) {
    throw UsageError("predicate '" + spec + "' needs an argument");
  }
  return p;
}

/// Expectation of a predicate under an exact distribution (every support sentence is grammatical).
inline double exact_expectation(const ExactDistribution& d, const Predicate& pred) {
  return exact_expectation(d, [&](const TokenSeq&, const std::string& text) { return pred(text, true); });
}

/*!
 * \brief series[k] = mean of (log_q - log_p) over traces [k, k + window).
 *  Small windows can give negative values; they are not clamped.
 */
inline std::vector<double> kl_series(std::span<const SampleTrace> traces, std::size_t window) {
  if (window == 0) throw UsageError("window must be positive");
  if (window > traces.size()) {
    throw UsageError("window " + std::to_string(window) + " exceeds the number of traces (" +
                     std::to_string(traces.size()) + ")");
  }
  std::vector<double> out;
  out.reserve(traces.size() - window + 1);
  for (std::size_t k = 0; k + window <= traces.size(); ++k) {
    double s = 0.0;
    for (std::size_t i = k; i < k + window; ++i) {
      if (!std::isfinite(traces[i].log_q) || !std::isfinite(traces[i].log_p)) {
        throw UsageError("trace " + std::to_string(i) + " has a non-finite log-probability");
      }
      s += traces[i].log_q - traces[i].log_p;
    }
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

/// series[i] = fraction of traces [0, i] satisfying the predicate.
inline std::vector<double> expectation_series(std::span<const SampleTrace> traces, const Predicate& pred) {
  std::vector<double> out;
  out.reserve(traces.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    hits += pred(traces[i]) ? 1 : 0;
    out.push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
  }
  return out;
}

inline TokenSeq strip_eos(const TokenSeq& tokens, TokenId eos) {
  TokenSeq s = tokens;
  if (!s.empty() && s.back() == eos) s.pop_back();
  return s;
}

/*!
 * \brief Total-variation distance between the empirical law of the traces and
 *  an exact distribution.
 * \throws SupportError when a trace is not in the exact support.
 */
inline double empirical_tv(std::span<const SampleTrace> traces, const ExactDistribution& exact) {
  if (traces.empty()) throw UsageError("empirical TV needs at least one trace");
  std::map<TokenSeq, std::size_t> counts;
  for (const auto& t : traces) {
    TokenSeq s = strip_eos(t.tokens, exact.eos);
    if (!exact.support.count(s)) throw SupportError("trace '" + t.text + "' is outside the exact support");
    ++counts[s];
  }
  const double n = static_cast<double>(traces.size());
  double tv = 0.0;
  for (const auto& [seq, m] : exact.support) {
    auto it = counts.find(seq);
    const double emp = it == counts.end() ? 0.0 : static_cast<double>(it->second) / n;
    tv += std::fabs(emp - m.prob);
  }
  return 0.5 * tv;
}

/// series[k] = empirical_tv over traces [k, k + window).
inline std::vector<double> tv_series(std::span<const SampleTrace> traces, std::size_t window,
                                     const ExactDistribution& exact) {
  if (window == 0 || window > traces.size()) throw UsageError("window must be in [1, number of traces]");
  std::vector<double> out;
  out.reserve(traces.size() - window + 1);
  for (std::size_t k = 0; k + window <= traces.size(); ++k) out.push_back(empirical_tv(traces.subspan(k, window), exact));
  return out;
}

struct ConvergenceReport {
  std::size_t count = 0;
  std::size_t window = 0;
  Predicate predicate;
  std::vector<double> kl;           // windows starting at each index
  std::vector<double> expectation;  // cumulative
  std::vector<double> tv;           // empty without an oracle
  std::optional<double> oracle_expectation;
  std::optional<double> oracle_kl;  // KL(Q || P) = -log C when an oracle is given
};

inline ConvergenceReport build_report(std::span<const SampleTrace> traces, std::size_t window, const Predicate& pred,
                                      const ExactDistribution* exact) {
  ConvergenceReport r;
  r.count = traces.size();
  r.window = window;
  r.predicate = pred;
  r.kl = kl_series(traces, window);
  r.expectation = expectation_series(traces, pred);
  if (exact) {
    r.tv = tv_series(traces, window, *exact);
    r.oracle_expectation = exact_expectation(*exact, pred);
    r.oracle_kl = -exact->log_normalizer;
  }
  return r;
}

namespace detail {
inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

/// CSV with header `index,kl_window,expectation,tv_window`; window columns are empty past the last full window.
inline void write_report_csv(std::ostream& out, const ConvergenceReport& r) {
  out << "index,kl_window,expectation,tv_window\n";
  for (std::size_t i = 0; i < r.count; ++i) {
    out << i << ',';
    if (i < r.kl.size()) out << detail::csv_number(r.kl[i]);
    out << ',' << detail::csv_number(r.expectation[i]) << ',';
    if (i < r.tv.size()) out << detail::csv_number(r.tv[i]);
    out << '\n';
  }
}

inline nlohmann::ordered_json report_summary(const ConvergenceReport& r) {
  nlohmann::ordered_json j;
  j["count"] = r.count;
  j["window"] = r.window;
  j["predicate"] = r.predicate.to_string();
  j["first_window_kl"] = r.kl.front();
  j["last_window_kl"] = r.kl.back();
  j["final_expectation"] = r.expectation.back();
  if (r.oracle_expectation) j["oracle_expectation"] = *r.oracle_expectation;
  if (r.oracle_kl) j["oracle_kl_q_p"] = *r.oracle_kl;
  if (!r.tv.empty()) {
    j["first_window_tv"] = r.tv.front();
    j["last_window_tv"] = r.tv.back();
  }
  return j;
}

}  // namespace gadkit
