/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/cli.hpp
 * \brief Subcommands behind the gadkit executable: run, exact, report, compare.
 *  Each cmd_* function throws gadkit errors; exit_code() maps them to the
 *  process status.
 */
#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gadkit/decode.hpp"
#include "gadkit/errors.hpp"
#include "gadkit/exact.hpp"
#include "gadkit/grammar.hpp"
#include "gadkit/lm.hpp"
#include "gadkit/metrics.hpp"
#include "gadkit/remote.hpp"
#include "gadkit/trie.hpp"

namespace gadkit {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitIo = 3,
  kExitModel = 4,
  kExitInvariant = 5,
};

/// Process status for an exception thrown by a subcommand.
inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const BudgetError*>(&e)) return kExitUsage;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kExitIo;
  if (dynamic_cast<const ModelError*>(&e)) return kExitModel;
  return kExitInvariant;
}

/// Runs fn, reporting any error on `err` and returning the matching exit code.
template <typename Fn>
int guarded(Fn&& fn, std::ostream& err = std::cerr) {
  try {
    fn();
    return kExitOk;
  } catch (const std::exception& e) {
    err << "gadkit: error: " << e.what() << '\n';
    return exit_code(e);
  }
}

inline Grammar load_grammar(const std::string& path) { return parse_bnf(detail::read_file(path)); }

/// `table:<path>`, `ngram:<path>:<n>:<alpha>` or `remote:<url>`.
inline std::unique_ptr<TokenModel> make_model(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("model spec '" + spec + "' has no backend prefix");
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  if (kind == "table") return std::make_unique<TableModel>(load_table_model(rest));
  if (kind == "remote") return std::make_unique<RemoteModel>(connect_remote(rest));
  if (kind == "ngram") {
    const auto c2 = rest.rfind(':');
    const auto c1 = c2 == std::string::npos || c2 == 0 ? std::string::npos : rest.rfind(':', c2 - 1);
    if (c1 == std::string::npos) throw UsageError("ngram spec must be ngram:<path>:<n>:<alpha>");
    int order = 0;
    double alpha = 0.0;
    try {
      std::size_t used = 0;
      const std::string n_text = rest.substr(c1 + 1, c2 - c1 - 1);
      const std::string a_text = rest.substr(c2 + 1);
      order = std::stoi(n_text, &used);
      if (used != n_text.size()) throw std::invalid_argument(n_text);
      alpha = std::stod(a_text, &used);
      if (used != a_text.size()) throw std::invalid_argument(a_text);
    } catch (const std::logic_error&) {
      throw UsageError("ngram spec has a malformed order or alpha: '" + spec + "'");
    }
    return std::make_unique<NGramModel>(load_ngram_model(rest.substr(0, c1), order, alpha));
  }
  throw UsageError("unknown model backend '" + kind + "'");
}

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("error writing '" + path + "'");
}

inline std::string join_ids(const TokenSeq& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(s[i]);
  }
  return out;
}

}  // namespace detail

inline std::string meta_path(const std::string& trace_path) { return trace_path + ".meta.json"; }

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string grammar_path;
  std::string model_spec;
  std::string decoder = "asap";
  std::uint64_t iterations = 2000;
  std::uint64_t seed = 0;
  std::size_t max_len = 64;
  std::uint64_t max_attempts = 100000;
  std::string output;
  std::string trie_in;
  std::string trie_out;

  void validate() const {
    if (decoder != "gcd" && decoder != "asap" && decoder != "rejection") {
      throw UsageError("unknown decoder '" + decoder + "' (expected gcd, asap or rejection)");
    }
    if ((!trie_in.empty() || !trie_out.empty()) && decoder != "asap") {
      throw UsageError("trie snapshots are only valid with --decoder asap");
    }
    if (grammar_path.empty()) throw UsageError("--grammar is required");
    if (model_spec.empty()) throw UsageError("--lm is required");
    if (output.empty()) throw UsageError("--output is required");
    if (iterations < 1) throw UsageError("--iterations must be at least 1");
    if (max_len < 1) throw UsageError("--max-len must be at least 1");
    if (max_attempts < 1) throw UsageError("--max-attempts must be at least 1");
  }
};

/*!
 * \brief Decodes config.iterations samples and writes them as JSON Lines to
 *  config.output, plus a `<output>.meta.json` sidecar with fingerprints.
 */
inline void cmd_run(const RunConfig& config) {
  config.validate();
  const Grammar grammar = load_grammar(config.grammar_path);
  const auto model = make_model(config.model_spec);
  DecodeConfig dc;
  dc.max_len = config.max_len;
  dc.seed = config.seed;
  dc.iterations = config.iterations;
  dc.max_attempts = config.max_attempts;

  std::vector<SampleTrace> traces;
  std::uint64_t first_iteration = 0;
  if (config.decoder == "gcd") {
    traces = run_gcd(*model, grammar, dc);
  } else if (config.decoder == "rejection") {
    traces = run_rejection(*model, grammar, dc);
  } else {
    SamplerTrie trie = config.trie_in.empty()
                           ? SamplerTrie(grammar, model->vocabulary())
                           : SamplerTrie::load(config.trie_in, grammar, model->vocabulary(), model->fingerprint());
    first_iteration = trie.sample_count();
    traces = run_asap(*model, grammar, dc, trie);
    if (!config.trie_out.empty()) trie.save(config.trie_out, model->fingerprint());
  }
  for (const auto& t : traces) {
    if (config.decoder != "rejection" && !t.grammatical) throw InvariantError("emitted an ungrammatical sample");
  }
  write_traces(config.output, traces);

  nlohmann::ordered_json meta;
  meta["decoder"] = config.decoder;
  meta["seed"] = config.seed;
  meta["iterations"] = config.iterations;
  meta["first_iteration"] = first_iteration;
  meta["max_len"] = config.max_len;
  meta["model"] = config.model_spec;
  meta["grammar_fingerprint"] = grammar.fingerprint();
  meta["vocab_fingerprint"] = model->vocabulary().fingerprint();
  meta["model_fingerprint"] = model->fingerprint();
  meta["eos"] = model->vocabulary().eos();
  meta["meta"] = {{"created", detail::utc_timestamp()}};
  detail::write_json(meta_path(config.output), meta);
}

// ---------------------------------------------------------------------------
// exact
// ---------------------------------------------------------------------------

struct ExactConfig {
  std::string grammar_path;
  std::string model_spec;
  std::size_t len_bound = 64;
  double tail_tol = 1e-12;
  std::string output;  // empty: stdout
};

inline nlohmann::ordered_json exact_to_json(const ExactDistribution& q, const ExactDistribution& gcd,
                                            const Grammar& grammar, const TokenModel& model, std::size_t len_bound) {
  nlohmann::ordered_json j;
  j["C"] = q.normalizer;
  j["log_C"] = q.log_normalizer;
  nlohmann::ordered_json support = nlohmann::ordered_json::object();
  nlohmann::ordered_json gcd_support = nlohmann::ordered_json::object();
  nlohmann::ordered_json sequences = nlohmann::ordered_json::array();
  for (const auto& [seq, m] : q.support) {
    support[m.text] = support.value(m.text, 0.0) + m.prob;
    const double g = gcd.probability(seq);
    gcd_support[m.text] = gcd_support.value(m.text, 0.0) + g;
    sequences.push_back({{"tokens", seq},
                         {"text", m.text},
                         {"q", m.prob},
                         {"log_q", m.log_prob},
                         {"log_p", m.log_p},
                         {"gcd", g}});
  }
  j["support"] = std::move(support);
  j["gcd_support"] = std::move(gcd_support);
  j["sequences"] = std::move(sequences);
  nlohmann::ordered_json efg = nlohmann::ordered_json::object();
  for (const auto& [prefix, c] : q.efg) efg[detail::join_ids(prefix)] = c;
  j["efg"] = std::move(efg);
  j["dead_mass"] = q.dead_mass;
  j["tail_mass"] = q.tail_mass;
  j["len_bound"] = len_bound;
  j["eos"] = model.vocabulary().eos();
  j["grammar_fingerprint"] = grammar.fingerprint();
  j["vocab_fingerprint"] = model.vocabulary().fingerprint();
  j["model_fingerprint"] = model.fingerprint();
  return j;
}

/// Rebuilds the Q distribution (support only) from an `exact` dump.
inline ExactDistribution exact_from_json(const nlohmann::json& j) {
  ExactDistribution d;
  try {
    d.normalizer = j.at("C").get<double>();
    d.log_normalizer = j.at("log_C").get<double>();
    d.eos = j.at("eos").get<TokenId>();
    for (const auto& s : j.at("sequences")) {
      SentenceMass m;
      m.text = s.at("text").get<std::string>();
      m.prob = s.at("q").get<double>();
      m.log_prob = s.at("log_q").get<double>();
      m.log_p = s.at("log_p").get<double>();
      d.support.emplace(s.at("tokens").get<TokenSeq>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("malformed exact dump: ") + e.what());
  }
  return d;
}

inline void cmd_exact(const ExactConfig& config) {
  if (config.len_bound < 1) throw UsageError("--len-bound must be at least 1");
  const Grammar grammar = load_grammar(config.grammar_path);
  const auto model = make_model(config.model_spec);
  const auto q = enumerate_q(*model, grammar, config.len_bound, config.tail_tol);
  const auto gcd = enumerate_gcd(*model, grammar, config.len_bound, config.tail_tol);
  const auto j = exact_to_json(q, gcd, grammar, *model, config.len_bound);
  if (config.output.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    detail::write_json(config.output, j);
  }
}

// ---------------------------------------------------------------------------
// report / compare
// ---------------------------------------------------------------------------

namespace detail {

struct LoadedTraces {
  std::string path;
  std::vector<SampleTrace> traces;
  nlohmann::json meta;  // null when the sidecar is absent
};

inline LoadedTraces load_traces_with_meta(const std::string& path, bool require_meta) {
  LoadedTraces t;
  t.path = path;
  t.traces = read_traces(path);
  const std::string mp = meta_path(path);
  if (std::filesystem::exists(mp)) {
    t.meta = parse_json_file(mp);
  } else if (require_meta) {
    throw IoError("missing trace metadata '" + mp + "'");
  }
  return t;
}

inline void check_fingerprint(const LoadedTraces& t, const nlohmann::json& exact) {
  if (t.meta.is_null() || exact.is_null()) return;
  const auto a = t.meta.value("vocab_fingerprint", std::string());
  const auto b = exact.value("vocab_fingerprint", std::string());
  if (a != b) {
    throw UsageError("vocabulary fingerprint of '" + t.path + "' (" + a + ") does not match the exact dump (" + b + ")");
  }
}

}  // namespace detail

struct ReportConfig {
  std::vector<std::string> traces;
  std::size_t window = 500;
  std::string predicate = "grammatical";
  std::string exact_path;
  std::string out_dir = ".";
  unsigned jobs = 1;
};

/// Writes `<out_dir>/<stem>.csv` and `<out_dir>/<stem>.summary.json` per trace file.
inline void cmd_report(const ReportConfig& config) {
  if (config.traces.empty()) throw UsageError("report needs at least one trace file");
  if (config.jobs < 1) throw UsageError("--jobs must be at least 1");
  const Predicate pred = parse_predicate(config.predicate);
  nlohmann::json exact_json;
  std::optional<ExactDistribution> exact;
  if (!config.exact_path.empty()) {
    exact_json = detail::parse_json_file(config.exact_path);
    exact = exact_from_json(exact_json);
  }
  std::filesystem::create_directories(config.out_dir);

  auto one = [&](const std::string& path) {
    const auto loaded = detail::load_traces_with_meta(path, false);
    detail::check_fingerprint(loaded, exact_json);
    const auto report = build_report(loaded.traces, config.window, pred, exact ? &*exact : nullptr);
    const std::string stem = std::filesystem::path(path).stem().string();
    const auto base = std::filesystem::path(config.out_dir) / stem;
    std::ofstream csv(base.string() + ".csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("cannot write '" + base.string() + ".csv'");
    write_report_csv(csv, report);
    if (!csv) throw IoError("error writing '" + base.string() + ".csv'");
    auto summary = report_summary(report);
    summary["trace"] = path;
    detail::write_json(base.string() + ".summary.json", summary);
  };

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < config.traces.size(); i = next++) {
      try {
        one(config.traces[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const unsigned n = std::min<std::size_t>(config.jobs, config.traces.size());
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct CompareConfig {
  std::string trace_a;
  std::string trace_b;
  std::string exact_path;
  std::string predicate = "grammatical";
  std::string output;  // empty: stdout
};

/// Final predicate expectation of each trace file next to the oracle value.
inline nlohmann::ordered_json compare_json(const CompareConfig& config) {
  const Predicate pred = parse_predicate(config.predicate);
  const auto exact_json = detail::parse_json_file(config.exact_path);
  const auto exact = exact_from_json(exact_json);
  const double oracle = exact_expectation(exact, pred);
  nlohmann::ordered_json j;
  j["predicate"] = pred.to_string();
  j["oracle"] = oracle;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& path : {config.trace_a, config.trace_b}) {
    const auto loaded = detail::load_traces_with_meta(path, true);
    detail::check_fingerprint(loaded, exact_json);
    if (loaded.traces.empty()) throw UsageError("trace file '" + path + "' is empty");
    const double e = expectation_series(loaded.traces, pred).back();
    runs.push_back({{"trace", path},
                    {"decoder", loaded.meta.value("decoder", std::string("unknown"))},
                    {"count", loaded.traces.size()},
                    {"final_expectation", e},
                    {"abs_error", std::fabs(e - oracle)}});
  }
  j["runs"] = std::move(runs);
  return j;
}

inline void cmd_compare(const CompareConfig& config) {
  const auto j = compare_json(config);
  if (config.output.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    detail::write_json(config.output, j);
  }
}

}  // namespace gadkit
