// Command-line front end. Subcommand logic lives in gadkit/cli.hpp.
#include <CLI11.hpp>

#include "gadkit/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Grammar-aligned decoding toolkit"};
  app.require_subcommand(1);

  gadkit::RunConfig run;
  auto* run_cmd = app.add_subcommand("run", "Sample sequences with gcd, asap or rejection decoding");
  run_cmd->add_option("--grammar", run.grammar_path, "BNF grammar file")->required();
  run_cmd->add_option("--lm", run.model_spec, "table:<path> | ngram:<path>:<n>:<alpha> | remote:<url>")->required();
  run_cmd->add_option("--decoder", run.decoder, "gcd, asap or rejection")->capture_default_str();
  run_cmd->add_option("--iterations", run.iterations, "Number of samples")->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "RNG seed")->capture_default_str();
  run_cmd->add_option("--max-len", run.max_len, "Token budget per sample, EOS excluded")->capture_default_str();
  run_cmd->add_option("--max-attempts", run.max_attempts, "Rejection attempts per sample")->capture_default_str();
  run_cmd->add_option("--output", run.output, "JSONL trace file")->required();
  run_cmd->add_option("--trie-in", run.trie_in, "Resume from a trie snapshot (asap)");
  run_cmd->add_option("--trie-out", run.trie_out, "Write the final trie snapshot (asap)");

  gadkit::ExactConfig exact;
  auto* exact_cmd = app.add_subcommand("exact", "Enumerate the exact target and GCD distributions");
  exact_cmd->add_option("--grammar", exact.grammar_path, "BNF grammar file")->required();
  exact_cmd->add_option("--lm", exact.model_spec, "Model spec")->required();
  exact_cmd->add_option("--len-bound", exact.len_bound, "Maximum content tokens")->capture_default_str();
  exact_cmd->add_option("--tail-tol", exact.tail_tol, "Tolerated mass beyond the bound")->capture_default_str();
  exact_cmd->add_option("--out", exact.output, "Output JSON (default: stdout)");

  gadkit::ReportConfig report;
  auto* report_cmd = app.add_subcommand("report", "Window KL, expectations and TV as CSV + JSON summary");
  report_cmd->add_option("traces", report.traces, "JSONL trace files")->required();
  report_cmd->add_option("--window", report.window, "Sliding window size")->capture_default_str();
  report_cmd->add_option("--predicate", report.predicate, "ends_with:<s> | contains:<s> | equals:<s> | grammatical")
      ->capture_default_str();
  report_cmd->add_option("--exact", report.exact_path, "Output of the exact subcommand");
  report_cmd->add_option("--out-dir", report.out_dir, "Directory for report files")->capture_default_str();
  report_cmd->add_option("--jobs", report.jobs, "Trace files processed in parallel")->capture_default_str();

  gadkit::CompareConfig compare;
  auto* compare_cmd = app.add_subcommand("compare", "Final expectations of two runs against the oracle");
  compare_cmd->add_option("trace_a", compare.trace_a, "First JSONL trace")->required();
  compare_cmd->add_option("trace_b", compare.trace_b, "Second JSONL trace")->required();
  compare_cmd->add_option("--exact", compare.exact_path, "Output of the exact subcommand")->required();
  compare_cmd->add_option("--predicate", compare.predicate, "Predicate")->capture_default_str();
  compare_cmd->add_option("--out", compare.output, "Output JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? gadkit::kExitOk : gadkit::kExitUsage;
  }

  return gadkit::guarded([&] {
    if (*run_cmd) gadkit::cmd_run(run);
    if (*exact_cmd) gadkit::cmd_exact(exact);
    if (*report_cmd) gadkit::cmd_report(report);
    if (*compare_cmd) gadkit::cmd_compare(compare);
  });
}
