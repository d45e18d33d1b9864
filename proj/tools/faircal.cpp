// faircal: synthetic data generation, cross-validated evaluation and report
// extraction.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 fit failure,
// 5 I/O error.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "faircal/data.hpp"
#include "faircal/error.hpp"
#include "faircal/harness.hpp"
#include "faircal/synth.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kFit = 4, kIo = 5 };

struct SynthArgs {
  std::string spec;
  std::string out_pairs;
  std::string out_emb;
  std::string emb_format = "binary";
  std::optional<std::uint64_t> seed;
  bool inter_pairs = false;
};

struct RunArgs {
  std::string pairs;
  std::string embeddings;
  std::vector<std::string> methods = {"baseline", "faircal", "oracle", "fsn", "gst"};
  std::string calibrator = "beta";
  std::size_t clusters = 100;
  int folds = 0;
  std::vector<double> fprs = {1e-3, 1e-2};
  std::vector<std::string> attributes;
  std::uint64_t seed = 42;
  bool post_calibrate = false;
  bool normalize = false;
  int bins = 0;
  int threads = 0;
  std::string out = "report.json";
  std::string format = "json";
};

struct ReportArgs {
  std::string in;
  std::string table = "accuracy";
  std::string format = "csv";
  std::string out;
};

int run_synth(const SynthArgs& args) {
  faircal::SynthSpec spec = faircal::load_synth_spec(args.spec);
  if (args.seed) spec.seed = *args.seed;
  if (args.inter_pairs) spec.inter_pairs = true;
  faircal::Dataset ds = faircal::generate(spec);
  faircal::write_pairs_csv(args.out_pairs, ds.pairs(), ds.attribute_names());
  auto format = args.emb_format == "text" ? faircal::EmbeddingFormat::kText : faircal::EmbeddingFormat::kBinary;
  faircal::write_embeddings(args.out_emb, ds.embeddings(), format);
  std::cerr << "wrote " << ds.pairs().size() << " pairs and " << ds.embeddings().size() << " embeddings\n";
  return kOk;
}

int run_run(const RunArgs& args) {
  faircal::RunConfig config;
  for (const auto& m : args.methods) config.methods.push_back(faircal::method_from_string(m));
  config.calibrator = faircal::calibrator_from_string(args.calibrator);
  config.clusters = args.clusters;
  config.folds = args.folds;
  config.target_fprs = args.fprs;
  config.attribute_names = args.attributes;
  config.seed = args.seed;
  config.post_calibrate_scores = args.post_calibrate;
  config.normalize = args.normalize;
  config.bins = args.bins;
  config.threads = args.threads;
  auto format = faircal::report_format_from_string(args.format);
  faircal::validate(config);

  faircal::Dataset ds = faircal::load_dataset(args.pairs, args.embeddings);
  if (ds.load_report().pairs_dropped > 0) {
    std::cerr << "dropped " << ds.load_report().pairs_dropped << " pairs with unresolved images\n";
  }
  faircal::MetricsReport report = faircal::run_cross_validation(ds, config);
  faircal::emit_report(report, format, args.out);
  for (const auto& m : report.methods) {
    for (const auto& note : m.notes) std::cerr << m.method << ": " << note << '\n';
    for (const auto& err : m.errors) std::cerr << m.method << ": error: " << err << '\n';
  }
  return report.has_fit_failures() ? kFit : kOk;
}

int run_report(const ReportArgs& args) {
  if (args.format != "csv") throw faircal::ConfigError("report supports --format csv only");
  faircal::MetricsReport report = faircal::read_report(args.in);
  std::string table = faircal::report_table_csv(report, args.table);
  if (args.out.empty()) {
    std::cout << table;
  } else {
    std::ofstream out(args.out, std::ios::binary);
    if (!(out << table)) throw faircal::IoError("cannot write " + args.out);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness calibration toolkit for embedding-based verification"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic biased verification dataset");
  synth_cmd->add_option("--spec", synth.spec, "key=value spec file, or inline 'k=v;k=v' entries")->required();
  synth_cmd->add_option("--out-pairs", synth.out_pairs, "Pair manifest to write")->required();
  synth_cmd->add_option("--out-emb", synth.out_emb, "Embedding file to write")->required();
  synth_cmd->add_option("--emb-format", synth.emb_format, "binary or text")
      ->check(CLI::IsMember({"binary", "text"}));
  synth_cmd->add_option("--seed", synth.seed, "Override the spec seed");
  synth_cmd->add_flag("--inter-pairs", synth.inter_pairs, "Add cross-subgroup imposter pairs");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Leave-one-fold-out evaluation");
  run_cmd->add_option("--pairs", run.pairs, "Pair manifest (CSV)")->required();
  run_cmd->add_option("--embeddings", run.embeddings, "Embedding file (binary FCE1 or text)")->required();
  run_cmd->add_option("--methods", run.methods, "baseline,faircal,oracle,fsn,gst")->delimiter(',');
  run_cmd->add_option("--calibrator", run.calibrator, "beta, binning or isotonic")
      ->check(CLI::IsMember({"beta", "binning", "isotonic"}));
  run_cmd->add_option("--clusters", run.clusters, "K for k-means");
  run_cmd->add_option("--folds", run.folds, "Expected fold count (0: take from data)");
  run_cmd->add_option("--fpr", run.fprs, "Target global FPRs")->delimiter(',');
  run_cmd->add_option("--attributes", run.attributes, "Sensitive attribute names")->delimiter(',');
  run_cmd->add_option("--seed", run.seed, "Random seed");
  run_cmd->add_flag("--post-calibrate-scores", run.post_calibrate, "Beta-calibrate FSN/GST scores before KS");
  run_cmd->add_flag("--normalize", run.normalize, "Cluster unit-normalized embeddings");
  run_cmd->add_option("--bins", run.bins, "Histogram bins (0: automatic)");
  run_cmd->add_option("--threads", run.threads, "Worker threads (0: FAIRCAL_THREADS or all cores)");
  run_cmd->add_option("--out", run.out, "Report path");
  run_cmd->add_option("--format", run.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Extract a table from a JSON report");
  report_cmd->add_option("--in", report.in, "JSON report")->required();
  report_cmd->add_option("--table", report.table, "accuracy, ks, fpr-dev, fnr-dev or fpr-curve")
      ->check(CLI::IsMember({"accuracy", "ks", "fpr-dev", "fnr-dev", "fpr-curve"}));
  report_cmd->add_option("--format", report.format, "csv");
  report_cmd->add_option("--out", report.out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*run_cmd) return run_run(run);
    if (*report_cmd) return run_report(report);
  } catch (const faircal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const faircal::ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << '\n';
    return kConfig;
  } catch (const faircal::ParseError& e) {
    std::cerr << "data error: " << e.what() << " (at " << e.location() << ")\n";
    return kData;
  } catch (const faircal::StructuralError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const faircal::MetricError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const faircal::FitError& e) {
    std::cerr << "fit error: " << e.what() << '\n';
    return kFit;
  } catch (const faircal::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  }
  return kOk;
}
