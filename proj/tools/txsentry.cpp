#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "txsentry/app.hpp"
#include "txsentry/error.hpp"

namespace {

using namespace txsentry;

struct DetectOptions {
  std::string input;
  std::string out;
  std::string config;
  std::string features;
  std::string mode;
  std::string account;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, DetectOptions& o) {
  cmd->add_option("--input", o.input, "Explorer JSON or CSV capture")->required();
  cmd->add_option("--out", o.out, "Report path (JSONL)")->required();
  cmd->add_option("--config", o.config, "key = value config file");
  cmd->add_option("--features", o.features, "Comma list of value,gasprice,gaslimit");
  cmd->add_option("--mode", o.mode, "univariate | multivariate | both");
  cmd->add_option("--account", o.account, "Monitored address (default: most frequent)");
  cmd->add_option("--seed", o.seed, "Detector seed");
}

EnsembleConfig detect_config(const DetectOptions& o) {
  EnsembleConfig c = o.config.empty() ? EnsembleConfig{} : load_config(o.config);
  if (!o.features.empty()) apply_setting(c, "features", o.features);
  if (!o.mode.empty()) apply_setting(c, "mode", o.mode);
  if (o.seed) c.seed = *o.seed;
  return c;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Ethereum account transaction anomaly detection"};
  app.require_subcommand(1);

  auto* detect = app.add_subcommand("detect", "Run the detector ensemble");
  detect->require_subcommand(1);

  DetectOptions batch_opts;
  auto* batch = detect->add_subcommand("batch", "Fit and score a whole capture");
  add_common(batch, batch_opts);

  DetectOptions stream_opts;
  std::optional<std::int64_t> window, retrain, grid, bootstrap;
  auto* stream = detect->add_subcommand("stream", "Replay a capture through the sliding-window engine");
  add_common(stream, stream_opts);
  stream->add_option("--window", window, "Window duration in seconds (default 300)");
  stream->add_option("--retrain", retrain, "Retrain interval in seconds (default 345600)");
  stream->add_option("--grid", grid, "Grid step in seconds (default 60)");
  stream->add_option("--bootstrap", bootstrap, "Initial reference span in seconds (default: retrain interval)");

  std::string synth_config, synth_out, synth_labels;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "Generate labelled synthetic transactions");
  synth->add_option("--config", synth_config, "key = value generator config");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Transactions CSV")->required();
  synth->add_option("--labels", synth_labels, "Labels CSV")->required();

  std::string eval_report, eval_labels;
  std::int64_t tolerance = 120, eval_grid = 60;
  auto* eval = app.add_subcommand("eval", "Score a report against labels");
  eval->add_option("--report", eval_report, "Report JSONL")->required();
  eval->add_option("--labels", eval_labels, "Labels CSV")->required();
  eval->add_option("--tolerance", tolerance, "Match tolerance in seconds")->capture_default_str();
  eval->add_option("--grid", eval_grid, "Grid step of the report in seconds")->capture_default_str();

  std::string plot_report, plot_out;
  auto* plot = app.add_subcommand("plotdata", "Write per-feature plot CSVs from a report");
  plot->add_option("--report", plot_report, "Report JSONL")->required();
  plot->add_option("--out", plot_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (batch->parsed()) {
    const auto config = detect_config(batch_opts);
    const auto txs = load_transactions(batch_opts.input);
    const auto report = run_batch(txs, config, batch_opts.account);
    write_report(batch_opts.out, report);
    print_warnings(report.warnings);
    std::size_t alarms = 0;
    for (const auto& c : report.cells) alarms += c.alarm;
    std::cerr << report.cells.size() << " cells, " << alarms << " alarmed\n";
  } else if (stream->parsed()) {
    auto config = detect_config(stream_opts);
    if (grid) config.grid_step = *grid;
    if (window) config.window = *window;
    if (retrain) config.retrain_interval = config.reference_span = *retrain;
    config.validate();
    const auto txs = load_transactions(stream_opts.input);
    const auto account = stream_opts.account.empty() ? infer_account(txs) : stream_opts.account;
    const auto frame = build_frame(txs, config.features, config.grid_step);
    const auto replay = replay_stream(frame, config, bootstrap.value_or(config.retrain_interval), account);
    write_report(stream_opts.out, replay.report);
    for (const auto& n : replay.notices) std::cerr << "notice: " << n << "\n";
    print_warnings(replay.report.warnings);
    std::cerr << replay.monitored.size() << " cells monitored, " << replay.report.cells.size() << " alarms, "
              << replay.retrains << " retrains\n";
  } else if (synth->parsed()) {
    SynthConfig config = synth_config.empty() ? SynthConfig{} : load_synth_config(synth_config);
    if (synth_seed) config.seed = *synth_seed;
    const auto out = synth_generate(config);
    write_csv(out.transactions, synth_out);
    write_labels(out.labels, synth_labels);
  } else if (eval->parsed()) {
    const auto report = read_report(eval_report);
    const auto labels = read_labels(eval_labels);
    std::cout << format_metrics(evaluate(report.cells, labels, tolerance, eval_grid)) << "\n";
  } else if (plot->parsed()) {
    for (const auto& path : emit_plot_data(read_report(plot_report), plot_out)) std::cout << path.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const txsentry::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const txsentry::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
