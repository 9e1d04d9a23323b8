#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "txsentry/ensemble.hpp"
#include "txsentry/ingest.hpp"

namespace txsentry {

// ---------------------------------------------------------------------------
// Synthetic labelled transactions
// ---------------------------------------------------------------------------

enum class InjectionKind { Spike, Burst, TrendBreak, GasDecouple };

std::string_view injection_name(InjectionKind kind);
InjectionKind parse_injection(std::string_view name);

struct Injection {
  InjectionKind kind = InjectionKind::Spike;
  std::int64_t at = 0;  // seconds after start
  double magnitude = 10.0;
};

struct SynthConfig {
  std::int64_t start = 1600000000;  // unix seconds
  std::int64_t duration = 86400;
  double base_rate = 1.0;  // transactions per minute
  double value_mu = 0.0;   // log of ether
  double value_sigma = 0.25;
  double gas_price_level = 50.0;  // gwei
  double gas_price_noise = 5.0;
  double gas_limit_level = 60000.0;
  double gas_limit_noise = 6000.0;
  double gas_correlation = 0.8;
  std::vector<Injection> injections;
  std::uint64_t seed = 1;
  std::string account = "0x00000000000000000000000000000000000a11ce";

  void validate() const;
};

struct Label {
  std::int64_t ts = 0;
  InjectionKind kind = InjectionKind::Spike;
  double magnitude = 0.0;

  friend bool operator==(const Label&, const Label&) = default;
};

struct SynthOutput {
  std::vector<Transaction> transactions;  // sorted
  std::vector<Label> labels;              // sorted by time
};

/// Poisson arrivals, log-normal values, gas price and gas limit drawn as a
/// correlated normal pair. Spike places one transaction at the label time
/// and scales its value; Burst adds magnitude * base_rate arrivals within
/// one minute; TrendBreak scales every later value; GasDecouple scales the
/// gas price of every transaction within one minute.
SynthOutput synth_generate(const SynthConfig& config);

/// Flat key = value text. Injections are written `inject = kind@offset:magnitude`
/// and may repeat.
SynthConfig parse_synth_config(std::string_view text);
SynthConfig load_synth_config(const std::filesystem::path& path);

/// CSV with header `timestamp,kind,magnitude`.
std::string format_labels(const std::vector<Label>& labels);
void write_labels(const std::vector<Label>& labels, const std::filesystem::path& path);
std::vector<Label> parse_labels(std::string_view text);
std::vector<Label> read_labels(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Stream replay
// ---------------------------------------------------------------------------

struct StreamReplay {
  EnsembleReport report;  // newly alarmed cells, in emission order
  std::vector<CellVerdict> monitored;  // ts and alarm for every cell after the bootstrap span
  std::vector<std::string> notices;
  int retrains = 0;
  double max_advance_seconds = 0.0;
};

/// Bootstraps a StreamEngine on the first `bootstrap_span` seconds of
/// `frame`, then feeds the rest in chunks of `window` seconds.
StreamReplay replay_stream(const Frame& frame, const EnsembleConfig& config, std::int64_t bootstrap_span,
                           const std::string& account = {});

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct AlarmEvent {
  std::int64_t start = 0;  // first alarmed cell
  std::int64_t end = 0;    // last alarmed cell
};

/// Alarmed cells grouped into events. A cell joins the previous event when
/// it starts at most `step + max_gap` seconds after that event's last cell.
std::vector<AlarmEvent> alarm_events(const std::vector<CellVerdict>& cells, std::int64_t step,
                                     std::int64_t max_gap = 0);

struct EvalMetrics {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 1.0;
  double recall = 1.0;
  double accuracy = 1.0;  // over report cells
  std::int64_t match_tolerance = 0;
  std::size_t cells = 0;
};

/// Alarm events allow gaps of up to `tolerance`, so cells the tolerance
/// cannot tell apart count once. An event matches a label inside
/// [start - tolerance, end + tolerance].
/// Events are taken in time order and each claims the earliest unmatched
/// label it can reach. Cell accuracy treats a cell as truly anomalous when a
/// label lies within the tolerance of it.
EvalMetrics evaluate(const std::vector<CellVerdict>& cells, const std::vector<Label>& labels,
                     std::int64_t tolerance, std::int64_t step);

std::string format_metrics(const EvalMetrics& metrics);

// ---------------------------------------------------------------------------
// Plot data
// ---------------------------------------------------------------------------

/// One `<feature>.csv` per report feature with columns timestamp, value, one
/// 0/1 column per detector, one per category decision, and alarm. Returns the
/// written paths.
std::vector<std::filesystem::path> emit_plot_data(const EnsembleReport& report, const std::filesystem::path& dir);

std::string format_plot_csv(const EnsembleReport& report, std::size_t feature);

}  // namespace txsentry
