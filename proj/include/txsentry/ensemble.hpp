#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "txsentry/config.hpp"
#include "txsentry/detectors.hpp"

namespace txsentry {

struct DetectorVerdict {
  std::string id;
  Category category = Category::Predictive;
  std::vector<bool> flags;
  std::vector<bool> scored;  // cells this detector voted on
};

struct CategoryTally {
  int flagged = 0;
  int total = 0;
  bool decision = false;  // flagged > total / 2

  friend bool operator==(const CategoryTally&, const CategoryTally&) = default;
};

struct CellVerdict {
  std::int64_t ts = 0;
  std::array<CategoryTally, kCategoryCount> categories{};
  bool alarm = false;
  std::vector<std::string> detectors;  // flagging detectors
  std::vector<std::string> voters;     // every detector that scored the cell
  std::vector<double> values;          // one per report feature

  const CategoryTally& tally(Category c) const { return categories[static_cast<std::size_t>(c)]; }
  friend bool operator==(const CellVerdict&, const CellVerdict&) = default;
};

struct EnsembleReport {
  std::string account;
  std::vector<FeatureKind> features;
  std::vector<std::string> detector_ids;
  std::vector<CellVerdict> cells;
  std::vector<std::string> warnings;
};

/// Strict majority per category, then OR over `alarm_categories`.
/// Throws std::invalid_argument when verdict lengths differ from the
/// timestamp count.
std::vector<CellVerdict> category_vote(const std::vector<DetectorVerdict>& verdicts,
                                       std::span<const std::int64_t> timestamps,
                                       std::span<const Category> alarm_categories = kAllCategories);

/// Most frequent address among senders and receivers (ties: smallest).
std::string infer_account(const std::vector<Transaction>& transactions);

/// Predictive detectors fit on the first train_ratio of the cells and score
/// the rest; window and row detectors fit on and score every cell.
EnsembleReport run_batch(const std::vector<Transaction>& transactions, const EnsembleConfig& config,
                         const std::string& account = {});
EnsembleReport run_batch(const Frame& frame, const EnsembleConfig& config, const std::string& account = {});

struct StreamStep {
  std::vector<CellVerdict> alarms;  // newly alarmed cells, in time order
  std::vector<std::string> notices;
  bool retrained = false;
};

class StreamEngine {
 public:
  StreamEngine(EnsembleConfig config, std::string account = {});

  /// Takes `reference` as the initial database and fits every detector.
  void bootstrap(Frame reference);

  /// Appends cells starting at `start` (one value per feature each), scores
  /// them, evicts cells older than the reference span and retrains when due.
  /// A start after the expected one zero-fills the gap and adds a notice.
  StreamStep advance(std::int64_t start, const std::vector<std::vector<double>>& cells);

  /// Refits every detector on the current database.
  void retrain();

  std::int64_t now() const;  // end of the newest cell
  std::int64_t last_retrain() const { return last_retrain_; }
  int retrain_count() const { return retrain_count_; }
  const Frame& database() const { return frame_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::vector<std::string> detector_ids() const;
  /// Per-detector flags over the stored cells.
  std::vector<DetectorVerdict> verdicts() const;

 private:
  CellVerdict vote_cell(std::size_t index) const;
  void fit_all();

  EnsembleConfig config_;
  std::string account_;
  Frame frame_;
  bool ready_ = false;
  std::vector<std::unique_ptr<Detector>> detectors_;
  std::vector<char> active_;
  std::vector<std::vector<char>> flags_, scored_;  // [detector][cell - frame_.first]
  std::vector<char> emitted_;
  std::vector<std::size_t> covered_;  // per detector, end of the cells it has voted on
  std::size_t pending_ = 0;           // first cell not yet voted
  std::int64_t last_retrain_ = 0;
  int retrain_count_ = 0;
  std::vector<std::string> warnings_;
};

// Report lines: {"ts", "account", "categories": {name: {flagged, total,
// decision}}, "alarm", "detectors", "voters", "values": {feature: value}}.
void write_report(std::ostream& out, const EnsembleReport& report);
void write_report(const std::filesystem::path& path, const EnsembleReport& report);
std::string format_report_line(const EnsembleReport& report, const CellVerdict& cell);
EnsembleReport parse_report(std::string_view jsonl);
EnsembleReport read_report(const std::filesystem::path& path);

}  // namespace txsentry
