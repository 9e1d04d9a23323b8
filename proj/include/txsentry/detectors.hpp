#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "txsentry/config.hpp"
#include "txsentry/ingest.hpp"

namespace txsentry {

// Time-domain cells of every enabled feature on one grid. Cells are addressed
// by absolute index: cell i starts at t0 + i * step. Only [first, end()) is
// stored; the stream engine drops old cells from the front.
struct Frame {
  std::int64_t t0 = 0;
  std::int64_t step = 60;
  std::size_t first = 0;
  std::vector<FeatureKind> features;
  std::vector<std::vector<double>> cells;  // [feature][i - first]

  std::size_t end() const { return first + (cells.empty() ? 0 : cells.front().size()); }
  std::size_t stored() const { return end() - first; }
  std::int64_t time_of(std::size_t index) const { return t0 + static_cast<std::int64_t>(index) * step; }
  double at(std::size_t feature, std::size_t index) const { return cells[feature][index - first]; }
  std::vector<double> slice(std::size_t feature, std::size_t begin, std::size_t end) const;

  /// Appends one cell given one value per feature.
  void push(const std::vector<double>& values);
  /// Drops stored cells before `index`.
  void evict_before(std::size_t index);
};

/// Sums each feature onto a grid of `step` seconds (see resample). The grid
/// origin is floor(t_first / step) * step.
Frame build_frame(const std::vector<Transaction>& transactions, const std::vector<FeatureKind>& features,
                  std::int64_t step);

// Cells [begin, end) that a score call voted on.
struct CellRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Detector {
 public:
  Detector(std::string id, Category category) : id_(std::move(id)), category_(category) {}
  virtual ~Detector() = default;

  const std::string& id() const { return id_; }
  Category category() const { return category_; }

  /// Fits on cells [begin, end) and leaves the detector ready to score cell
  /// `end`. Throws when no model could be fitted; partial failures (one
  /// feature) are recorded in warnings().
  virtual void fit(const Frame& frame, std::size_t begin, std::size_t end) = 0;

  /// Scores cells [begin, end) of `frame`. Stateful detectors require begin
  /// to be the cell after the last fitted or scored one. Appends flagged cell
  /// indices to `flagged` and returns the cells the call voted on. Window
  /// detectors score the windows that end inside [begin, end) on the stride
  /// lattice, so the range can start before `begin` and stop short of `end`.
  virtual CellRange score(const Frame& frame, std::size_t begin, std::size_t end,
                          std::vector<std::size_t>& flagged) = 0;

  const std::vector<std::string>& warnings() const { return warnings_; }

 protected:
  std::vector<std::string> warnings_;

 private:
  std::string id_;
  Category category_;
};

/// Category of a registry name ("arima", "pca", ...).
Category detector_category(const std::string& name);

/// Instantiates config.detectors. Window and row algorithms get one voter
/// per view: "<name>:win" for univariate windows, "<name>:row" for
/// multivariate cell rows.
std::vector<std::unique_ptr<Detector>> make_detectors(const EnsembleConfig& config);

}  // namespace txsentry
