#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace txsentry {

struct Point {
  std::int64_t ts = 0;  // unix seconds
  double value = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

// SampleDomain: one point per (merged) transaction, irregular timestamps.
// TimeDomain: uniform grid, timestamp_i = t0 + i * step.
struct Domain {
  enum class Kind { Sample, Time };
  Kind kind = Kind::Sample;
  std::int64_t step = 0;  // seconds, TimeDomain only

  static Domain sample() { return {Kind::Sample, 0}; }
  static Domain time(std::int64_t step) { return {Kind::Time, step}; }
  bool is_time() const { return kind == Kind::Time; }

  friend bool operator==(const Domain&, const Domain&) = default;
};

struct TimeSeries {
  std::vector<Point> points;
  Domain domain = Domain::sample();

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  std::vector<double> values() const;
  std::vector<std::int64_t> timestamps() const;

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;
};

struct Window {
  std::int64_t start = 0;
  std::int64_t duration = 0;
  std::vector<double> values;
};

/// Sums all points sharing a timestamp. Input must be sorted by timestamp.
TimeSeries merge_cooccurring(const TimeSeries& series);

/// Bins a merged sample-domain series onto a uniform grid of `step` seconds.
/// Cells run from floor(t_first/step)*step to the cell holding t_last; a
/// cell's value is the sum of the samples falling in [cell, cell + step) and
/// empty cells are zero. Throws std::invalid_argument on empty input.
TimeSeries resample(const TimeSeries& series, std::int64_t step);

/// Overlapping windows over a time-domain series. Duration and stride are in
/// seconds and must be positive multiples of the grid step.
std::vector<Window> sliding_windows(const TimeSeries& series,
                                    std::int64_t duration, std::int64_t stride);

/// Chronological split; train gets round(ratio * n) points, clamped so both
/// halves are non-empty.
std::pair<TimeSeries, TimeSeries> split_train_test(const TimeSeries& series,
                                                   double ratio);

std::vector<double> difference(std::span<const double> values, int order);
std::vector<double> seasonal_difference(std::span<const double> values,
                                        int period, int order);

/// Sample autocorrelation r(0..max_lag). Throws on zero variance.
std::vector<double> acf(std::span<const double> values, int max_lag);

enum class PeriodMethod { Acf, Periodogram };

/// Dominant period in steps, or 0 when nothing significant is found. The
/// series is linearly detrended first.
int estimate_period(std::span<const double> values, PeriodMethod method);

/// Squared DFT magnitudes for bins 0..n/2 (direct summation).
std::vector<double> periodogram(std::span<const double> values);

double rms(std::span<const double> residuals);
double mean(std::span<const double> values);
/// Population (1/n) standard deviation.
double stddev(std::span<const double> values);

struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;  // 1 for zero-deviation columns

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
  Eigen::RowVectorXd apply(const Eigen::RowVectorXd& row) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& rows) const;
};

/// Centers every column and scales it to unit (1/n) deviation. Requires at
/// least two rows.
std::pair<Eigen::MatrixXd, Standardizer> standardize(const Eigen::MatrixXd& rows);

/// Linear interpolation quantile (type 7) of an unsorted sample.
double quantile(std::vector<double> values, double q);

}  // namespace txsentry
