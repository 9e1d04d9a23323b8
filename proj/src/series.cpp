#include "txsentry/series.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace txsentry {

std::vector<double> TimeSeries::values() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.value);
  return out;
}

std::vector<std::int64_t> TimeSeries::timestamps() const {
  std::vector<std::int64_t> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.ts);
  return out;
}

TimeSeries merge_cooccurring(const TimeSeries& series) {
  TimeSeries out;
  out.domain = series.domain;
  for (const auto& p : series.points) {
    if (!out.points.empty() && out.points.back().ts == p.ts) {
      out.points.back().value += p.value;
    } else {
      if (!out.points.empty() && p.ts < out.points.back().ts)
        throw std::invalid_argument("merge_cooccurring: series not sorted");
      out.points.push_back(p);
    }
  }
  return out;
}

TimeSeries resample(const TimeSeries& series, std::int64_t step) {
  if (step <= 0) throw std::invalid_argument("resample: step must be positive");
  if (series.empty()) throw std::invalid_argument("resample: empty series");
  const std::int64_t first = series.points.front().ts / step * step;
  const std::int64_t last = series.points.back().ts / step * step;
  const auto cells = static_cast<std::size_t>((last - first) / step + 1);

  TimeSeries out;
  out.domain = Domain::time(step);
  out.points.resize(cells);
  for (std::size_t i = 0; i < cells; ++i)
    out.points[i] = {first + static_cast<std::int64_t>(i) * step, 0.0};
  for (const auto& p : series.points) {
    if (p.ts < first) throw std::invalid_argument("resample: series not sorted");
    out.points[static_cast<std::size_t>((p.ts - first) / step)].value += p.value;
  }
  return out;
}

std::vector<Window> sliding_windows(const TimeSeries& series,
                                    std::int64_t duration, std::int64_t stride) {
  if (!series.domain.is_time())
    throw std::invalid_argument("sliding_windows: time-domain series required");
  const std::int64_t step = series.domain.step;
  if (duration <= 0 || stride <= 0 || duration % step != 0 || stride % step != 0)
    throw std::invalid_argument(
        "sliding_windows: duration and stride must be positive multiples of the step");
  const auto width = static_cast<std::size_t>(duration / step);
  const auto hop = static_cast<std::size_t>(stride / step);
  std::vector<Window> out;
  if (series.size() < width) return out;
  for (std::size_t start = 0; start + width <= series.size(); start += hop) {
    Window w{series.points[start].ts, duration, {}};
    w.values.reserve(width);
    for (std::size_t i = start; i < start + width; ++i)
      w.values.push_back(series.points[i].value);
    out.push_back(std::move(w));
  }
  return out;
}

std::pair<TimeSeries, TimeSeries> split_train_test(const TimeSeries& series,
                                                   double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("split_train_test: ratio must be in (0, 1)");
  const std::size_t n = series.size();
  if (n < 2) throw std::invalid_argument("split_train_test: need at least 2 points");
  auto cut = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  cut = std::clamp<std::size_t>(cut, 1, n - 1);
  TimeSeries train{{series.points.begin(), series.points.begin() + static_cast<std::ptrdiff_t>(cut)},
                   series.domain};
  TimeSeries test{{series.points.begin() + static_cast<std::ptrdiff_t>(cut), series.points.end()},
                  series.domain};
  return {std::move(train), std::move(test)};
}

std::vector<double> difference(std::span<const double> values, int order) {
  return seasonal_difference(values, 1, order);
}

std::vector<double> seasonal_difference(std::span<const double> values,
                                        int period, int order) {
  if (order < 0 || period < 1)
    throw std::invalid_argument("difference: negative order or bad period");
  const auto lag = static_cast<std::size_t>(period);
  if (values.size() <= lag * static_cast<std::size_t>(order))
    throw std::invalid_argument("difference: series too short for the order");
  std::vector<double> cur(values.begin(), values.end());
  for (int k = 0; k < order; ++k) {
    std::vector<double> next(cur.size() - lag);
    for (std::size_t t = lag; t < cur.size(); ++t) next[t - lag] = cur[t] - cur[t - lag];
    cur = std::move(next);
  }
  return cur;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean: empty input");
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

double rms(std::span<const double> residuals) {
  if (residuals.empty()) throw std::invalid_argument("rms: empty input");
  double ss = 0.0;
  for (double r : residuals) ss += r * r;
  return std::sqrt(ss / static_cast<double>(residuals.size()));
}

std::vector<double> acf(std::span<const double> values, int max_lag) {
  const std::size_t n = values.size();
  if (max_lag < 0 || n <= static_cast<std::size_t>(max_lag))
    throw std::invalid_argument("acf: series must be longer than max_lag");
  const double m = mean(values);
  double denom = 0.0;
  for (double v : values) denom += (v - m) * (v - m);
  if (!(denom > 0.0)) throw std::invalid_argument("acf: zero variance");
  std::vector<double> r(static_cast<std::size_t>(max_lag) + 1);
  for (std::size_t k = 0; k < r.size(); ++k) {
    double num = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) num += (values[t] - m) * (values[t + k] - m);
    r[k] = num / denom;
  }
  r[0] = 1.0;
  return r;
}

std::vector<double> periodogram(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<double> power(n / 2 + 1, 0.0);
  for (std::size_t k = 0; k < power.size(); ++k) {
    // Rotate a unit phasor instead of calling sin/cos per term.
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    const double cw = std::cos(w), sw = std::sin(w);
    double c = 1.0, s = 0.0, re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      re += values[t] * c;
      im -= values[t] * s;
      const double nc = c * cw - s * sw;
      s = s * cw + c * sw;
      c = nc;
      if ((t & 255u) == 255u) {  // renormalize drift
        const double norm = std::hypot(c, s);
        c /= norm;
        s /= norm;
      }
    }
    power[k] = re * re + im * im;
  }
  return power;
}

namespace {

std::vector<double> detrend_linear(std::span<const double> values) {
  const std::size_t n = values.size();
  const double tbar = (static_cast<double>(n) - 1.0) / 2.0;
  const double ybar = mean(values);
  double sty = 0.0, stt = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - tbar;
    sty += dt * (values[t] - ybar);
    stt += dt * dt;
  }
  const double slope = stt > 0.0 ? sty / stt : 0.0;
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t)
    out[t] = values[t] - ybar - slope * (static_cast<double>(t) - tbar);
  return out;
}

// Two-sided normal quantile by bisection on erfc; only used for thresholds.
double normal_upper_quantile(double tail) {
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(mid / std::numbers::sqrt2) > tail) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

constexpr double kPeriodAlpha = 0.05;

int period_from_acf(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const int max_lag = static_cast<int>(n / 2);
  double var = 0.0;
  for (double v : x) var += v * v;
  if (!(var > 1e-300)) return 0;
  const auto r = acf(x, max_lag);
  // 2/sqrt(n) band, widened by a Bonferroni factor over the lags scanned.
  const double m = std::max(1, max_lag - 1);
  const double z = std::max(2.0, normal_upper_quantile(kPeriodAlpha / (2.0 * m)));
  const double threshold = z / std::sqrt(static_cast<double>(n));
  for (int k = 2; k < max_lag; ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (r[i] > r[i - 1] && r[i] >= r[i + 1] && r[i] > threshold) return k;
  }
  return 0;
}

int period_from_periodogram(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const auto power = periodogram(x);
  // Periods between 2 and n/2 steps: bins 2..n/2.
  std::size_t best = 0;
  double total = 0.0;
  for (std::size_t k = 1; k < power.size(); ++k) total += power[k];
  for (std::size_t k = 2; k < power.size(); ++k)
    if (best == 0 || power[k] > power[best]) best = k;
  if (best == 0 || !(total > 0.0)) return 0;
  // Fisher's g test on the largest ordinate.
  const double m = static_cast<double>(power.size() - 1);
  const double g = power[best] / total;
  const double critical = 1.0 - std::pow(kPeriodAlpha / m, 1.0 / (m - 1.0));
  if (!(g > critical)) return 0;
  return static_cast<int>(std::lround(static_cast<double>(n) / static_cast<double>(best)));
}

}  // namespace

int estimate_period(std::span<const double> values, PeriodMethod method) {
  if (values.size() < 16) throw std::invalid_argument("estimate_period: need at least 16 points");
  const auto x = detrend_linear(values);
  return method == PeriodMethod::Acf ? period_from_acf(x) : period_from_periodogram(x);
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& rows) const {
  return (rows.rowwise() - mean).array().rowwise() / scale.array();
}

Eigen::RowVectorXd Standardizer::apply(const Eigen::RowVectorXd& row) const {
  return (row - mean).array() / scale.array();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& rows) const {
  return (rows.array().rowwise() * scale.array()).matrix().rowwise() + mean;
}

std::pair<Eigen::MatrixXd, Standardizer> standardize(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw std::invalid_argument("standardize: need at least 2 rows");
  Standardizer s;
  s.mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - s.mean;
  s.scale = (centered.array().square().colwise().sum() / static_cast<double>(rows.rows()))
                .sqrt()
                .matrix();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale(j) > 1e-12 * std::max(1.0, std::abs(s.mean(j))))) s.scale(j) = 1.0;
  return {s.apply(rows), s};
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace txsentry
