#include "txsentry/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "txsentry/series.hpp"

namespace txsentry {

Decomposition stl_decompose(std::span<const double> values, int period) {
  if (period < 2) throw std::invalid_argument("stl_decompose: period must be >= 2");
  const auto n = values.size();
  const auto p = static_cast<std::size_t>(period);
  if (n < 2 * p) throw std::invalid_argument("stl_decompose: need at least two full periods");

  // Centered moving average; even periods use the 2 x period weighting.
  const std::size_t half = p / 2;
  std::vector<double> trend(n, 0.0);
  for (std::size_t t = half; t + half < n; ++t) {
    double sum = 0.0;
    if (p % 2 == 1) {
      for (std::size_t k = t - half; k <= t + half; ++k) sum += values[k];
    } else {
      sum = 0.5 * (values[t - half] + values[t + half]);
      for (std::size_t k = t - half + 1; k < t + half; ++k) sum += values[k];
    }
    trend[t] = sum / static_cast<double>(p);
  }
  const std::size_t first = half, last = n - 1 - half;
  for (std::size_t t = 0; t < first; ++t) trend[t] = trend[first];
  for (std::size_t t = last + 1; t < n; ++t) trend[t] = trend[last];

  std::vector<double> profile(p, 0.0);
  std::vector<std::size_t> counts(p, 0);
  for (std::size_t t = first; t <= last; ++t) {
    profile[t % p] += values[t] - trend[t];
    ++counts[t % p];
  }
  for (std::size_t j = 0; j < p; ++j) profile[j] /= static_cast<double>(counts[j]);
  const double centre = mean(profile);
  for (double& v : profile) v -= centre;

  Decomposition out;
  out.period = period;
  out.trend = std::move(trend);
  out.seasonal.resize(n);
  out.residual.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    out.seasonal[t] = profile[t % p];
    out.residual[t] = values[t] - out.trend[t] - out.seasonal[t];
  }
  out.seasonal_profile = std::move(profile);
  return out;
}

LagDataset make_lag_pairs(std::span<const double> series, int lags) {
  if (lags < 1) throw std::invalid_argument("make_lag_pairs: lags must be >= 1");
  const auto l = static_cast<std::size_t>(lags);
  if (series.size() <= l) throw std::invalid_argument("make_lag_pairs: series must be longer than lags");
  const auto rows = static_cast<Eigen::Index>(series.size() - l);
  LagDataset data{Eigen::MatrixXd(rows, lags), Eigen::VectorXd(rows)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto t = static_cast<std::size_t>(r) + l;
    for (int k = 0; k < lags; ++k) data.inputs(r, k) = series[t - 1 - static_cast<std::size_t>(k)];
    data.targets(r) = series[t];
  }
  return data;
}

Eigen::RowVectorXd lag_vector(std::span<const double> context, int lags) {
  if (lags < 1 || context.size() < static_cast<std::size_t>(lags))
    throw std::invalid_argument("lag_vector: context shorter than lags");
  Eigen::RowVectorXd v(lags);
  const std::size_t n = context.size();
  for (int k = 0; k < lags; ++k) v(k) = context[n - 1 - static_cast<std::size_t>(k)];
  return v;
}

double knn_predict(const LagDataset& data, int k, const Eigen::RowVectorXd& query,
                   std::optional<Eigen::Index> exclude) {
  if (k < 1) throw std::invalid_argument("knn: k must be >= 1");
  if (query.size() != data.inputs.cols()) throw std::invalid_argument("knn: query dimension mismatch");
  std::vector<std::pair<double, Eigen::Index>> dist;
  dist.reserve(static_cast<std::size_t>(data.inputs.rows()));
  for (Eigen::Index r = 0; r < data.inputs.rows(); ++r) {
    if (exclude && *exclude == r) continue;
    dist.emplace_back((data.inputs.row(r) - query).squaredNorm(), r);
  }
  if (static_cast<std::size_t>(k) > dist.size())
    throw std::invalid_argument("knn: k exceeds the number of lag pairs");
  // Pairs compare by distance, then index: earlier rows win ties.
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += data.targets(dist[static_cast<std::size_t>(i)].second);
  return sum / k;
}

double knn_forecast(std::span<const double> train, int lags, int k, std::span<const double> context) {
  return knn_predict(make_lag_pairs(train, lags), k, lag_vector(context, lags));
}

double RegressionTree::predict(const Eigen::RowVectorXd& features) const {
  if (nodes.empty()) throw std::logic_error("RegressionTree: empty tree");
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& node = nodes[static_cast<std::size_t>(i)];
    i = features(node.feature) <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

double RegressionTree::predict_context(std::span<const double> context) const {
  return predict(lag_vector(context, lags));
}

int RegressionTree::depth() const {
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes[i].feature >= 0) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

namespace {

struct TreeBuilder {
  const LagDataset& data;
  int max_depth;
  std::size_t min_leaf;
  RegressionTree tree;

  int build(std::vector<Eigen::Index> rows, int depth) {
    double sum = 0.0, sq = 0.0;
    for (auto r : rows) {
      sum += data.targets(r);
      sq += data.targets(r) * data.targets(r);
    }
    const double count = static_cast<double>(rows.size());
    const double node_sse = std::max(0.0, sq - sum * sum / count);

    const int id = static_cast<int>(tree.nodes.size());
    RegressionTree::Node leaf;
    leaf.value = sum / count;
    leaf.count = rows.size();
    tree.nodes.push_back(leaf);
    if (depth >= max_depth || rows.size() < 2 * min_leaf || node_sse <= 1e-12 * (1.0 + sq)) return id;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_sse = node_sse;
    std::vector<Eigen::Index> sorted = rows;
    for (int f = 0; f < data.inputs.cols(); ++f) {
      std::stable_sort(sorted.begin(), sorted.end(), [&](Eigen::Index a, Eigen::Index b) {
        return data.inputs(a, f) < data.inputs(b, f);
      });
      double left_sum = 0.0, left_sq = 0.0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const double y = data.targets(sorted[i]);
        left_sum += y;
        left_sq += y * y;
        const std::size_t nl = i + 1, nr = sorted.size() - nl;
        const double xa = data.inputs(sorted[i], f), xb = data.inputs(sorted[i + 1], f);
        if (xa == xb || nl < min_leaf || nr < min_leaf) continue;
        const double right_sum = sum - left_sum, right_sq = sq - left_sq;
        const double sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                           (right_sq - right_sum * right_sum / static_cast<double>(nr));
        // Strict improvement keeps the lowest feature, then the lowest threshold.
        if (sse < best_sse - 1e-12 * (1.0 + node_sse)) {
          best_sse = sse;
          best_feature = f;
          best_threshold = 0.5 * (xa + xb);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Eigen::Index> left, right;
    for (auto r : rows) (data.inputs(r, best_feature) <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace

RegressionTree cart_fit(const LagDataset& data, int max_depth, int min_leaf) {
  if (max_depth < 0 || min_leaf < 1) throw std::invalid_argument("cart_fit: max_depth >= 0, min_leaf >= 1");
  if (data.inputs.rows() == 0) throw std::invalid_argument("cart_fit: no training pairs");
  TreeBuilder builder{data, max_depth, static_cast<std::size_t>(min_leaf), {}};
  builder.tree.lags = static_cast<int>(data.inputs.cols());
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(data.inputs.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  builder.build(std::move(rows), 0);
  return std::move(builder.tree);
}

RegressionTree cart_forecast(std::span<const double> train, int lags, int max_depth, int min_leaf) {
  return cart_fit(make_lag_pairs(train, lags), max_depth, min_leaf);
}

std::vector<bool> residual_threshold_detect(std::span<const double> predictions,
                                            std::span<const double> actuals, double rms,
                                            double multiplier) {
  if (predictions.size() != actuals.size())
    throw std::invalid_argument("residual_threshold_detect: length mismatch");
  if (rms < 0.0 || multiplier < 0.0) throw std::invalid_argument("residual_threshold_detect: negative threshold");
  const double limit = multiplier * rms;
  std::vector<bool> flags(actuals.size());
  for (std::size_t i = 0; i < actuals.size(); ++i)
    flags[i] = std::abs(actuals[i] - predictions[i]) > limit;
  return flags;
}

SeasonalLevelPredictor::SeasonalLevelPredictor(std::vector<double> seasonal_profile, std::size_t phase0)
    : profile_(std::move(seasonal_profile)), next_phase_(0) {
  if (profile_.size() < 2) throw std::invalid_argument("SeasonalLevelPredictor: period must be >= 2");
  next_phase_ = phase0 % profile_.size();
}

bool SeasonalLevelPredictor::ready() const { return recent_.size() == profile_.size(); }

double SeasonalLevelPredictor::predict() const {
  if (!ready()) throw std::invalid_argument("seasonal forecast: insufficient history");
  return sum_ / static_cast<double>(profile_.size()) + profile_[next_phase_];
}

void SeasonalLevelPredictor::observe(double value) {
  recent_.push_back(value);
  sum_ += value;
  if (recent_.size() > profile_.size()) {
    sum_ -= recent_.front();
    recent_.pop_front();
  }
  next_phase_ = (next_phase_ + 1) % profile_.size();
}

LagPredictor::LagPredictor(int lags, Model model) : lags_(lags), model_(std::move(model)) {
  if (lags_ < 1) throw std::invalid_argument("LagPredictor: lags must be >= 1");
}

bool LagPredictor::ready() const { return recent_.size() == static_cast<std::size_t>(lags_); }

double LagPredictor::predict() const {
  if (!ready()) throw std::invalid_argument("lag forecast: insufficient history");
  Eigen::RowVectorXd v(lags_);
  for (int k = 0; k < lags_; ++k) v(k) = recent_[recent_.size() - 1 - static_cast<std::size_t>(k)];
  return model_(v);
}

void LagPredictor::observe(double value) {
  recent_.push_back(value);
  if (recent_.size() > static_cast<std::size_t>(lags_)) recent_.pop_front();
}

}  // namespace txsentry
