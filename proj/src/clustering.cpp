#include "txsentry/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "txsentry/error.hpp"
#include "txsentry/rng.hpp"
#include "txsentry/series.hpp"

namespace txsentry {

namespace {

int nearest(const Eigen::MatrixXd& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x, double* dist2) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

struct LloydRun {
  Eigen::MatrixXd centroids;
  std::vector<int> labels;
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> trace;
};

Eigen::MatrixXd plus_plus_seed(const Eigen::MatrixXd& rows, int k, Rng& rng) {
  const Eigen::Index n = rows.rows();
  Eigen::MatrixXd centroids(k, rows.cols());
  centroids.row(0) = rows.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (rows.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = rows.row(pick);
    d2 = d2.cwiseMin((rows.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  return centroids;
}

LloydRun lloyd(const Eigen::MatrixXd& rows, Eigen::MatrixXd centroids, int max_iterations) {
  const Eigen::Index n = rows.rows();
  const auto k = static_cast<int>(centroids.rows());
  LloydRun run;
  run.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (run.iterations = 0; run.iterations < max_iterations; ++run.iterations) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest(centroids, rows.row(i), &dist[static_cast<std::size_t>(i)]);
      inertia += dist[static_cast<std::size_t>(i)];
      if (c != run.labels[static_cast<std::size_t>(i)]) {
        run.labels[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    run.trace.push_back(inertia);
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, rows.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(run.labels[static_cast<std::size_t>(i)]) += rows.row(i);
      ++counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
      centroids.row(c) = rows.row(far);
      dist[static_cast<std::size_t>(far)] = 0.0;
      run.labels[static_cast<std::size_t>(far)] = -1;
    }
  }
  run.centroids = std::move(centroids);
  run.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double d2;
    run.labels[static_cast<std::size_t>(i)] = nearest(run.centroids, rows.row(i), &d2);
    run.inertia += d2;
  }
  return run;
}

}  // namespace

int KMeansModel::assign(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return nearest(centroids, x, nullptr);
}

double KMeansModel::score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (x.size() != centroids.cols()) throw std::invalid_argument("kmeans_score: dimension mismatch");
  double d2;
  nearest(centroids, x, &d2);
  return std::sqrt(d2);
}

KMeansModel kmeans_fit(const Eigen::MatrixXd& rows, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1) throw std::invalid_argument("kmeans_fit: k must be >= 1");
  if (rows.rows() < k) throw std::invalid_argument("kmeans_fit: k exceeds the number of rows");
  if (options.restarts < 1) throw std::invalid_argument("kmeans_fit: restarts must be >= 1");
  if (!rows.allFinite()) throw NumericError("kmeans_fit: non-finite input");
  LloydRun best;
  bool have = false;
  for (int r = 0; r < options.restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto run = lloyd(rows, plus_plus_seed(rows, k, rng), options.max_iterations);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  KMeansModel model;
  model.centroids = std::move(best.centroids);
  model.k = k;
  model.inertia = best.inertia;
  model.iterations = best.iterations;
  model.inertia_trace = std::move(best.trace);
  std::vector<double> dist(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) dist[static_cast<std::size_t>(i)] = model.score(rows.row(i));
  model.threshold = quantile(std::move(dist), options.threshold_quantile);
  return model;
}

double silhouette_score(const Eigen::MatrixXd& rows, const std::vector<int>& labels) {
  const Eigen::Index n = rows.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw std::invalid_argument("silhouette: label count mismatch");
  const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  double total = 0.0;
  std::vector<double> sum(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sum[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += (rows.row(i) - rows.row(j)).norm();
    const auto own = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    if (sizes[own] <= 1) continue;
    const double a = sum[own] / (sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sum.size(); ++c)
      if (c != own && sizes[c] > 0) b = std::min(b, sum[c] / sizes[c]);
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

int select_k_silhouette(const Eigen::MatrixXd& rows, int k_min, int k_max, std::uint64_t seed,
                        std::size_t max_rows, int restarts) {
  if (k_min < 2 || k_max < k_min) throw std::invalid_argument("select_k_silhouette: need 2 <= k_min <= k_max");
  Eigen::MatrixXd sample = rows;
  const auto n = static_cast<std::size_t>(rows.rows());
  if (n > max_rows) {
    Rng rng(derive_seed(seed, 0x51u));
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (std::size_t i = 0; i < max_rows; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(max_rows));
    sample.resize(static_cast<Eigen::Index>(max_rows), rows.cols());
    for (std::size_t i = 0; i < max_rows; ++i) sample.row(static_cast<Eigen::Index>(i)) = rows.row(idx[i]);
  }
  const int upper = std::min<int>(k_max, static_cast<int>(sample.rows()) - 1);
  if (upper < k_min) return std::max(1, std::min(k_min, static_cast<int>(sample.rows())));
  int best_k = k_min;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = k_min; k <= upper; ++k) {
    const auto model = kmeans_fit(sample, k, seed, {restarts, 300, 0.99});
    std::vector<int> labels(static_cast<std::size_t>(sample.rows()));
    for (Eigen::Index i = 0; i < sample.rows(); ++i) labels[static_cast<std::size_t>(i)] = model.assign(sample.row(i));
    const double s = silhouette_score(sample, labels);
    if (s > best) {
      best = s;
      best_k = k;
    }
  }
  return best_k;
}

namespace {

std::vector<Eigen::Index> region(const Eigen::MatrixXd& rows, Eigen::Index i, double eps2) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < rows.rows(); ++j)
    if ((rows.row(j) - rows.row(i)).squaredNorm() <= eps2) out.push_back(j);
  return out;
}

void check_params(const DbscanParams& p) {
  if (!(p.eps > 0.0)) throw std::invalid_argument("dbscan: eps must be positive");
  if (p.min_pts < 1) throw std::invalid_argument("dbscan: min_pts must be >= 1");
}

}  // namespace

std::vector<int> dbscan(const Eigen::MatrixXd& rows, const DbscanParams& params) {
  check_params(params);
  if (!rows.allFinite()) throw NumericError("dbscan: non-finite input");
  constexpr int kUnvisited = -2;
  const Eigen::Index n = rows.rows();
  const double eps2 = params.eps * params.eps;
  const auto min_pts = static_cast<std::size_t>(params.min_pts);
  std::vector<int> labels(static_cast<std::size_t>(n), kUnvisited);
  int cluster = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] != kUnvisited) continue;
    auto seeds = region(rows, i, eps2);
    if (seeds.size() < min_pts) {
      labels[static_cast<std::size_t>(i)] = kNoise;
      continue;
    }
    labels[static_cast<std::size_t>(i)] = cluster;
    std::vector<Eigen::Index> queue;
    auto visit = [&](const std::vector<Eigen::Index>& neighbours) {
      for (auto j : neighbours) {
        int& label = labels[static_cast<std::size_t>(j)];
        // Points marked noise earlier are known non-core: they join as border.
        if (label == kNoise) label = cluster;
        if (label != kUnvisited) continue;
        label = cluster;
        queue.push_back(j);
      }
    };
    visit(seeds);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const auto more = region(rows, queue[head], eps2);
      if (more.size() >= min_pts) visit(more);
    }
    ++cluster;
  }
  return labels;
}

double estimate_eps(const Eigen::MatrixXd& rows, int k) {
  const Eigen::Index n = rows.rows();
  if (k < 1 || n <= k) throw std::invalid_argument("estimate_eps: need more rows than k >= 1");
  std::vector<double> kth(static_cast<std::size_t>(n));
  std::vector<double> d(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d[m++] = (rows.row(i) - rows.row(j)).norm();
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    kth[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(k - 1)];
  }
  return quantile(std::move(kth), 0.95);
}

bool DbscanModel::is_noise(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const double eps2 = params.eps * params.eps;
  for (Eigen::Index i = 0; i < core_points.rows(); ++i)
    if ((core_points.row(i) - x).squaredNorm() <= eps2) return false;
  return true;
}

DbscanModel dbscan_fit(const Eigen::MatrixXd& rows, const DbscanParams& params) {
  check_params(params);
  const double eps2 = params.eps * params.eps;
  std::vector<Eigen::Index> cores;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    std::size_t count = 0;
    for (Eigen::Index j = 0; j < rows.rows(); ++j)
      if ((rows.row(j) - rows.row(i)).squaredNorm() <= eps2) ++count;
    if (count >= static_cast<std::size_t>(params.min_pts)) cores.push_back(i);
  }
  DbscanModel model{params, Eigen::MatrixXd(static_cast<Eigen::Index>(cores.size()), rows.cols())};
  for (std::size_t c = 0; c < cores.size(); ++c) model.core_points.row(static_cast<Eigen::Index>(c)) = rows.row(cores[c]);
  return model;
}

std::vector<bool> ocsvm_detect(const Eigen::MatrixXd& train, const Eigen::MatrixXd& query,
                               const KernelSpec& spec, double nu) {
  const auto model = one_class_fit(train, spec, nu);
  std::vector<bool> flags(static_cast<std::size_t>(query.rows()));
  for (Eigen::Index i = 0; i < query.rows(); ++i) flags[static_cast<std::size_t>(i)] = model.decision(query.row(i)) < 0.0;
  return flags;
}

}  // namespace txsentry
