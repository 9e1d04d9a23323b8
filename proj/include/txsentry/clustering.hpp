#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "txsentry/kernels.hpp"

namespace txsentry {

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct KMeansModel {
  Eigen::MatrixXd centroids;  // k x d
  int k = 0;
  double threshold = 0.0;  // 0.99 quantile of training distances
  double inertia = 0.0;    // within-cluster sum of squares of the chosen run
  int iterations = 0;
  std::vector<double> inertia_trace;  // after each assignment step of the chosen run

  int assign(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  double score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct KMeansOptions {
  int restarts = 5;
  int max_iterations = 300;
  double threshold_quantile = 0.99;
};

/// k-means++ seeding and Lloyd iterations; best of `restarts` by inertia.
KMeansModel kmeans_fit(const Eigen::MatrixXd& rows, int k, std::uint64_t seed,
                       const KMeansOptions& options = {});

inline double kmeans_score(const KMeansModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return model.score(x);
}

/// Mean silhouette coefficient; singleton clusters contribute 0.
double silhouette_score(const Eigen::MatrixXd& rows, const std::vector<int>& labels);

/// Highest mean silhouette over k in [k_min, k_max] (ties to the smaller k),
/// evaluated on a seeded subsample of at most `max_rows` rows.
int select_k_silhouette(const Eigen::MatrixXd& rows, int k_min, int k_max, std::uint64_t seed,
                        std::size_t max_rows = 1000, int restarts = 3);

// ---------------------------------------------------------------------------
// DBSCAN
// ---------------------------------------------------------------------------

inline constexpr int kNoise = -1;

struct DbscanParams {
  double eps = 1.0;
  int min_pts = 4;
};

/// Cluster ids 0, 1, ... in discovery order; kNoise for unreachable points.
std::vector<int> dbscan(const Eigen::MatrixXd& rows, const DbscanParams& params);

/// 0.95 quantile of the distances to each row's k-th nearest other row.
double estimate_eps(const Eigen::MatrixXd& rows, int k);

/// Core points of a training run; a new point is noise when no core point
/// lies within eps.
struct DbscanModel {
  DbscanParams params;
  Eigen::MatrixXd core_points;

  bool is_noise(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

DbscanModel dbscan_fit(const Eigen::MatrixXd& rows, const DbscanParams& params);

// ---------------------------------------------------------------------------
// One-class kernel machine
// ---------------------------------------------------------------------------

/// Fits on `train` and flags query rows with a negative decision value.
std::vector<bool> ocsvm_detect(const Eigen::MatrixXd& train, const Eigen::MatrixXd& query,
                               const KernelSpec& spec, double nu);

}  // namespace txsentry
