#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "txsentry/ingest.hpp"

namespace txsentry {

enum class Category { Predictive, Reduction, Clustering };

inline constexpr std::size_t kCategoryCount = 3;
inline constexpr Category kAllCategories[kCategoryCount] = {Category::Predictive, Category::Reduction,
                                                            Category::Clustering};

std::string_view category_name(Category category);
Category parse_category(std::string_view name);

// Univariate: sliding windows of one feature. Multivariate: one row of all
// features per grid cell. Both: each window/row algorithm votes twice.
enum class ViewMode { Univariate, Multivariate, Both };

std::string_view view_mode_name(ViewMode mode);
ViewMode parse_view_mode(std::string_view name);

enum class OrderSelection { CrossValidation, Aic };

struct EnsembleConfig {
  // Data and grid.
  std::vector<FeatureKind> features = {kAllFeatures.begin(), kAllFeatures.end()};
  ViewMode mode = ViewMode::Both;
  std::int64_t grid_step = 60;
  std::int64_t window = 300;  // seconds
  std::int64_t window_stride = 300;  // seconds between scored windows
  std::uint64_t seed = 1;

  // Registry and vote.
  std::vector<std::string> detectors = {"arima", "sarima", "stl",     "knn",    "cart",   "krr",
                                        "pca",   "iforest", "autoencoder", "kmeans", "dbscan", "ocsvm"};
  std::vector<Category> alarm_categories = {kAllCategories, kAllCategories + kCategoryCount};

  // Batch and stream protocol.
  double train_ratio = 0.7;
  std::int64_t retrain_interval = 345600;
  std::int64_t reference_span = 345600;

  // Predictive bank.
  double residual_multiplier = 3.0;
  bool clean_flagged = true;
  int max_order = 3;
  int cv_folds = 3;
  OrderSelection order_selection = OrderSelection::CrossValidation;
  int seasonal_max_order = 2;
  int season_period = 0;  // 0: estimate from the data
  int season_fallback = 12;
  int lags = 5;
  int knn_k = 10;
  int cart_depth = 4;
  int cart_min_leaf = 8;
  double krr_lambda = 1.0;
  int krr_max_pairs = 1000;
  double krr_gamma = 0.0;  // 0: heuristic

  // Reduction bank.
  double pca_explained = 0.9;
  double score_multiplier = 3.0;
  int iforest_trees = 100;
  int iforest_subsample = 256;
  double iforest_cutoff = 0.6;
  int ae_window = 32;  // grid cells
  int ae_hidden = 8;
  int ae_epochs = 300;
  double ae_learning_rate = 0.05;

  // Clustering bank.
  int kmeans_k = 0;  // 0: silhouette search
  int kmeans_k_min = 2;
  int kmeans_k_max = 10;
  int kmeans_restarts = 5;
  double kmeans_quantile = 0.99;
  int dbscan_min_pts = 4;
  double dbscan_eps = 0.0;  // 0: estimate_eps
  double ocsvm_nu = 0.05;
  double ocsvm_gamma = 0.0;  // 0: heuristic
  int ocsvm_max_rows = 1000;

  // Evaluation.
  std::int64_t match_tolerance = 120;  // seconds

  std::int64_t window_cells() const { return window / grid_step; }
  std::int64_t stride_cells() const { return window_stride / grid_step; }
  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
};

/// Sets one key. Throws std::invalid_argument for unknown keys or bad values.
void apply_setting(EnsembleConfig& config, std::string_view key, std::string_view value);

/// Flat `key = value` lines; blank lines and lines starting with '#' are
/// skipped. Errors carry the line number.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

EnsembleConfig parse_config(std::string_view text);
EnsembleConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, one per line, in a fixed order.
std::string format_config(const EnsembleConfig& config);

}  // namespace txsentry
