#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "txsentry/kernels.hpp"

namespace txsentry {

// ---------------------------------------------------------------------------
// ARIMA / SARIMA
//
// On the differenced series w_t = (1-B)^d (1-B^s)^D x_t the model is
//   phi(B) Phi(B^s) w_t = c + theta(B) Theta(B^s) e_t
// with phi(B) = 1 - phi_1 B - ... - phi_p B^p and, following the usual
// Box-Jenkins sign, theta(B) = 1 - theta_1 B - ... - theta_q B^q. A positive
// theta_1 therefore means x_t = ... + e_t - theta_1 e_{t-1}.
// ---------------------------------------------------------------------------

struct SeasonalOrder {
  int P = 0, D = 0, Q = 0, s = 0;
  friend bool operator==(const SeasonalOrder&, const SeasonalOrder&) = default;
};

struct ArimaOrder {
  int p = 0, d = 0, q = 0;
  std::optional<SeasonalOrder> seasonal;

  void validate() const;
  int parameter_count() const;  // p + q + P + Q
  std::string to_string() const;
  friend bool operator==(const ArimaOrder&, const ArimaOrder&) = default;
};

struct ArimaModel {
  ArimaOrder order;
  std::vector<double> phi;
  std::vector<double> theta;
  std::vector<double> seasonal_phi;
  std::vector<double> seasonal_theta;
  double intercept = 0.0;
  double residual_rms = 0.0;

  // Expanded lag polynomials: w_t = c + sum ar[k-1] w_{t-k} + e_t - sum ma[k-1] e_{t-k}.
  std::vector<double> ar_polynomial() const;
  std::vector<double> ma_polynomial() const;
  // (1-B)^d (1-B^s)^D as coefficients of B^0..B^k.
  std::vector<double> difference_polynomial() const;
};

/// Hannan-Rissanen estimation followed by one Gauss-Newton pass on the
/// conditional sum of squares. Throws std::invalid_argument when the series
/// is too short and FitError on a singular regression.
ArimaModel arima_fit(std::span<const double> values, const ArimaOrder& order);

/// In-sample conditional residuals of `model` on the differenced series.
std::vector<double> arima_residuals(const ArimaModel& model, std::span<const double> values);

/// One-step forecast on the original scale.
double arima_forecast_one_step(const ArimaModel& model, std::span<const double> history);

/// Candidates with p, q in [1, max_order] and d in [0, max_order - 1]; with a
/// seasonal period the same ranges apply to P, Q and D.
std::vector<ArimaOrder> enumerate_orders(int max_order, int seasonal_period = 0);

struct OrderSearchOptions {
  int max_order = 3;
  int folds = 3;
  int seasonal_period = 0;  // > 1 enables the seasonal search
  // Fix the non-seasonal part and only search the seasonal one.
  std::optional<ArimaOrder> nonseasonal;
  int seasonal_max_order = 0;  // 0: same as max_order
};

struct OrderSearchResult {
  ArimaOrder order;
  double score = 0.0;  // mean squared one-step error
  std::vector<std::string> failures;
};

/// Forward-chaining (expanding window) cross-validation over the candidate
/// grid. Ties go to the smallest p+q+P+Q, then the smallest p.
OrderSearchResult grid_search_order(std::span<const double> train,
                                    const OrderSearchOptions& options);
ArimaOrder grid_search_order(std::span<const double> train, int max_order, int folds);

/// Unsupervised route: d from the lag-1 autocorrelation of successive
/// differences, then (p, q) minimising AIC = n ln(SSE/n) + 2 (p + q + 1).
OrderSearchResult select_order_aic(std::span<const double> train, int max_order);

// ---------------------------------------------------------------------------
// Classical additive decomposition (moving-average trend, per-phase seasonal)
// ---------------------------------------------------------------------------

struct Decomposition {
  std::vector<double> trend;
  std::vector<double> seasonal;
  std::vector<double> residual;
  int period = 0;
  std::vector<double> seasonal_profile;  // one value per phase, sums to zero
};

Decomposition stl_decompose(std::span<const double> values, int period);

// ---------------------------------------------------------------------------
// Lag regressors. A lag vector for target x_t is [x_{t-1}, x_{t-2}, ...,
// x_{t-lags}]: feature 0 is the most recent value. Contexts passed to the
// prediction helpers are chronological (oldest first).
// ---------------------------------------------------------------------------

struct LagDataset {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;
};

LagDataset make_lag_pairs(std::span<const double> series, int lags);
Eigen::RowVectorXd lag_vector(std::span<const double> context, int lags);

double knn_predict(const LagDataset& data, int k, const Eigen::RowVectorXd& query,
                   std::optional<Eigen::Index> exclude = std::nullopt);
double knn_forecast(std::span<const double> train, int lags, int k,
                    std::span<const double> context);

struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
    std::size_t count = 0;
  };
  std::vector<Node> nodes;
  int lags = 0;

  double predict(const Eigen::RowVectorXd& features) const;
  double predict_context(std::span<const double> context) const;
  int depth() const;
};

/// Greedy variance-reduction tree; x <= threshold goes left.
RegressionTree cart_fit(const LagDataset& data, int max_depth, int min_leaf);
RegressionTree cart_forecast(std::span<const double> train, int lags, int max_depth, int min_leaf);

// ---------------------------------------------------------------------------
// Residual rule and streaming one-step predictors
// ---------------------------------------------------------------------------

/// flag_i = |actual_i - prediction_i| > multiplier * rms. With rms == 0 any
/// nonzero residual is flagged.
std::vector<bool> residual_threshold_detect(std::span<const double> predictions,
                                            std::span<const double> actuals, double rms,
                                            double multiplier = 3.0);

class OneStepPredictor {
 public:
  virtual ~OneStepPredictor() = default;
  virtual double predict() const = 0;
  virtual void observe(double value) = 0;
  virtual bool ready() const = 0;
};

class ArimaPredictor final : public OneStepPredictor {
 public:
  explicit ArimaPredictor(ArimaModel model);
  double predict() const override;
  void observe(double value) override;
  bool ready() const override;

 private:
  double predict_differenced() const;

  ArimaModel model_;
  std::vector<double> ar_, ma_, diff_;
  std::vector<double> x_, w_, e_;
};

/// Level = mean of the last `period` values, plus the seasonal profile.
class SeasonalLevelPredictor final : public OneStepPredictor {
 public:
  SeasonalLevelPredictor(std::vector<double> seasonal_profile, std::size_t phase0);
  double predict() const override;
  void observe(double value) override;
  bool ready() const override;

 private:
  std::vector<double> profile_;
  std::size_t next_phase_;
  std::deque<double> recent_;
  double sum_ = 0.0;
};

/// Any regressor over lag vectors.
class LagPredictor final : public OneStepPredictor {
 public:
  using Model = std::function<double(const Eigen::RowVectorXd&)>;
  LagPredictor(int lags, Model model);
  double predict() const override;
  void observe(double value) override;
  bool ready() const override;

 private:
  int lags_;
  Model model_;
  std::deque<double> recent_;
};

}  // namespace txsentry
