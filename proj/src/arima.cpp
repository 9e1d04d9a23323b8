#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "txsentry/error.hpp"
#include "txsentry/predictive.hpp"
#include "txsentry/series.hpp"

namespace txsentry {

namespace {

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

// 1 - c_1 B^stride - c_2 B^(2 stride) - ...
std::vector<double> lag_poly(const std::vector<double>& coeffs, int stride) {
  std::vector<double> out(coeffs.size() * static_cast<std::size_t>(stride) + 1, 0.0);
  out[0] = 1.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    out[(i + 1) * static_cast<std::size_t>(stride)] = -coeffs[i];
  return out;
}

std::vector<double> expanded(const std::vector<double>& regular, const std::vector<double>& seasonal,
                             int period) {
  auto prod = lag_poly(regular, 1);
  if (!seasonal.empty()) prod = poly_mul(prod, lag_poly(seasonal, period));
  std::vector<double> out(prod.size() - 1);
  for (std::size_t k = 1; k < prod.size(); ++k) out[k - 1] = -prod[k];
  while (!out.empty() && out.back() == 0.0) out.pop_back();
  return out;
}

std::vector<double> differenced(std::span<const double> values, const ArimaOrder& order) {
  std::vector<double> w = difference(values, order.d);
  if (order.seasonal && order.seasonal->D > 0) w = seasonal_difference(w, order.seasonal->s, order.seasonal->D);
  return w;
}

// Conditional residuals; the first ar.size() positions are conditioning values.
std::vector<double> css_residuals(const std::vector<double>& ar, const std::vector<double>& ma,
                                  double intercept, const std::vector<double>& w) {
  const std::size_t start = ar.size();
  if (w.size() <= start) return {};
  std::vector<double> e(w.size(), 0.0);
  for (std::size_t t = start; t < w.size(); ++t) {
    double pred = intercept;
    for (std::size_t k = 1; k <= ar.size(); ++k) pred += ar[k - 1] * w[t - k];
    for (std::size_t k = 1; k <= ma.size() && k <= t; ++k) pred -= ma[k - 1] * e[t - k];
    e[t] = w[t] - pred;
  }
  return {e.begin() + static_cast<std::ptrdiff_t>(start), e.end()};
}

double sum_squares(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

// Least squares with a rank check; FitError when the design is singular.
Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
                                    const char* what) {
  if (design.rows() < design.cols())
    throw FitError(std::string(what) + ": fewer observations than regressors");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) throw FitError(std::string(what) + ": singular regression (collinear lags)");
  Eigen::VectorXd beta = qr.solve(target);
  if (!beta.allFinite()) throw NumericError(std::string(what) + ": non-finite coefficients");
  return beta;
}

// Parameter vector layout: [c, phi(p), Phi(P), theta(q), Theta(Q)].
struct Layout {
  int p, P, q, Q, s;
  int size() const { return 1 + p + P + q + Q; }

  void unpack(const Eigen::VectorXd& beta, ArimaModel& m) const {
    int k = 0;
    m.intercept = beta(k++);
    m.phi.assign(static_cast<std::size_t>(p), 0.0);
    m.seasonal_phi.assign(static_cast<std::size_t>(P), 0.0);
    m.theta.assign(static_cast<std::size_t>(q), 0.0);
    m.seasonal_theta.assign(static_cast<std::size_t>(Q), 0.0);
    for (auto& v : m.phi) v = beta(k++);
    for (auto& v : m.seasonal_phi) v = beta(k++);
    for (auto& v : m.theta) v = beta(k++);
    for (auto& v : m.seasonal_theta) v = beta(k++);
  }

  Eigen::VectorXd pack(const ArimaModel& m) const {
    Eigen::VectorXd beta(size());
    int k = 0;
    beta(k++) = m.intercept;
    for (double v : m.phi) beta(k++) = v;
    for (double v : m.seasonal_phi) beta(k++) = v;
    for (double v : m.theta) beta(k++) = v;
    for (double v : m.seasonal_theta) beta(k++) = v;
    return beta;
  }
};

std::vector<double> model_residuals(const Layout& layout, const Eigen::VectorXd& beta,
                                    const ArimaOrder& order, const std::vector<double>& w) {
  ArimaModel m;
  m.order = order;
  layout.unpack(beta, m);
  return css_residuals(m.ar_polynomial(), m.ma_polynomial(), m.intercept, w);
}

// One Gauss-Newton step on the CSS objective with step halving.
void gauss_newton_pass(const Layout& layout, const ArimaOrder& order, const std::vector<double>& w,
                       ArimaModel& model) {
  const Eigen::VectorXd beta = layout.pack(model);
  const auto r0 = model_residuals(layout, beta, order, w);
  const double sse0 = sum_squares(r0);
  if (r0.empty() || !std::isfinite(sse0)) return;
  const auto rows = static_cast<Eigen::Index>(r0.size());
  Eigen::MatrixXd jac(rows, layout.size());
  for (int j = 0; j < layout.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(beta(j)));
    Eigen::VectorXd hi = beta, lo = beta;
    hi(j) += h;
    lo(j) -= h;
    const auto rh = model_residuals(layout, hi, order, w);
    const auto rl = model_residuals(layout, lo, order, w);
    for (Eigen::Index t = 0; t < rows; ++t)
      jac(t, j) = (rh[static_cast<std::size_t>(t)] - rl[static_cast<std::size_t>(t)]) / (2.0 * h);
  }
  if (!jac.allFinite()) return;
  Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(r0.data(), rows);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
  const Eigen::VectorXd step = qr.solve(-r);
  if (!step.allFinite()) return;
  double scale = 1.0;
  for (int attempt = 0; attempt < 12; ++attempt, scale *= 0.5) {
    const Eigen::VectorXd trial = beta + scale * step;
    const double sse = sum_squares(model_residuals(layout, trial, order, w));
    if (std::isfinite(sse) && sse < sse0) {
      layout.unpack(trial, model);
      return;
    }
  }
}

}  // namespace

void ArimaOrder::validate() const {
  if (p < 0 || d < 0 || q < 0) throw std::invalid_argument("ARIMA order components must be non-negative");
  if (p + q < 1 && d < 1 && !(seasonal && (seasonal->P + seasonal->Q >= 1 || seasonal->D >= 1)))
    throw std::invalid_argument("ARIMA order needs p + q >= 1 or d >= 1");
  if (seasonal) {
    const auto& s = *seasonal;
    if (s.P < 0 || s.D < 0 || s.Q < 0) throw std::invalid_argument("seasonal order components must be non-negative");
    if (s.s < 2) throw std::invalid_argument("seasonal period must be >= 2");
    if (s.P + s.Q < 1 && s.D < 1) throw std::invalid_argument("seasonal order needs P + Q >= 1 or D >= 1");
  }
}

int ArimaOrder::parameter_count() const {
  return p + q + (seasonal ? seasonal->P + seasonal->Q : 0);
}

std::string ArimaOrder::to_string() const {
  std::ostringstream ss;
  ss << '(' << p << ',' << d << ',' << q << ')';
  if (seasonal) ss << '(' << seasonal->P << ',' << seasonal->D << ',' << seasonal->Q << ',' << seasonal->s << ')';
  return ss.str();
}

std::vector<double> ArimaModel::ar_polynomial() const {
  return expanded(phi, seasonal_phi, order.seasonal ? order.seasonal->s : 1);
}

std::vector<double> ArimaModel::ma_polynomial() const {
  return expanded(theta, seasonal_theta, order.seasonal ? order.seasonal->s : 1);
}

std::vector<double> ArimaModel::difference_polynomial() const {
  std::vector<double> poly{1.0};
  for (int i = 0; i < order.d; ++i) poly = poly_mul(poly, {1.0, -1.0});
  if (order.seasonal) {
    std::vector<double> sd(static_cast<std::size_t>(order.seasonal->s) + 1, 0.0);
    sd.front() = 1.0;
    sd.back() = -1.0;
    for (int i = 0; i < order.seasonal->D; ++i) poly = poly_mul(poly, sd);
  }
  return poly;
}

ArimaModel arima_fit(std::span<const double> values, const ArimaOrder& order) {
  order.validate();
  const int s = order.seasonal ? order.seasonal->s : 1;
  const int P = order.seasonal ? order.seasonal->P : 0;
  const int Q = order.seasonal ? order.seasonal->Q : 0;
  const int span_diff = order.d + (order.seasonal ? order.seasonal->D * s : 0);
  if (values.size() <= static_cast<std::size_t>(span_diff))
    throw std::invalid_argument("arima_fit: series shorter than the differencing span");
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError("arima_fit: non-finite input");

  const std::vector<double> w = differenced(values, order);
  const auto m = static_cast<int>(w.size());
  if (m < 10 * (order.p + order.q + P + Q + 1))
    throw std::invalid_argument("arima_fit: need at least 10 (p+q+1) points after differencing, have " +
                                std::to_string(m));

  std::vector<int> ar_lags, ma_lags;
  for (int i = 1; i <= order.p; ++i) ar_lags.push_back(i);
  for (int i = 1; i <= P; ++i) ar_lags.push_back(i * s);
  for (int i = 1; i <= order.q; ++i) ma_lags.push_back(i);
  for (int i = 1; i <= Q; ++i) ma_lags.push_back(i * s);
  const int max_ar = ar_lags.empty() ? 0 : *std::max_element(ar_lags.begin(), ar_lags.end());
  const int max_ma = ma_lags.empty() ? 0 : *std::max_element(ma_lags.begin(), ma_lags.end());

  // Stage 1: long autoregression as a proxy for the innovations.
  std::vector<double> innov(static_cast<std::size_t>(m), 0.0);
  int burn = 0;
  if (!ma_lags.empty()) {
    int long_order = static_cast<int>(std::ceil(10.0 * std::log10(static_cast<double>(m))));
    long_order = std::max(long_order, max_ma + 1);
    long_order = std::min(long_order, std::max(max_ma + 1, (m - 1) / 3));
    const int rows = m - long_order;
    Eigen::MatrixXd design(rows, long_order + 1);
    Eigen::VectorXd target(rows);
    for (int t = long_order; t < m; ++t) {
      const int r = t - long_order;
      design(r, 0) = 1.0;
      for (int k = 1; k <= long_order; ++k) design(r, k) = w[static_cast<std::size_t>(t - k)];
      target(r) = w[static_cast<std::size_t>(t)];
    }
    const Eigen::VectorXd beta = solve_least_squares(design, target, "long autoregression");
    const Eigen::VectorXd fitted = design * beta;
    for (int t = long_order; t < m; ++t)
      innov[static_cast<std::size_t>(t)] = w[static_cast<std::size_t>(t)] - fitted(t - long_order);
    burn = long_order;
  }

  // Stage 2: regress on lagged values and lagged innovation estimates.
  const int start = burn + std::max(max_ar, max_ma);
  const int rows = m - start;
  const int cols = 1 + static_cast<int>(ar_lags.size() + ma_lags.size());
  if (rows < cols + 1) throw FitError("arima_fit: not enough observations for the order");
  Eigen::MatrixXd design(rows, cols);
  Eigen::VectorXd target(rows);
  for (int t = start; t < m; ++t) {
    const int r = t - start;
    int c = 0;
    design(r, c++) = 1.0;
    for (int lag : ar_lags) design(r, c++) = w[static_cast<std::size_t>(t - lag)];
    for (int lag : ma_lags) design(r, c++) = innov[static_cast<std::size_t>(t - lag)];
    target(r) = w[static_cast<std::size_t>(t)];
  }
  const Eigen::VectorXd beta = solve_least_squares(design, target, "Hannan-Rissanen regression");

  ArimaModel model;
  model.order = order;
  Layout layout{order.p, P, order.q, Q, s};
  {
    Eigen::VectorXd packed(layout.size());
    int k = 0, c = 0;
    packed(k++) = beta(c++);
    for (std::size_t i = 0; i < ar_lags.size(); ++i) packed(k++) = beta(c++);
    for (std::size_t i = 0; i < ma_lags.size(); ++i) packed(k++) = -beta(c++);
    layout.unpack(packed, model);
  }

  gauss_newton_pass(layout, order, w, model);

  const auto resid = css_residuals(model.ar_polynomial(), model.ma_polynomial(), model.intercept, w);
  if (resid.empty()) throw FitError("arima_fit: no residuals left after conditioning");
  model.residual_rms = rms(resid);
  if (!std::isfinite(model.residual_rms) || !std::isfinite(model.intercept))
    throw NumericError("arima_fit: non-finite estimates");
  for (const auto* v : {&model.phi, &model.theta, &model.seasonal_phi, &model.seasonal_theta})
    for (double c : *v)
      if (!std::isfinite(c)) throw NumericError("arima_fit: non-finite coefficients");
  return model;
}

std::vector<double> arima_residuals(const ArimaModel& model, std::span<const double> values) {
  return css_residuals(model.ar_polynomial(), model.ma_polynomial(), model.intercept,
                       differenced(values, model.order));
}

ArimaPredictor::ArimaPredictor(ArimaModel model)
    : model_(std::move(model)),
      ar_(model_.ar_polynomial()),
      ma_(model_.ma_polynomial()),
      diff_(model_.difference_polynomial()) {}

bool ArimaPredictor::ready() const {
  const std::size_t span = diff_.size() - 1;
  return x_.size() >= std::max<std::size_t>(span, 1) && w_.size() >= ar_.size();
}

double ArimaPredictor::predict_differenced() const {
  const std::size_t n = w_.size();
  double pred = model_.intercept;
  for (std::size_t k = 1; k <= ar_.size(); ++k) pred += ar_[k - 1] * w_[n - k];
  for (std::size_t k = 1; k <= ma_.size() && k <= n; ++k) pred -= ma_[k - 1] * e_[n - k];
  return pred;
}

double ArimaPredictor::predict() const {
  if (!ready()) throw std::invalid_argument("ARIMA forecast: insufficient history");
  double pred = predict_differenced();
  const std::size_t n = x_.size();
  for (std::size_t k = 1; k < diff_.size(); ++k) pred -= diff_[k] * x_[n - k];
  return pred;
}

void ArimaPredictor::observe(double value) {
  const std::size_t span = diff_.size() - 1;
  x_.push_back(value);
  if (x_.size() <= span) return;
  const std::size_t n = x_.size();
  double w = 0.0;
  for (std::size_t k = 0; k < diff_.size(); ++k) w += diff_[k] * x_[n - 1 - k];
  // Residuals before the conditioning span are zero, as in the fit.
  const double e = w_.size() >= ar_.size() ? w - predict_differenced() : 0.0;
  w_.push_back(w);
  e_.push_back(e);
}

double arima_forecast_one_step(const ArimaModel& model, std::span<const double> history) {
  ArimaPredictor predictor(model);
  for (double v : history) predictor.observe(v);
  return predictor.predict();
}

std::vector<ArimaOrder> enumerate_orders(int max_order, int seasonal_period) {
  if (max_order < 1) throw std::invalid_argument("enumerate_orders: max_order must be >= 1");
  std::vector<ArimaOrder> nonseasonal;
  for (int p = 1; p <= max_order; ++p)
    for (int d = 0; d < max_order; ++d)
      for (int q = 1; q <= max_order; ++q) nonseasonal.push_back({p, d, q, std::nullopt});
  if (seasonal_period < 2) return nonseasonal;
  std::vector<ArimaOrder> out;
  for (const auto& base : nonseasonal)
    for (int P = 1; P <= max_order; ++P)
      for (int D = 0; D < max_order; ++D)
        for (int Q = 1; Q <= max_order; ++Q) {
          ArimaOrder o = base;
          o.seasonal = SeasonalOrder{P, D, Q, seasonal_period};
          out.push_back(o);
        }
  return out;
}

namespace {

bool better_order(double score, const ArimaOrder& cand, double best_score, const ArimaOrder& best) {
  if (score < best_score) return true;
  if (score > best_score) return false;
  if (cand.parameter_count() != best.parameter_count()) return cand.parameter_count() < best.parameter_count();
  return cand.p < best.p;
}

// Squared one-step errors over the validation folds, in time order.
std::vector<double> forward_chain_errors(std::span<const double> train, const ArimaOrder& order, int folds) {
  const std::size_t n = train.size();
  const std::size_t chunk = n / static_cast<std::size_t>(folds + 1);
  if (chunk == 0) throw std::invalid_argument("grid_search_order: too few points for the folds");
  std::vector<double> out;
  for (int k = 1; k <= folds; ++k) {
    const std::size_t fit_end = chunk * static_cast<std::size_t>(k);
    const std::size_t test_end = k == folds ? n : fit_end + chunk;
    const auto model = arima_fit(train.subspan(0, fit_end), order);
    ArimaPredictor predictor(model);
    for (std::size_t t = 0; t < fit_end; ++t) predictor.observe(train[t]);
    for (std::size_t t = fit_end; t < test_end; ++t) {
      const double err = train[t] - predictor.predict();
      out.push_back(err * err);
      predictor.observe(train[t]);
    }
  }
  for (double e : out)
    if (!std::isfinite(e)) throw NumericError("non-finite validation error");
  return out;
}

// Mean of a - b and its standard error.
std::pair<double, double> paired_excess(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] - b[i];
  const double mean = sum / n;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  return {mean, a.size() > 1 ? std::sqrt(sq / (n - 1.0) / n) : 0.0};
}

}  // namespace

OrderSearchResult grid_search_order(std::span<const double> train, const OrderSearchOptions& options) {
  if (options.max_order < 1 || options.folds < 1)
    throw std::invalid_argument("grid_search_order: max_order and folds must be >= 1");
  std::vector<ArimaOrder> candidates;
  if (options.nonseasonal) {
    const int smax = options.seasonal_max_order > 0 ? options.seasonal_max_order : options.max_order;
    if (options.seasonal_period < 2) {
      candidates.push_back(*options.nonseasonal);
    } else {
      for (int P = 1; P <= smax; ++P)
        for (int D = 0; D < smax; ++D)
          for (int Q = 1; Q <= smax; ++Q) {
            ArimaOrder o = *options.nonseasonal;
            o.seasonal = SeasonalOrder{P, D, Q, options.seasonal_period};
            candidates.push_back(o);
          }
    }
  } else {
    candidates = enumerate_orders(options.max_order, options.seasonal_period);
  }

  OrderSearchResult result;
  std::vector<std::pair<ArimaOrder, std::vector<double>>> scored;
  std::size_t best = 0;
  for (const auto& cand : candidates) {
    try {
      scored.emplace_back(cand, forward_chain_errors(train, cand, options.folds));
    } catch (const std::exception& e) {
      result.failures.push_back(cand.to_string() + ": " + e.what());
      continue;
    }
    const auto& [order, errors] = scored.back();
    if (scored.size() == 1 || better_order(mean(errors), order, mean(scored[best].second), scored[best].first))
      best = scored.size() - 1;
  }
  if (scored.empty()) {
    std::string msg = "grid_search_order: every candidate failed";
    for (const auto& f : result.failures) msg += "\n  " + f;
    throw FitError(msg);
  }
  // One-standard-error rule on paired errors: the fewest parameters among
  // candidates not distinguishable from the best.
  const auto& reference = scored[best].second;
  const double best_se = stddev(reference) / std::sqrt(static_cast<double>(reference.size()));
  std::size_t pick = best;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const auto [excess, se] = paired_excess(scored[i].second, reference);
    if (excess > std::min(se, best_se)) continue;
    const int pc = scored[i].first.parameter_count(), best_pc = scored[pick].first.parameter_count();
    if (pc < best_pc ||
        (pc == best_pc && better_order(mean(scored[i].second), scored[i].first, mean(scored[pick].second),
                                       scored[pick].first)))
      pick = i;
  }
  result.order = scored[pick].first;
  result.score = mean(scored[pick].second);
  return result;
}

ArimaOrder grid_search_order(std::span<const double> train, int max_order, int folds) {
  OrderSearchOptions options;
  options.max_order = max_order;
  options.folds = folds;
  return grid_search_order(train, options).order;
}

OrderSearchResult select_order_aic(std::span<const double> train, int max_order) {
  if (max_order < 1) throw std::invalid_argument("select_order_aic: max_order must be >= 1");
  int d = 0;
  while (d < max_order - 1) {
    const auto w = difference(train, d);
    double r1 = 0.0;
    try {
      r1 = acf(w, 1)[1];
    } catch (const std::invalid_argument&) {
      break;
    }
    if (r1 <= 0.9) break;
    ++d;
  }

  OrderSearchResult result;
  bool found = false;
  double best = std::numeric_limits<double>::infinity();
  for (int p = 1; p <= max_order; ++p) {
    for (int q = 1; q <= max_order; ++q) {
      const ArimaOrder cand{p, d, q, std::nullopt};
      double aic;
      try {
        const auto model = arima_fit(train, cand);
        auto resid = arima_residuals(model, train);
        // Compare every candidate over the same residual span.
        const auto drop = static_cast<std::size_t>(max_order - p);
        if (resid.size() <= drop) throw FitError("too few residuals");
        resid.erase(resid.begin(), resid.begin() + static_cast<std::ptrdiff_t>(drop));
        const double n = static_cast<double>(resid.size());
        aic = n * std::log(sum_squares(resid) / n) + 2.0 * (p + q + 1);
        if (!std::isfinite(aic)) throw NumericError("non-finite AIC");
      } catch (const std::exception& e) {
        result.failures.push_back(cand.to_string() + ": " + e.what());
        continue;
      }
      if (!found || better_order(aic, cand, best, result.order)) {
        found = true;
        best = aic;
        result.order = cand;
        result.score = aic;
      }
    }
  }
  if (!found) throw FitError("select_order_aic: every candidate failed");
  return result;
}

}  // namespace txsentry
