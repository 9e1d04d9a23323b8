#include "txsentry/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "txsentry/clustering.hpp"
#include "txsentry/error.hpp"
#include "txsentry/kernels.hpp"
#include "txsentry/predictive.hpp"
#include "txsentry/reduction.hpp"
#include "txsentry/rng.hpp"
#include "txsentry/series.hpp"

namespace txsentry {

std::vector<double> Frame::slice(std::size_t feature, std::size_t begin, std::size_t stop) const {
  if (begin < first || stop > end() || begin > stop) throw std::out_of_range("frame slice outside stored cells");
  const auto& c = cells[feature];
  return {c.begin() + static_cast<std::ptrdiff_t>(begin - first), c.begin() + static_cast<std::ptrdiff_t>(stop - first)};
}

void Frame::push(const std::vector<double>& values) {
  if (values.size() != features.size()) throw std::invalid_argument("frame push: one value per feature expected");
  cells.resize(features.size());
  for (std::size_t f = 0; f < values.size(); ++f) cells[f].push_back(values[f]);
}

void Frame::evict_before(std::size_t index) {
  if (index <= first) return;
  const std::size_t n = std::min(index, end()) - first;
  for (auto& c : cells) c.erase(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n));
  first += n;
}

Frame build_frame(const std::vector<Transaction>& transactions, const std::vector<FeatureKind>& features,
                  std::int64_t step) {
  if (transactions.empty()) throw DataError("no transactions to analyse");
  if (features.empty()) throw std::invalid_argument("build_frame: no features");
  Frame frame;
  frame.step = step;
  frame.features = features;
  for (auto f : features) {
    const auto grid = resample(merge_cooccurring(to_feature_series(transactions, f)), step);
    if (frame.cells.empty()) frame.t0 = grid.points.front().ts;
    frame.cells.push_back(grid.values());
  }
  return frame;
}

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : sep) + p;
  return out;
}

bool exceeds(double actual, double prediction, double rms, double multiplier) {
  return residual_threshold_detect(std::span(&prediction, 1), std::span(&actual, 1), rms, multiplier)[0];
}

int season_period(const std::vector<double>& values, const EnsembleConfig& config) {
  if (config.season_period > 0) return config.season_period;
  for (auto method : {PeriodMethod::Acf, PeriodMethod::Periodogram}) {
    try {
      const int p = estimate_period(values, method);
      if (p >= 2 && static_cast<std::size_t>(4 * p) <= values.size()) return p;
    } catch (const std::exception&) {
      // Constant series: nothing to estimate from.
    }
  }
  return config.season_fallback;
}

// ---------------------------------------------------------------------------
// Predictive bank: one-step predictors per feature, flag when any feature's
// residual exceeds multiplier * RMS.
// ---------------------------------------------------------------------------

class PredictiveDetector : public Detector {
 public:
  PredictiveDetector(std::string id, const EnsembleConfig& config)
      : Detector(std::move(id), Category::Predictive), config_(config) {}

  void fit(const Frame& frame, std::size_t begin, std::size_t end) override {
    tracks_.clear();
    warnings_.clear();
    std::vector<std::string> failures;
    for (std::size_t f = 0; f < frame.features.size(); ++f) {
      try {
        Track t = build(frame.slice(f, begin, end));
        t.feature = f;
        tracks_.push_back(std::move(t));
      } catch (const std::exception& e) {
        failures.push_back(std::string(feature_name(frame.features[f])) + ": " + e.what());
      }
    }
    if (tracks_.empty()) throw FitError(id() + ": " + join(failures, "; "));
    for (const auto& msg : failures) warnings_.push_back(id() + " skipped " + msg);
    next_ = end;
  }

  CellRange score(const Frame& frame, std::size_t begin, std::size_t end,
                  std::vector<std::size_t>& flagged) override {
    if (begin != next_)
      throw std::invalid_argument(id() + ": scoring must continue at cell " + std::to_string(next_));
    for (std::size_t j = begin; j < end; ++j) {
      bool any = false;
      for (auto& t : tracks_) {
        const double x = frame.at(t.feature, j);
        if (!t.predictor->ready()) {
          t.predictor->observe(x);
          continue;
        }
        const double pred = t.predictor->predict();
        const bool flag = exceeds(x, pred, t.rms, config_.residual_multiplier);
        any = any || flag;
        // A flagged value is replaced by its prediction so it does not drag
        // the following forecasts.
        t.predictor->observe(flag && config_.clean_flagged ? pred : x);
      }
      if (any) flagged.push_back(j);
    }
    next_ = end;
    return {begin, end};
  }

 protected:
  struct Track {
    std::size_t feature = 0;
    std::unique_ptr<OneStepPredictor> predictor;
    double rms = 0.0;
  };

  // Fits one feature; the returned predictor has observed all of `values`.
  virtual Track build(const std::vector<double>& values) = 0;

  ArimaOrder select_nonseasonal(const std::vector<double>& values) const {
    if (config_.order_selection == OrderSelection::Aic) return select_order_aic(values, config_.max_order).order;
    return grid_search_order(values, OrderSearchOptions{config_.max_order, config_.cv_folds, 0, std::nullopt, 0}).order;
  }

  static Track arima_track(const std::vector<double>& values, const ArimaOrder& order) {
    auto model = arima_fit(values, order);
    Track t;
    t.rms = model.residual_rms;
    t.predictor = std::make_unique<ArimaPredictor>(std::move(model));
    for (double v : values) t.predictor->observe(v);
    return t;
  }

  const EnsembleConfig config_;

 private:
  std::vector<Track> tracks_;
  std::size_t next_ = 0;
};

class ArimaDetector final : public PredictiveDetector {
 public:
  using PredictiveDetector::PredictiveDetector;

 protected:
  Track build(const std::vector<double>& values) override { return arima_track(values, select_nonseasonal(values)); }
};

class SarimaDetector final : public PredictiveDetector {
 public:
  using PredictiveDetector::PredictiveDetector;

 protected:
  Track build(const std::vector<double>& values) override {
    OrderSearchOptions options;
    options.max_order = config_.max_order;
    options.folds = config_.cv_folds;
    options.nonseasonal = select_nonseasonal(values);
    options.seasonal_period = season_period(values, config_);
    // Seasonal lags must not land on the non-seasonal ones.
    if (options.nonseasonal && options.seasonal_period <= std::max(options.nonseasonal->p, options.nonseasonal->q))
      options.seasonal_period = config_.season_fallback;
    options.seasonal_max_order = config_.seasonal_max_order;
    return arima_track(values, grid_search_order(values, options).order);
  }
};

class StlDetector final : public PredictiveDetector {
 public:
  using PredictiveDetector::PredictiveDetector;

 protected:
  Track build(const std::vector<double>& values) override {
    const int period = season_period(values, config_);
    const auto dec = stl_decompose(values, period);
    Track t;
    t.predictor = std::make_unique<SeasonalLevelPredictor>(dec.seasonal_profile, 0);
    std::vector<double> errors;
    for (double v : values) {
      if (t.predictor->ready()) errors.push_back(v - t.predictor->predict());
      t.predictor->observe(v);
    }
    if (errors.empty()) throw std::invalid_argument("stl: series shorter than one period");
    t.rms = rms(errors);
    return t;
  }
};

class KnnDetector final : public PredictiveDetector {
 public:
  using PredictiveDetector::PredictiveDetector;

 protected:
  Track build(const std::vector<double>& values) override {
    auto data = std::make_shared<LagDataset>(make_lag_pairs(values, config_.lags));
    const auto n = data->inputs.rows();
    if (n < 2) throw std::invalid_argument("knn: need at least 2 lag pairs");
    const int k = static_cast<int>(std::min<Eigen::Index>(config_.knn_k, n - 1));
    // Leave-one-out error on at most 2000 evenly spaced pairs.
    const Eigen::Index stride = std::max<Eigen::Index>(1, (n + 1999) / 2000);
    std::vector<double> errors;
    for (Eigen::Index i = 0; i < n; i += stride)
      errors.push_back(data->targets(i) - knn_predict(*data, k, data->inputs.row(i), i));
    Track t;
    t.rms = rms(errors);
    t.predictor = std::make_unique<LagPredictor>(
        config_.lags, [data, k](const Eigen::RowVectorXd& q) { return knn_predict(*data, k, q); });
    for (double v : values) t.predictor->observe(v);
    return t;
  }
};

class CartDetector final : public PredictiveDetector {
 public:
  using PredictiveDetector::PredictiveDetector;

 protected:
  Track build(const std::vector<double>& values) override {
    const auto data = make_lag_pairs(values, config_.lags);
    auto tree = std::make_shared<RegressionTree>(cart_fit(data, config_.cart_depth, config_.cart_min_leaf));
    std::vector<double> errors(static_cast<std::size_t>(data.inputs.rows()));
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i)
      errors[static_cast<std::size_t>(i)] = data.targets(i) - tree->predict(data.inputs.row(i));
    Track t;
    t.rms = rms(errors);
    t.predictor = std::make_unique<LagPredictor>(
        config_.lags, [tree](const Eigen::RowVectorXd& q) { return tree->predict(q); });
    for (double v : values) t.predictor->observe(v);
    return t;
  }
};

class KrrDetector final : public PredictiveDetector {
 public:
  using PredictiveDetector::PredictiveDetector;

 protected:
  Track build(const std::vector<double>& values) override {
    const double mu = mean(values);
    double sd = stddev(values);
    if (!(sd > 0.0)) sd = 1.0;
    std::vector<double> z(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) z[i] = (values[i] - mu) / sd;
    const auto data = make_lag_pairs(z, config_.lags);
    const Eigen::Index n = data.inputs.rows();
    const Eigen::Index m = std::min<Eigen::Index>(config_.krr_max_pairs, n);
    if (m < 2) throw std::invalid_argument("krr: need at least 2 lag pairs");
    // Most recent m pairs fit the model; up to m earlier pairs measure its error.
    const Eigen::MatrixXd x = data.inputs.bottomRows(m);
    const Eigen::VectorXd y = data.targets.tail(m);
    const double gamma = config_.krr_gamma > 0.0 ? config_.krr_gamma : default_rbf_gamma(x);
    auto model = std::make_shared<KernelRidge>(kernel_ridge_fit(x, y, KernelSpec::rbf(gamma), config_.krr_lambda));
    const Eigen::Index held = std::min(m, n - m);
    std::vector<double> errors;
    if (held >= 30) {
      for (Eigen::Index i = n - m - held; i < n - m; ++i) errors.push_back(data.targets(i) - model->predict(data.inputs.row(i)));
    } else {
      for (Eigen::Index i = 0; i < m; ++i) errors.push_back(y(i) - model->predict(x.row(i)));
    }
    Track t;
    t.rms = sd * rms(errors);
    t.predictor = std::make_unique<LagPredictor>(config_.lags, [model, mu, sd](const Eigen::RowVectorXd& q) {
      const Eigen::RowVectorXd zq = (q.array() - mu) / sd;
      return mu + sd * model->predict(zq);
    });
    for (double v : values) t.predictor->observe(v);
    return t;
  }
};

// ---------------------------------------------------------------------------
// Window and row detectors. A vector ending at cell j covers cells
// j - width + 1 .. j; when it is flagged, all of them are.
// ---------------------------------------------------------------------------

class RowModel {
 public:
  virtual ~RowModel() = default;
  virtual bool flag(const Eigen::RowVectorXd& standardized) const = 0;
};

using RowFitter = std::function<std::unique_ptr<RowModel>(const Eigen::MatrixXd&, std::uint64_t)>;

class VectorDetector final : public Detector {
 public:
  VectorDetector(std::string id, Category category, bool rows, std::size_t width, std::size_t stride, RowFitter fitter,
                 std::uint64_t seed)
      : Detector(std::move(id), category),
        rows_(rows),
        width_(rows ? 1 : width),
        stride_(rows ? 1 : stride),
        fitter_(std::move(fitter)),
        seed_(seed) {}

  void fit(const Frame& frame, std::size_t begin, std::size_t end) override {
    tracks_.clear();
    warnings_.clear();
    std::vector<std::vector<std::size_t>> layouts;
    if (rows_) {
      layouts.emplace_back();
      for (std::size_t f = 0; f < frame.features.size(); ++f) layouts.back().push_back(f);
    } else {
      for (std::size_t f = 0; f < frame.features.size(); ++f) layouts.push_back({f});
    }
    std::vector<std::string> failures;
    for (std::size_t i = 0; i < layouts.size(); ++i) {
      try {
        Track t;
        t.features = layouts[i];
        const std::size_t start = std::max(begin + width_ - 1, frame.first + width_ - 1);
        if (end <= start + 1) throw std::invalid_argument("fewer than 2 complete windows");
        Eigen::MatrixXd training(static_cast<Eigen::Index>(end - start), static_cast<Eigen::Index>(width_ * t.features.size()));
        for (std::size_t j = start; j < end; ++j) training.row(static_cast<Eigen::Index>(j - start)) = vector_at(frame, t, j);
        auto [standardized, scaler] = standardize(training);
        t.scaler = std::move(scaler);
        t.model = fitter_(standardized, derive_seed(seed_, i));
        tracks_.push_back(std::move(t));
      } catch (const std::exception& e) {
        failures.push_back(rows_ ? std::string("rows: ") + e.what()
                                 : std::string(feature_name(frame.features[layouts[i].front()])) + ": " + e.what());
      }
    }
    if (tracks_.empty()) throw FitError(id() + ": " + join(failures, "; "));
    for (const auto& msg : failures) warnings_.push_back(id() + " skipped " + msg);
  }

  CellRange score(const Frame& frame, std::size_t begin, std::size_t end,
                  std::vector<std::size_t>& flagged) override {
    // Windows end on absolute cells j with (j + 1) % stride == 0.
    std::size_t j = std::max(begin, frame.first + width_ - 1);
    j += (stride_ - (j + 1) % stride_) % stride_;
    CellRange range{begin, begin};
    for (; j < end; j += stride_) {
      if (range.begin == range.end) range.begin = j + 1 - width_;
      range.end = j + 1;
      bool any = false;
      for (const auto& t : tracks_) any = any || t.model->flag(t.scaler.apply(Eigen::RowVectorXd(vector_at(frame, t, j))));
      if (any)
        for (std::size_t c = j + 1 - width_; c <= j; ++c) flagged.push_back(c);
    }
    return range;
  }

 private:
  struct Track {
    std::vector<std::size_t> features;
    Standardizer scaler;
    std::unique_ptr<RowModel> model;
  };

  Eigen::RowVectorXd vector_at(const Frame& frame, const Track& t, std::size_t j) const {
    Eigen::RowVectorXd v(static_cast<Eigen::Index>(width_ * t.features.size()));
    Eigen::Index k = 0;
    for (auto f : t.features)
      for (std::size_t c = j + 1 - width_; c <= j; ++c) v(k++) = frame.at(f, c);
    return v;
  }

  bool rows_;
  std::size_t width_;
  std::size_t stride_;
  RowFitter fitter_;
  std::uint64_t seed_;
  std::vector<Track> tracks_;
};

class ThresholdModel final : public RowModel {
 public:
  ThresholdModel(std::function<double(const Eigen::RowVectorXd&)> score, double threshold)
      : score_(std::move(score)), threshold_(threshold) {}
  bool flag(const Eigen::RowVectorXd& x) const override { return score_(x) > threshold_; }

 private:
  std::function<double(const Eigen::RowVectorXd&)> score_;
  double threshold_;
};

std::vector<double> scores_of(const Eigen::MatrixXd& rows, const std::function<double(const Eigen::RowVectorXd&)>& f) {
  std::vector<double> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out[static_cast<std::size_t>(i)] = f(rows.row(i));
  return out;
}

RowFitter pca_fitter(const EnsembleConfig& c) {
  return [explained = c.pca_explained, mult = c.score_multiplier](const Eigen::MatrixXd& rows, std::uint64_t) {
    auto model = std::make_shared<PcaModel>(pca_fit(rows, explained));
    std::function<double(const Eigen::RowVectorXd&)> f = [model](const Eigen::RowVectorXd& x) { return model->score(x); };
    const auto train = scores_of(rows, f);
    return std::make_unique<ThresholdModel>(f, score_threshold(train, mult));
  };
}

RowFitter iforest_fitter(const EnsembleConfig& c) {
  return [trees = c.iforest_trees, sub = c.iforest_subsample, cutoff = c.iforest_cutoff](const Eigen::MatrixXd& rows,
                                                                                         std::uint64_t seed) {
    auto forest = std::make_shared<IsolationForest>(iforest_fit(rows, trees, static_cast<std::size_t>(sub), seed));
    return std::make_unique<ThresholdModel>([forest](const Eigen::RowVectorXd& x) { return forest->score(x); }, cutoff);
  };
}

RowFitter autoencoder_fitter(const EnsembleConfig& c) {
  return [c](const Eigen::MatrixXd& rows, std::uint64_t seed) {
    const int hidden = std::min(c.ae_hidden, static_cast<int>(rows.cols()) - 1);
    auto model = std::make_shared<AutoencoderModel>(ae_train(rows, hidden, c.ae_epochs, c.ae_learning_rate, seed));
    const double threshold = model->training_error_mean + c.score_multiplier * model->training_error_std;
    return std::make_unique<ThresholdModel>(
        [model](const Eigen::RowVectorXd& x) { return model->score(x.transpose()); }, threshold);
  };
}

class KmeansRowModel final : public RowModel {
 public:
  explicit KmeansRowModel(KMeansModel model) : model_(std::move(model)) {}
  bool flag(const Eigen::RowVectorXd& x) const override { return model_.score(x) > model_.threshold; }

 private:
  KMeansModel model_;
};

RowFitter kmeans_fitter(const EnsembleConfig& c) {
  return [c](const Eigen::MatrixXd& rows, std::uint64_t seed) {
    const int n = static_cast<int>(rows.rows());
    int k = c.kmeans_k;
    if (k == 0) {
      const int k_max = std::min(c.kmeans_k_max, n - 1);
      k = k_max >= c.kmeans_k_min ? select_k_silhouette(rows, c.kmeans_k_min, k_max, seed) : 1;
    }
    return std::make_unique<KmeansRowModel>(
        kmeans_fit(rows, std::min(k, n), seed, KMeansOptions{c.kmeans_restarts, 300, c.kmeans_quantile}));
  };
}

class DbscanRowModel final : public RowModel {
 public:
  explicit DbscanRowModel(DbscanModel model) : model_(std::move(model)) {}
  bool flag(const Eigen::RowVectorXd& x) const override { return model_.is_noise(x); }

 private:
  DbscanModel model_;
};

RowFitter dbscan_fitter(const EnsembleConfig& c) {
  return [c](const Eigen::MatrixXd& rows, std::uint64_t) {
    if (rows.rows() <= c.dbscan_min_pts) throw std::invalid_argument("dbscan: fewer rows than min_pts");
    double eps = c.dbscan_eps > 0.0 ? c.dbscan_eps : estimate_eps(rows, c.dbscan_min_pts - 1);
    // Heavily duplicated rows give a zero k-distance; eps must stay positive.
    eps = std::max(eps, 1e-9);
    return std::make_unique<DbscanRowModel>(dbscan_fit(rows, DbscanParams{eps, c.dbscan_min_pts}));
  };
}

class OcsvmRowModel final : public RowModel {
 public:
  explicit OcsvmRowModel(OneClassModel model) : model_(std::move(model)) {}
  bool flag(const Eigen::RowVectorXd& x) const override { return model_.decision(x) < 0.0; }

 private:
  OneClassModel model_;
};

RowFitter ocsvm_fitter(const EnsembleConfig& c) {
  return [c](const Eigen::MatrixXd& rows, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(rows.rows());
    const auto cap = static_cast<std::size_t>(c.ocsvm_max_rows);
    Eigen::MatrixXd train = rows;
    if (n > cap) {
      // Seeded subsample, kept in time order.
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      Rng rng(seed);
      for (std::size_t i = 0; i < cap; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
      idx.resize(cap);
      std::sort(idx.begin(), idx.end());
      train.resize(static_cast<Eigen::Index>(cap), rows.cols());
      for (std::size_t i = 0; i < cap; ++i) train.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(idx[i]));
    }
    const double gamma = c.ocsvm_gamma > 0.0 ? c.ocsvm_gamma : default_rbf_gamma(train);
    return std::make_unique<OcsvmRowModel>(one_class_fit(train, KernelSpec::rbf(gamma), c.ocsvm_nu));
  };
}

struct Entry {
  const char* name;
  Category category;
  int index;  // seed stream
};

constexpr Entry kRegistry[] = {
    {"arima", Category::Predictive, 0},  {"sarima", Category::Predictive, 1},     {"stl", Category::Predictive, 2},
    {"knn", Category::Predictive, 3},    {"cart", Category::Predictive, 4},       {"krr", Category::Predictive, 5},
    {"pca", Category::Reduction, 6},     {"iforest", Category::Reduction, 7},     {"autoencoder", Category::Reduction, 8},
    {"kmeans", Category::Clustering, 9}, {"dbscan", Category::Clustering, 10},    {"ocsvm", Category::Clustering, 11},
};

const Entry& lookup(const std::string& name) {
  for (const auto& e : kRegistry)
    if (name == e.name) return e;
  throw std::invalid_argument("unknown detector '" + name + "'");
}

}  // namespace

Category detector_category(const std::string& name) { return lookup(name).category; }

std::vector<std::unique_ptr<Detector>> make_detectors(const EnsembleConfig& config) {
  config.validate();
  std::vector<std::unique_ptr<Detector>> out;
  for (const auto& name : config.detectors) {
    const auto& entry = lookup(name);
    for (const auto& existing : out)
      if (existing->id() == name || existing->id().rfind(name + ":", 0) == 0)
        throw std::invalid_argument("detector '" + name + "' listed twice");
    if (entry.category == Category::Predictive) {
      if (name == "arima") out.push_back(std::make_unique<ArimaDetector>(name, config));
      if (name == "sarima") out.push_back(std::make_unique<SarimaDetector>(name, config));
      if (name == "stl") out.push_back(std::make_unique<StlDetector>(name, config));
      if (name == "knn") out.push_back(std::make_unique<KnnDetector>(name, config));
      if (name == "cart") out.push_back(std::make_unique<CartDetector>(name, config));
      if (name == "krr") out.push_back(std::make_unique<KrrDetector>(name, config));
      continue;
    }
    RowFitter fitter;
    if (name == "pca") fitter = pca_fitter(config);
    if (name == "iforest") fitter = iforest_fitter(config);
    if (name == "autoencoder") fitter = autoencoder_fitter(config);
    if (name == "kmeans") fitter = kmeans_fitter(config);
    if (name == "dbscan") fitter = dbscan_fitter(config);
    if (name == "ocsvm") fitter = ocsvm_fitter(config);
    const auto width = static_cast<std::size_t>(name == "autoencoder" ? config.ae_window : config.window_cells());
    const auto stride = static_cast<std::size_t>(config.stride_cells());
    const auto seed = derive_seed(config.seed, static_cast<std::uint64_t>(entry.index));
    if (config.mode != ViewMode::Multivariate)
      out.push_back(std::make_unique<VectorDetector>(name + ":win", entry.category, false, width, stride, fitter,
                                                     derive_seed(seed, 0)));
    if (config.mode != ViewMode::Univariate)
      out.push_back(std::make_unique<VectorDetector>(name + ":row", entry.category, true, width, stride, fitter,
                                                     derive_seed(seed, 1)));
  }
  return out;
}

}  // namespace txsentry
