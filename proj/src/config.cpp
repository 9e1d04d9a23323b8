#include "txsentry/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "txsentry/error.hpp"

namespace txsentry {

std::string_view category_name(Category category) {
  switch (category) {
    case Category::Predictive: return "predictive";
    case Category::Reduction: return "reduction";
    case Category::Clustering: return "clustering";
  }
  return "?";
}

Category parse_category(std::string_view name) {
  for (auto c : kAllCategories)
    if (category_name(c) == name) return c;
  throw std::invalid_argument("unknown category '" + std::string(name) + "'");
}

std::string_view view_mode_name(ViewMode mode) {
  switch (mode) {
    case ViewMode::Univariate: return "univariate";
    case ViewMode::Multivariate: return "multivariate";
    case ViewMode::Both: return "both";
  }
  return "?";
}

ViewMode parse_view_mode(std::string_view name) {
  for (auto m : {ViewMode::Univariate, ViewMode::Multivariate, ViewMode::Both})
    if (view_mode_name(m) == name) return m;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    const auto item = trim(value.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T out{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw std::invalid_argument("config key '" + std::string(key) + "': bad number '" + std::string(text) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("config key '" + std::string(key) + "': expected true or false");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Key {
  const char* name;
  std::function<void(EnsembleConfig&, std::string_view)> set;
  std::function<std::string(const EnsembleConfig&)> get;
};

template <typename T>
Key number_key(const char* name, T EnsembleConfig::*field) {
  return {name, [name, field](EnsembleConfig& c, std::string_view v) { c.*field = parse_number<T>(name, v); },
          [field](const EnsembleConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_double(c.*field);
            else
              return std::to_string(c.*field);
          }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"features",
       [](EnsembleConfig& c, std::string_view v) {
         c.features.clear();
         for (const auto& f : split_list(v)) c.features.push_back(parse_feature(f));
       },
       [](const EnsembleConfig& c) {
         std::vector<std::string> names;
         for (auto f : c.features) names.emplace_back(feature_name(f));
         return join(names);
       }},
      {"mode", [](EnsembleConfig& c, std::string_view v) { c.mode = parse_view_mode(v); },
       [](const EnsembleConfig& c) { return std::string(view_mode_name(c.mode)); }},
      number_key("grid_step", &EnsembleConfig::grid_step),
      number_key("window", &EnsembleConfig::window),
      number_key("window_stride", &EnsembleConfig::window_stride),
      number_key("seed", &EnsembleConfig::seed),
      {"detectors", [](EnsembleConfig& c, std::string_view v) { c.detectors = split_list(v); },
       [](const EnsembleConfig& c) { return join(c.detectors); }},
      {"alarm_categories",
       [](EnsembleConfig& c, std::string_view v) {
         c.alarm_categories.clear();
         for (const auto& s : split_list(v)) c.alarm_categories.push_back(parse_category(s));
       },
       [](const EnsembleConfig& c) {
         std::vector<std::string> names;
         for (auto k : c.alarm_categories) names.emplace_back(category_name(k));
         return join(names);
       }},
      number_key("train_ratio", &EnsembleConfig::train_ratio),
      number_key("retrain_interval", &EnsembleConfig::retrain_interval),
      number_key("reference_span", &EnsembleConfig::reference_span),
      number_key("residual_multiplier", &EnsembleConfig::residual_multiplier),
      {"clean_flagged", [](EnsembleConfig& c, std::string_view v) { c.clean_flagged = parse_bool("clean_flagged", v); },
       [](const EnsembleConfig& c) { return std::string(c.clean_flagged ? "true" : "false"); }},
      number_key("max_order", &EnsembleConfig::max_order),
      number_key("cv_folds", &EnsembleConfig::cv_folds),
      {"order_selection",
       [](EnsembleConfig& c, std::string_view v) {
         if (v == "cv")
           c.order_selection = OrderSelection::CrossValidation;
         else if (v == "aic")
           c.order_selection = OrderSelection::Aic;
         else
           throw std::invalid_argument("config key 'order_selection': expected cv or aic");
       },
       [](const EnsembleConfig& c) {
         return std::string(c.order_selection == OrderSelection::Aic ? "aic" : "cv");
       }},
      number_key("seasonal_max_order", &EnsembleConfig::seasonal_max_order),
      number_key("season_period", &EnsembleConfig::season_period),
      number_key("season_fallback", &EnsembleConfig::season_fallback),
      number_key("lags", &EnsembleConfig::lags),
      number_key("knn_k", &EnsembleConfig::knn_k),
      number_key("cart_depth", &EnsembleConfig::cart_depth),
      number_key("cart_min_leaf", &EnsembleConfig::cart_min_leaf),
      number_key("krr_lambda", &EnsembleConfig::krr_lambda),
      number_key("krr_max_pairs", &EnsembleConfig::krr_max_pairs),
      number_key("krr_gamma", &EnsembleConfig::krr_gamma),
      number_key("pca_explained", &EnsembleConfig::pca_explained),
      number_key("score_multiplier", &EnsembleConfig::score_multiplier),
      number_key("iforest_trees", &EnsembleConfig::iforest_trees),
      number_key("iforest_subsample", &EnsembleConfig::iforest_subsample),
      number_key("iforest_cutoff", &EnsembleConfig::iforest_cutoff),
      number_key("ae_window", &EnsembleConfig::ae_window),
      number_key("ae_hidden", &EnsembleConfig::ae_hidden),
      number_key("ae_epochs", &EnsembleConfig::ae_epochs),
      number_key("ae_learning_rate", &EnsembleConfig::ae_learning_rate),
      number_key("kmeans_k", &EnsembleConfig::kmeans_k),
      number_key("kmeans_k_min", &EnsembleConfig::kmeans_k_min),
      number_key("kmeans_k_max", &EnsembleConfig::kmeans_k_max),
      number_key("kmeans_restarts", &EnsembleConfig::kmeans_restarts),
      number_key("kmeans_quantile", &EnsembleConfig::kmeans_quantile),
      number_key("dbscan_min_pts", &EnsembleConfig::dbscan_min_pts),
      number_key("dbscan_eps", &EnsembleConfig::dbscan_eps),
      number_key("ocsvm_nu", &EnsembleConfig::ocsvm_nu),
      number_key("ocsvm_gamma", &EnsembleConfig::ocsvm_gamma),
      number_key("ocsvm_max_rows", &EnsembleConfig::ocsvm_max_rows),
      number_key("match_tolerance", &EnsembleConfig::match_tolerance),
  };
  return table;
}

void require(bool ok, const char* key, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string("config key '") + key + "': " + what);
}

}  // namespace

void EnsembleConfig::validate() const {
  require(!features.empty(), "features", "at least one feature required");
  require(!detectors.empty(), "detectors", "at least one detector required");
  static const std::vector<std::string> known = EnsembleConfig{}.detectors;
  for (const auto& name : detectors)
    require(std::find(known.begin(), known.end(), name) != known.end(), "detectors", "unknown detector '" + name + "'");
  require(!alarm_categories.empty(), "alarm_categories", "at least one category required");
  require(grid_step > 0, "grid_step", "must be positive");
  require(window >= grid_step && window % grid_step == 0, "window", "must be a positive multiple of grid_step");
  require(window_stride >= grid_step && window_stride % grid_step == 0, "window_stride",
          "must be a positive multiple of grid_step");
  require(train_ratio > 0.0 && train_ratio < 1.0, "train_ratio", "must be in (0, 1)");
  require(retrain_interval > 0 && retrain_interval % grid_step == 0, "retrain_interval",
          "must be a positive multiple of grid_step");
  require(reference_span >= window && reference_span % grid_step == 0, "reference_span",
          "must be a multiple of grid_step covering at least one window");
  require(residual_multiplier > 0.0, "residual_multiplier", "must be positive");
  require(max_order >= 1, "max_order", "must be >= 1");
  require(cv_folds >= 1, "cv_folds", "must be >= 1");
  require(seasonal_max_order >= 1, "seasonal_max_order", "must be >= 1");
  require(season_period >= 0 && season_period != 1, "season_period", "must be 0 (estimate) or >= 2");
  require(season_fallback >= 2, "season_fallback", "must be >= 2");
  require(lags >= 1, "lags", "must be >= 1");
  require(knn_k >= 1, "knn_k", "must be >= 1");
  require(cart_depth >= 0, "cart_depth", "must be >= 0");
  require(cart_min_leaf >= 1, "cart_min_leaf", "must be >= 1");
  require(krr_lambda > 0.0, "krr_lambda", "must be positive");
  require(krr_max_pairs >= 2, "krr_max_pairs", "must be >= 2");
  require(krr_gamma >= 0.0, "krr_gamma", "must be >= 0");
  require(pca_explained > 0.0 && pca_explained <= 1.0, "pca_explained", "must be in (0, 1]");
  require(score_multiplier >= 0.0, "score_multiplier", "must be >= 0");
  require(iforest_trees >= 1, "iforest_trees", "must be >= 1");
  require(iforest_subsample >= 2, "iforest_subsample", "must be >= 2");
  require(iforest_cutoff > 0.0 && iforest_cutoff < 1.0, "iforest_cutoff", "must be in (0, 1)");
  require(ae_window >= 2, "ae_window", "must be >= 2");
  require(ae_hidden >= 1 && ae_hidden < ae_window, "ae_hidden", "must be in [1, ae_window)");
  require(ae_epochs >= 1, "ae_epochs", "must be >= 1");
  require(ae_learning_rate > 0.0, "ae_learning_rate", "must be positive");
  require(kmeans_k >= 0, "kmeans_k", "must be >= 0");
  require(kmeans_k_min >= 2 && kmeans_k_max >= kmeans_k_min, "kmeans_k_max", "need 2 <= kmeans_k_min <= kmeans_k_max");
  require(kmeans_restarts >= 1, "kmeans_restarts", "must be >= 1");
  require(kmeans_quantile > 0.0 && kmeans_quantile <= 1.0, "kmeans_quantile", "must be in (0, 1]");
  require(dbscan_min_pts >= 2, "dbscan_min_pts", "must be >= 2");
  require(dbscan_eps >= 0.0, "dbscan_eps", "must be >= 0");
  require(ocsvm_nu > 0.0 && ocsvm_nu <= 1.0, "ocsvm_nu", "must be in (0, 1]");
  require(ocsvm_gamma >= 0.0, "ocsvm_gamma", "must be >= 0");
  require(ocsvm_max_rows >= 2, "ocsvm_max_rows", "must be >= 2");
  require(match_tolerance >= 0, "match_tolerance", "must be >= 0");
}

void apply_setting(EnsembleConfig& config, std::string_view key, std::string_view value) {
  for (const auto& k : keys())
    if (key == k.name) {
      k.set(config, trim(value));
      return;
    }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const auto line = trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw RowError(line_no, "expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw RowError(line_no, "empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

EnsembleConfig parse_config(std::string_view text) {
  EnsembleConfig config;
  for (const auto& [key, value] : parse_key_values(text)) apply_setting(config, key, value);
  config.validate();
  return config;
}

EnsembleConfig load_config(const std::filesystem::path& path) { return parse_config(read_text_file(path)); }

std::string format_config(const EnsembleConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

}  // namespace txsentry
