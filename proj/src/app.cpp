#include "txsentry/app.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "txsentry/error.hpp"
#include "txsentry/rng.hpp"

namespace txsentry {

std::string_view injection_name(InjectionKind kind) {
  switch (kind) {
    case InjectionKind::Spike: return "spike";
    case InjectionKind::Burst: return "burst";
    case InjectionKind::TrendBreak: return "trend_break";
    case InjectionKind::GasDecouple: return "gas_decouple";
  }
  return "?";
}

InjectionKind parse_injection(std::string_view name) {
  for (auto k : {InjectionKind::Spike, InjectionKind::Burst, InjectionKind::TrendBreak, InjectionKind::GasDecouple})
    if (injection_name(k) == name) return k;
  throw std::invalid_argument("unknown injection kind '" + std::string(name) + "'");
}

void SynthConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("synth config: ") + what);
  };
  require(duration > 0, "duration must be positive");
  require(base_rate > 0.0, "base_rate must be positive");
  require(value_sigma >= 0.0, "value_sigma must be >= 0");
  require(gas_price_level > 0.0 && gas_limit_level > 0.0, "gas levels must be positive");
  require(gas_price_noise >= 0.0 && gas_limit_noise >= 0.0, "gas noise must be >= 0");
  require(gas_correlation >= -1.0 && gas_correlation <= 1.0, "gas_correlation must be in [-1, 1]");
  for (const auto& inj : injections) {
    require(inj.at >= 0 && inj.at < duration, "injection time outside the duration");
    require(inj.magnitude > 0.0, "injection magnitude must be positive");
  }
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
T parse_number(std::string_view what, std::string_view text) {
  T out{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw std::invalid_argument(std::string(what) + ": bad number '" + std::string(text) + "'");
  return out;
}

std::string hex_word(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

struct Draft {
  std::int64_t ts = 0;
  double value = 0.0;      // ether
  double gas_price = 0.0;  // gwei
  double gas_limit = 0.0;
  std::uint64_t key = 0;  // hash source
  bool outgoing = true;
  std::size_t counterparty = 0;
};

class Drawer {
 public:
  Drawer(const SynthConfig& c, std::uint64_t seed) : c_(c), rng_(seed) {}

  Draft draw(std::int64_t ts, std::uint64_t key) {
    Draft d;
    d.ts = ts;
    d.key = key;
    d.value = std::exp(c_.value_mu + c_.value_sigma * standard_normal(rng_));
    const double z1 = standard_normal(rng_);
    const double z2 = standard_normal(rng_);
    const double rho = c_.gas_correlation;
    d.gas_price = c_.gas_price_level + c_.gas_price_noise * z1;
    d.gas_limit = c_.gas_limit_level + c_.gas_limit_noise * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
    d.outgoing = uniform01(rng_) < 0.5;
    d.counterparty = uniform_index(rng_, 16);
    return d;
  }

  Rng& rng() { return rng_; }

 private:
  const SynthConfig& c_;
  Rng rng_;
};

Transaction finalize(const Draft& d, const SynthConfig& c, const std::vector<std::string>& peers) {
  Transaction tx;
  tx.timestamp = d.ts;
  const std::uint64_t h = derive_seed(c.seed ^ 0x6a09e667f3bcc908ULL, d.key);
  tx.hash = "0x" + hex_word(h) + hex_word(derive_seed(h, 1)) + hex_word(derive_seed(h, 2)) + hex_word(derive_seed(h, 3));
  tx.from = d.outgoing ? c.account : peers[d.counterparty];
  tx.to = d.outgoing ? peers[d.counterparty] : c.account;
  // Values are drawn in ether and gwei; stored amounts keep gwei precision.
  const auto gwei = static_cast<Wei::Rep>(std::llround(std::max(0.0, d.value) * 1e9));
  tx.value = Wei(gwei * static_cast<Wei::Rep>(1000000000));
  tx.gas_price = Wei(static_cast<Wei::Rep>(std::llround(std::max(0.1, d.gas_price) * 1e9)));
  tx.gas_limit = static_cast<std::uint64_t>(std::max(21000.0, std::round(d.gas_limit)));
  return tx;
}

}  // namespace

SynthOutput synth_generate(const SynthConfig& config) {
  config.validate();
  std::vector<std::string> peers;
  for (std::uint64_t i = 0; i < 16; ++i)
    peers.push_back("0x" + hex_word(derive_seed(config.seed, 1000 + i)) + hex_word(derive_seed(config.seed, 2000 + i)).substr(0, 8) +
                    hex_word(derive_seed(config.seed, 3000 + i)).substr(0, 16));

  std::vector<Draft> drafts;
  Drawer base(config, derive_seed(config.seed, 0));
  const double rate_per_second = config.base_rate / 60.0;
  double t = 0.0;
  for (std::uint64_t key = 0;; ++key) {
    t += -std::log(1.0 - uniform01(base.rng())) / rate_per_second;
    if (t >= static_cast<double>(config.duration)) break;
    drafts.push_back(base.draw(config.start + static_cast<std::int64_t>(t), key));
  }

  SynthOutput out;
  // Insertions first, so the scaling injections also act on inserted rows.
  for (std::size_t k = 0; k < config.injections.size(); ++k) {
    const auto& inj = config.injections[k];
    const std::int64_t at = config.start + inj.at;
    Drawer extra(config, derive_seed(config.seed, 100 + k));
    const std::uint64_t key0 = (std::uint64_t{1} << 40) + k * 1000000;
    if (inj.kind == InjectionKind::Spike) {
      auto d = extra.draw(at, key0);
      d.value *= inj.magnitude;
      drafts.push_back(d);
    } else if (inj.kind == InjectionKind::Burst) {
      const auto count = std::max<std::int64_t>(1, std::llround(inj.magnitude * config.base_rate));
      for (std::int64_t j = 0; j < count; ++j) {
        const auto offset = static_cast<std::int64_t>(uniform01(extra.rng()) * 60.0);
        drafts.push_back(extra.draw(at + offset, key0 + static_cast<std::uint64_t>(j)));
      }
    } else if (inj.kind == InjectionKind::GasDecouple) {
      const bool any = std::any_of(drafts.begin(), drafts.end(), [&](const Draft& d) { return d.ts >= at && d.ts < at + 60; });
      if (!any) drafts.push_back(extra.draw(at, key0));
    }
    out.labels.push_back({at, inj.kind, inj.magnitude});
  }
  for (const auto& inj : config.injections) {
    const std::int64_t at = config.start + inj.at;
    if (inj.kind == InjectionKind::TrendBreak) {
      for (auto& d : drafts)
        if (d.ts >= at) d.value *= inj.magnitude;
    } else if (inj.kind == InjectionKind::GasDecouple) {
      for (auto& d : drafts)
        if (d.ts >= at && d.ts < at + 60) d.gas_price *= inj.magnitude;
    }
  }

  out.transactions.reserve(drafts.size());
  for (const auto& d : drafts) out.transactions.push_back(finalize(d, config, peers));
  sort_transactions(out.transactions);
  std::stable_sort(out.labels.begin(), out.labels.end(), [](const Label& a, const Label& b) { return a.ts < b.ts; });
  return out;
}

SynthConfig parse_synth_config(std::string_view text) {
  SynthConfig c;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "start") c.start = parse_number<std::int64_t>(key, value);
    else if (key == "duration") c.duration = parse_number<std::int64_t>(key, value);
    else if (key == "base_rate") c.base_rate = parse_number<double>(key, value);
    else if (key == "value_mu") c.value_mu = parse_number<double>(key, value);
    else if (key == "value_sigma") c.value_sigma = parse_number<double>(key, value);
    else if (key == "gas_price_level") c.gas_price_level = parse_number<double>(key, value);
    else if (key == "gas_price_noise") c.gas_price_noise = parse_number<double>(key, value);
    else if (key == "gas_limit_level") c.gas_limit_level = parse_number<double>(key, value);
    else if (key == "gas_limit_noise") c.gas_limit_noise = parse_number<double>(key, value);
    else if (key == "gas_correlation") c.gas_correlation = parse_number<double>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "account") c.account = value;
    else if (key == "inject") {
      // kind@offset:magnitude
      const auto at = value.find('@');
      const auto colon = value.find(':', at == std::string::npos ? 0 : at);
      if (at == std::string::npos || colon == std::string::npos)
        throw std::invalid_argument("inject: expected kind@offset:magnitude, got '" + value + "'");
      Injection inj;
      inj.kind = parse_injection(std::string_view(value).substr(0, at));
      inj.at = parse_number<std::int64_t>("inject offset", std::string_view(value).substr(at + 1, colon - at - 1));
      inj.magnitude = parse_number<double>("inject magnitude", std::string_view(value).substr(colon + 1));
      c.injections.push_back(inj);
    } else {
      throw std::invalid_argument("unknown synth config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path) { return parse_synth_config(read_text_file(path)); }

std::string format_labels(const std::vector<Label>& labels) {
  std::string out = "timestamp,kind,magnitude\n";
  for (const auto& l : labels)
    out += std::to_string(l.ts) + "," + std::string(injection_name(l.kind)) + "," + format_double(l.magnitude) + "\n";
  return out;
}

void write_labels(const std::vector<Label>& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_labels(labels);
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<Label> parse_labels(std::string_view text) {
  std::vector<Label> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "timestamp,kind,magnitude") throw SchemaError("labels: expected header timestamp,kind,magnitude");
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos) throw RowError(line_no, "expected 3 fields");
    try {
      out.push_back({parse_number<std::int64_t>("timestamp", line.substr(0, c1)),
                     parse_injection(line.substr(c1 + 1, c2 - c1 - 1)),
                     parse_number<double>("magnitude", line.substr(c2 + 1))});
    } catch (const std::invalid_argument& e) {
      throw RowError(line_no, e.what());
    }
  }
  if (line_no == 0) throw SchemaError("labels: empty file");
  return out;
}

std::vector<Label> read_labels(const std::filesystem::path& path) { return parse_labels(read_text_file(path)); }

StreamReplay replay_stream(const Frame& frame, const EnsembleConfig& config, std::int64_t bootstrap_span,
                           const std::string& account) {
  config.validate();
  if (frame.step != config.grid_step) throw std::invalid_argument("replay: frame step differs from grid_step");
  if (bootstrap_span <= 0 || bootstrap_span % frame.step != 0)
    throw std::invalid_argument("replay: bootstrap span must be a positive multiple of the grid step");
  const auto boot = static_cast<std::size_t>(bootstrap_span / frame.step);
  if (frame.stored() <= boot)
    throw DataError("replay: input covers " + std::to_string(frame.stored()) + " cells, bootstrap needs more than " +
                    std::to_string(boot));

  Frame reference = frame;
  for (auto& column : reference.cells) column.assign(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(boot));

  StreamReplay out;
  StreamEngine engine(config, account);
  engine.bootstrap(std::move(reference));
  out.report.account = account;
  out.report.features = frame.features;
  out.report.detector_ids = engine.detector_ids();

  const std::size_t chunk = config.window_cells();
  std::vector<std::int64_t> alarmed;
  for (std::size_t i = frame.first + boot; i < frame.end(); i += chunk) {
    const std::size_t stop = std::min(frame.end(), i + chunk);
    std::vector<std::vector<double>> cells;
    for (std::size_t j = i; j < stop; ++j) {
      std::vector<double> row;
      for (std::size_t f = 0; f < frame.features.size(); ++f) row.push_back(frame.at(f, j));
      cells.push_back(std::move(row));
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto step = engine.advance(frame.time_of(i), cells);
    const std::chrono::duration<double> spent = std::chrono::steady_clock::now() - t0;
    if (!step.retrained) out.max_advance_seconds = std::max(out.max_advance_seconds, spent.count());
    for (auto& n : step.notices) out.notices.push_back(std::move(n));
    for (auto& cell : step.alarms) {
      alarmed.push_back(cell.ts);
      out.report.cells.push_back(std::move(cell));
    }
  }
  std::sort(alarmed.begin(), alarmed.end());
  for (std::size_t i = frame.first + boot; i < frame.end(); ++i) {
    CellVerdict cell;
    cell.ts = frame.time_of(i);
    cell.alarm = std::binary_search(alarmed.begin(), alarmed.end(), cell.ts);
    out.monitored.push_back(std::move(cell));
  }
  out.retrains = engine.retrain_count();
  out.report.warnings = engine.warnings();
  return out;
}

std::vector<AlarmEvent> alarm_events(const std::vector<CellVerdict>& cells, std::int64_t step, std::int64_t max_gap) {
  std::vector<std::int64_t> alarmed;
  for (const auto& c : cells)
    if (c.alarm) alarmed.push_back(c.ts);
  std::sort(alarmed.begin(), alarmed.end());
  alarmed.erase(std::unique(alarmed.begin(), alarmed.end()), alarmed.end());
  std::vector<AlarmEvent> events;
  for (auto ts : alarmed) {
    if (!events.empty() && ts - events.back().end <= step + max_gap)
      events.back().end = ts;
    else
      events.push_back({ts, ts});
  }
  return events;
}

EvalMetrics evaluate(const std::vector<CellVerdict>& cells, const std::vector<Label>& labels, std::int64_t tolerance,
                     std::int64_t step) {
  if (tolerance < 0) throw std::invalid_argument("evaluate: tolerance must be >= 0");
  if (step <= 0) throw std::invalid_argument("evaluate: step must be positive");
  EvalMetrics m;
  m.match_tolerance = tolerance;
  m.cells = cells.size();

  std::vector<std::int64_t> times;
  for (const auto& l : labels) times.push_back(l.ts);
  std::sort(times.begin(), times.end());

  const auto events = alarm_events(cells, step, tolerance);
  std::size_t next = 0;
  for (const auto& e : events) {
    while (next < times.size() && times[next] < e.start - tolerance) ++next;
    if (next < times.size() && times[next] <= e.end + tolerance) {
      ++m.true_positives;
      ++next;
    } else {
      ++m.false_positives;
    }
  }
  m.false_negatives = times.size() - m.true_positives;
  const double tp = static_cast<double>(m.true_positives);
  if (m.true_positives + m.false_positives > 0) m.precision = tp / static_cast<double>(m.true_positives + m.false_positives);
  if (m.true_positives + m.false_negatives > 0) m.recall = tp / static_cast<double>(m.true_positives + m.false_negatives);

  std::size_t correct = 0;
  for (const auto& c : cells) {
    // Distance from the label to the cell's span [ts, ts + step).
    const auto it = std::lower_bound(times.begin(), times.end(), c.ts - tolerance);
    const bool truth = it != times.end() && *it < c.ts + step + tolerance;
    correct += truth == c.alarm;
  }
  if (!cells.empty()) m.accuracy = static_cast<double>(correct) / static_cast<double>(cells.size());
  return m;
}

std::string format_metrics(const EvalMetrics& m) {
  return "{\"true_positives\":" + std::to_string(m.true_positives) +
         ",\"false_positives\":" + std::to_string(m.false_positives) +
         ",\"false_negatives\":" + std::to_string(m.false_negatives) + ",\"precision\":" + format_double(m.precision) +
         ",\"recall\":" + format_double(m.recall) + ",\"accuracy\":" + format_double(m.accuracy) +
         ",\"match_tolerance\":" + std::to_string(m.match_tolerance) + ",\"cells\":" + std::to_string(m.cells) + "}";
}

std::string format_plot_csv(const EnsembleReport& report, std::size_t feature) {
  std::string out = "timestamp,value";
  for (const auto& id : report.detector_ids) out += "," + id;
  for (auto c : kAllCategories) out += "," + std::string(category_name(c));
  out += ",alarm\n";
  for (const auto& cell : report.cells) {
    if (feature >= cell.values.size())
      throw DataError("report cell " + std::to_string(cell.ts) + " has no value for feature " +
                      std::string(feature_name(report.features[feature])));
    out += std::to_string(cell.ts) + "," + format_double(cell.values[feature]);
    for (const auto& id : report.detector_ids)
      out += std::find(cell.detectors.begin(), cell.detectors.end(), id) != cell.detectors.end() ? ",1" : ",0";
    for (auto c : kAllCategories) out += cell.tally(c).decision ? ",1" : ",0";
    out += cell.alarm ? ",1\n" : ",0\n";
  }
  return out;
}

std::vector<std::filesystem::path> emit_plot_data(const EnsembleReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (std::size_t f = 0; f < report.features.size(); ++f) {
    const auto path = dir / (std::string(feature_name(report.features[f])) + ".csv");
    const auto text = format_plot_csv(report, f);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace txsentry
