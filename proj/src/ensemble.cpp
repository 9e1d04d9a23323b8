#include "txsentry/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "txsentry/error.hpp"

namespace txsentry {

using Json = nlohmann::ordered_json;

std::vector<CellVerdict> category_vote(const std::vector<DetectorVerdict>& verdicts,
                                       std::span<const std::int64_t> timestamps,
                                       std::span<const Category> alarm_categories) {
  const std::size_t n = timestamps.size();
  for (const auto& v : verdicts) {
    if (v.flags.size() != n || (!v.scored.empty() && v.scored.size() != n))
      throw std::invalid_argument("category_vote: verdict '" + v.id + "' covers " + std::to_string(v.flags.size()) +
                                  " points, expected " + std::to_string(n));
  }
  std::vector<CellVerdict> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& cell = out[i];
    cell.ts = timestamps[i];
    for (const auto& v : verdicts) {
      if (!v.scored.empty() && !v.scored[i]) continue;
      auto& tally = cell.categories[static_cast<std::size_t>(v.category)];
      ++tally.total;
      cell.voters.push_back(v.id);
      if (v.flags[i]) {
        ++tally.flagged;
        cell.detectors.push_back(v.id);
      }
    }
    for (auto& tally : cell.categories) tally.decision = 2 * tally.flagged > tally.total;
    for (auto c : alarm_categories) cell.alarm = cell.alarm || cell.tally(c).decision;
  }
  return out;
}

std::string infer_account(const std::vector<Transaction>& transactions) {
  std::map<std::string, std::size_t> counts;
  for (const auto& tx : transactions) {
    if (!tx.from.empty()) ++counts[tx.from];
    if (!tx.to.empty() && tx.to != tx.from) ++counts[tx.to];
  }
  std::string best;
  std::size_t most = 0;
  for (const auto& [address, count] : counts)
    if (count > most) {
      most = count;
      best = address;
    }
  return best;
}

EnsembleReport run_batch(const std::vector<Transaction>& transactions, const EnsembleConfig& config,
                         const std::string& account) {
  config.validate();
  const auto frame = build_frame(transactions, config.features, config.grid_step);
  return run_batch(frame, config, account.empty() ? infer_account(transactions) : account);
}

EnsembleReport run_batch(const Frame& frame, const EnsembleConfig& config, const std::string& account) {
  auto detectors = make_detectors(config);
  const std::size_t n = frame.stored();
  if (n < 2) throw DataError("batch detection needs at least 2 grid cells");
  const auto split = static_cast<std::size_t>(
      std::clamp<double>(std::round(config.train_ratio * static_cast<double>(n)), 1.0, static_cast<double>(n - 1)));

  EnsembleReport report;
  report.account = account;
  report.features = frame.features;
  std::vector<DetectorVerdict> verdicts;
  for (auto& d : detectors) {
    DetectorVerdict v{d->id(), d->category(), std::vector<bool>(n), std::vector<bool>(n)};
    std::vector<std::size_t> flagged;
    try {
      CellRange range;
      if (d->category() == Category::Predictive) {
        d->fit(frame, frame.first, frame.first + split);
        range = d->score(frame, frame.first + split, frame.end(), flagged);
      } else {
        d->fit(frame, frame.first, frame.end());
        range = d->score(frame, frame.first, frame.end(), flagged);
      }
      for (std::size_t i = range.begin; i < range.end; ++i) v.scored[i - frame.first] = true;
      for (auto i : flagged) v.flags[i - frame.first] = true;
    } catch (const std::exception& e) {
      report.warnings.push_back(d->id() + " failed: " + e.what());
      continue;
    }
    for (const auto& w : d->warnings()) report.warnings.push_back(w);
    report.detector_ids.push_back(v.id);
    verdicts.push_back(std::move(v));
  }
  if (verdicts.empty()) {
    std::string detail;
    for (const auto& w : report.warnings) detail += "; " + w;
    throw FitError("no detector could be fitted" + detail);
  }
  for (auto c : kAllCategories) {
    const bool configured = std::any_of(config.detectors.begin(), config.detectors.end(),
                                        [c](const std::string& name) { return detector_category(name) == c; });
    const bool voting = std::any_of(verdicts.begin(), verdicts.end(), [c](const auto& v) { return v.category == c; });
    if (configured && !voting) report.warnings.push_back(std::string(category_name(c)) + " category has no voters; skipped");
  }

  std::vector<std::int64_t> ts(n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = frame.time_of(frame.first + i);
  report.cells = category_vote(verdicts, ts, config.alarm_categories);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < frame.features.size(); ++f) report.cells[i].values.push_back(frame.at(f, frame.first + i));
  return report;
}

// ---------------------------------------------------------------------------
// Stream engine
// ---------------------------------------------------------------------------

StreamEngine::StreamEngine(EnsembleConfig config, std::string account)
    : config_(std::move(config)), account_(std::move(account)) {
  detectors_ = make_detectors(config_);
  flags_.resize(detectors_.size());
  scored_.resize(detectors_.size());
}

std::int64_t StreamEngine::now() const { return frame_.time_of(frame_.end()); }

std::vector<std::string> StreamEngine::detector_ids() const {
  std::vector<std::string> ids;
  for (const auto& d : detectors_) ids.push_back(d->id());
  return ids;
}

void StreamEngine::fit_all() {
  if (frame_.stored() == 0) throw DataError("retrain: empty database");
  std::vector<char> active(detectors_.size(), 0);
  for (std::size_t k = 0; k < detectors_.size(); ++k) {
    try {
      detectors_[k]->fit(frame_, frame_.first, frame_.end());
      active[k] = 1;
      for (const auto& w : detectors_[k]->warnings()) warnings_.push_back(w);
    } catch (const std::exception& e) {
      warnings_.push_back(detectors_[k]->id() + " failed: " + e.what());
    }
  }
  if (std::find(active.begin(), active.end(), 1) == active.end()) throw FitError("no detector could be fitted");
  active_ = std::move(active);
}

void StreamEngine::bootstrap(Frame reference) {
  if (reference.stored() == 0) throw DataError("stream bootstrap: empty reference");
  if (reference.step != config_.grid_step) throw std::invalid_argument("stream bootstrap: grid step mismatch");
  frame_ = std::move(reference);
  const auto span = static_cast<std::size_t>(config_.reference_span / config_.grid_step);
  if (frame_.stored() > span) frame_.evict_before(frame_.end() - span);
  for (std::size_t k = 0; k < detectors_.size(); ++k) {
    flags_[k].assign(frame_.stored(), 0);
    scored_[k].assign(frame_.stored(), 0);
  }
  // Reference cells are history, never reported.
  emitted_.assign(frame_.stored(), 1);
  covered_.assign(detectors_.size(), frame_.end());
  pending_ = frame_.end();
  fit_all();
  last_retrain_ = now();
  ready_ = true;
}

void StreamEngine::retrain() {
  fit_all();
  last_retrain_ = now();
  ++retrain_count_;
}

CellVerdict StreamEngine::vote_cell(std::size_t index) const {
  std::vector<DetectorVerdict> verdicts;
  const std::size_t k0 = index - frame_.first;
  for (std::size_t k = 0; k < detectors_.size(); ++k)
    verdicts.push_back({detectors_[k]->id(), detectors_[k]->category(), {flags_[k][k0] != 0}, {scored_[k][k0] != 0}});
  const std::int64_t ts = frame_.time_of(index);
  auto cell = category_vote(verdicts, std::span(&ts, 1), config_.alarm_categories).front();
  for (std::size_t f = 0; f < frame_.features.size(); ++f) cell.values.push_back(frame_.at(f, index));
  return cell;
}

StreamStep StreamEngine::advance(std::int64_t start, const std::vector<std::vector<double>>& cells) {
  if (!ready_) throw std::invalid_argument("stream advance before bootstrap");
  StreamStep step;
  const std::int64_t expected = now();
  if ((start - frame_.t0) % config_.grid_step != 0) throw std::invalid_argument("stream advance: start is off the grid");
  if (start < expected)
    throw std::invalid_argument("stream advance: start " + std::to_string(start) + " overlaps data up to " +
                                std::to_string(expected));
  const std::size_t begin = frame_.end();
  if (start > expected) {
    const auto missing = static_cast<std::size_t>((start - expected) / config_.grid_step);
    for (std::size_t i = 0; i < missing; ++i) frame_.push(std::vector<double>(frame_.features.size(), 0.0));
    step.notices.push_back("gap of " + std::to_string(missing) + " cells from " + std::to_string(expected) +
                           " zero-filled");
  }
  for (const auto& c : cells) frame_.push(c);
  const std::size_t end = frame_.end();
  for (std::size_t k = 0; k < detectors_.size(); ++k) {
    flags_[k].resize(frame_.stored(), 0);
    scored_[k].resize(frame_.stored(), 0);
  }
  emitted_.resize(frame_.stored(), 0);

  // Cells are voted once every active detector has covered them; window
  // detectors can revisit earlier cells.
  std::size_t lowest = pending_;
  std::size_t ready = end;
  for (std::size_t k = 0; k < detectors_.size(); ++k) {
    if (!active_[k]) continue;
    std::vector<std::size_t> flagged;
    const CellRange range = detectors_[k]->score(frame_, begin, end, flagged);
    if (range.begin < range.end) {
      lowest = std::min(lowest, std::max(range.begin, frame_.first));
      covered_[k] = std::max(covered_[k], range.end);
    }
    ready = std::min(ready, covered_[k]);
    for (std::size_t i = std::max(range.begin, frame_.first); i < range.end; ++i) scored_[k][i - frame_.first] = 1;
    for (auto i : flagged)
      if (i >= frame_.first) flags_[k][i - frame_.first] = 1;
  }
  pending_ = std::max(pending_, ready);
  for (std::size_t i = lowest; i < ready; ++i) {
    if (emitted_[i - frame_.first]) continue;
    auto cell = vote_cell(i);
    if (!cell.alarm) continue;
    emitted_[i - frame_.first] = 1;
    step.alarms.push_back(std::move(cell));
  }

  const auto span = static_cast<std::size_t>(config_.reference_span / config_.grid_step);
  if (frame_.stored() > span) {
    const std::size_t drop = frame_.stored() - span;
    frame_.evict_before(frame_.first + drop);
    for (std::size_t k = 0; k < detectors_.size(); ++k) {
      flags_[k].erase(flags_[k].begin(), flags_[k].begin() + static_cast<std::ptrdiff_t>(drop));
      scored_[k].erase(scored_[k].begin(), scored_[k].begin() + static_cast<std::ptrdiff_t>(drop));
    }
    emitted_.erase(emitted_.begin(), emitted_.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  if (now() - last_retrain_ >= config_.retrain_interval) {
    retrain();
    step.retrained = true;
  }
  return step;
}

std::vector<DetectorVerdict> StreamEngine::verdicts() const {
  std::vector<DetectorVerdict> out;
  for (std::size_t k = 0; k < detectors_.size(); ++k) {
    DetectorVerdict v{detectors_[k]->id(), detectors_[k]->category(), {}, {}};
    for (auto f : flags_[k]) v.flags.push_back(f != 0);
    for (auto s : scored_[k]) v.scored.push_back(s != 0);
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL report
// ---------------------------------------------------------------------------

std::string format_report_line(const EnsembleReport& report, const CellVerdict& cell) {
  Json j;
  j["ts"] = cell.ts;
  j["account"] = report.account;
  Json cats = Json::object();
  for (auto c : kAllCategories) {
    const auto& t = cell.tally(c);
    cats[std::string(category_name(c))] = Json{{"flagged", t.flagged}, {"total", t.total}, {"decision", t.decision}};
  }
  j["categories"] = std::move(cats);
  j["alarm"] = cell.alarm;
  j["detectors"] = cell.detectors;
  j["voters"] = cell.voters;
  Json values = Json::object();
  for (std::size_t f = 0; f < report.features.size() && f < cell.values.size(); ++f)
    values[std::string(feature_name(report.features[f]))] = cell.values[f];
  j["values"] = std::move(values);
  return j.dump();
}

void write_report(std::ostream& out, const EnsembleReport& report) {
  for (const auto& cell : report.cells) out << format_report_line(report, cell) << '\n';
}

void write_report(const std::filesystem::path& path, const EnsembleReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_report(out, report);
  if (!out) throw DataError("write failed: " + path.string());
}

EnsembleReport parse_report(std::string_view jsonl) {
  EnsembleReport report;
  std::size_t line_no = 0;
  bool first = true;
  auto note_id = [&](const std::string& id) {
    if (std::find(report.detector_ids.begin(), report.detector_ids.end(), id) == report.detector_ids.end())
      report.detector_ids.push_back(id);
  };
  while (!jsonl.empty()) {
    ++line_no;
    const auto nl = jsonl.find('\n');
    const auto line = jsonl.substr(0, nl);
    jsonl.remove_prefix(nl == std::string_view::npos ? jsonl.size() : nl + 1);
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = Json::parse(line);
      CellVerdict cell;
      cell.ts = j.at("ts").get<std::int64_t>();
      cell.alarm = j.at("alarm").get<bool>();
      for (auto c : kAllCategories) {
        const auto& cats = j.at("categories");
        const auto name = std::string(category_name(c));
        if (!cats.contains(name)) continue;
        auto& t = cell.categories[static_cast<std::size_t>(c)];
        t.flagged = cats.at(name).at("flagged").get<int>();
        t.total = cats.at(name).at("total").get<int>();
        t.decision = cats.at(name).at("decision").get<bool>();
      }
      cell.detectors = j.at("detectors").get<std::vector<std::string>>();
      if (j.contains("voters")) cell.voters = j.at("voters").get<std::vector<std::string>>();
      if (first) {
        report.account = j.value("account", std::string());
        if (j.contains("values"))
          for (const auto& [key, value] : j.at("values").items()) report.features.push_back(parse_feature(key));
        first = false;
      }
      if (j.contains("values"))
        for (auto f : report.features) cell.values.push_back(j.at("values").at(std::string(feature_name(f))).get<double>());
      for (const auto& id : cell.voters) note_id(id);
      for (const auto& id : cell.detectors) note_id(id);
      report.cells.push_back(std::move(cell));
    } catch (const nlohmann::json::exception& e) {
      throw RowError(line_no, std::string("bad report line: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw RowError(line_no, e.what());
    }
  }
  // Registry order, window view before row view; unknown ids keep their
  // first-seen order at the end.
  const auto registry = EnsembleConfig{}.detectors;
  auto rank = [&](const std::string& id) {
    const auto base = id.substr(0, id.find(':'));
    const auto pos = static_cast<std::size_t>(std::find(registry.begin(), registry.end(), base) - registry.begin());
    return std::pair(pos, id.size() > base.size() && id.substr(base.size()) == ":row");
  };
  std::stable_sort(report.detector_ids.begin(), report.detector_ids.end(),
                   [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });
  return report;
}

EnsembleReport read_report(const std::filesystem::path& path) { return parse_report(read_text_file(path)); }

}  // namespace txsentry
