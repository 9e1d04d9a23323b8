#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "txsentry/app.hpp"
#include "txsentry/ensemble.hpp"
#include "txsentry/error.hpp"

namespace txsentry {
namespace {

constexpr std::int64_t kDay = 86400;

DetectorVerdict verdict(std::string id, Category c, std::vector<bool> flags) {
  return {std::move(id), c, std::move(flags), {}};
}

TEST(CategoryVote, Examples) {
  const std::vector<std::int64_t> ts = {0};
  auto cells = category_vote({verdict("a", Category::Predictive, {true}), verdict("b", Category::Predictive, {true}),
                              verdict("c", Category::Predictive, {false})},
                             ts);
  EXPECT_EQ(cells[0].tally(Category::Predictive), (CategoryTally{2, 3, true}));
  EXPECT_TRUE(cells[0].alarm);

  // A tie is not a majority.
  cells = category_vote({verdict("a", Category::Clustering, {true}), verdict("b", Category::Clustering, {false})}, ts);
  EXPECT_EQ(cells[0].tally(Category::Clustering), (CategoryTally{1, 2, false}));
  EXPECT_FALSE(cells[0].alarm);

  // One category is enough for the alarm.
  cells = category_vote({verdict("p", Category::Predictive, {false}), verdict("r", Category::Reduction, {true}),
                         verdict("k", Category::Clustering, {false})},
                        ts);
  EXPECT_TRUE(cells[0].alarm);
  EXPECT_TRUE(cells[0].tally(Category::Reduction).decision);
  EXPECT_EQ(cells[0].detectors, std::vector<std::string>{"r"});
  EXPECT_EQ(cells[0].voters, (std::vector<std::string>{"p", "r", "k"}));
}

TEST(CategoryVote, UnscoredCellsDoNotVote) {
  const std::vector<std::int64_t> ts = {0, 60};
  DetectorVerdict late{"late", Category::Reduction, {true, true}, {false, true}};
  const auto cells = category_vote({late, verdict("x", Category::Reduction, {false, false})}, ts);
  EXPECT_EQ(cells[0].tally(Category::Reduction), (CategoryTally{0, 1, false}));
  EXPECT_EQ(cells[1].tally(Category::Reduction), (CategoryTally{1, 2, false}));
}

TEST(CategoryVote, AlarmCategoriesRestrictTheOr) {
  const std::vector<std::int64_t> ts = {0};
  const std::vector<Category> only = {Category::Predictive};
  const auto cells = category_vote({verdict("r", Category::Reduction, {true})}, ts, only);
  EXPECT_TRUE(cells[0].tally(Category::Reduction).decision);
  EXPECT_FALSE(cells[0].alarm);
}

TEST(CategoryVote, LengthMismatchThrows) {
  const std::vector<std::int64_t> ts = {0, 60};
  EXPECT_THROW(category_vote({verdict("a", Category::Predictive, {true})}, ts), std::invalid_argument);
}

std::vector<DetectorVerdict> random_verdicts(std::mt19937_64& rng, std::size_t n) {
  std::vector<DetectorVerdict> out;
  const int count = static_cast<int>(rng() % 9) + 1;
  for (int k = 0; k < count; ++k) {
    DetectorVerdict v{"d" + std::to_string(k), kAllCategories[rng() % 3], std::vector<bool>(n), {}};
    for (std::size_t i = 0; i < n; ++i) v.flags[i] = rng() % 2;
    out.push_back(std::move(v));
  }
  return out;
}

TEST(CategoryVote, AddingAFlagNeverClearsADecision) {
  std::mt19937_64 rng(5);
  const std::vector<std::int64_t> ts(20, 0);
  for (int trial = 0; trial < 200; ++trial) {
    auto verdicts = random_verdicts(rng, ts.size());
    const auto before = category_vote(verdicts, ts);
    const Category c = kAllCategories[rng() % 3];
    verdicts.push_back({"extra", c, std::vector<bool>(ts.size(), true), {}});
    const auto after = category_vote(verdicts, ts);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (before[i].tally(c).decision) EXPECT_TRUE(after[i].tally(c).decision);
      if (before[i].alarm) EXPECT_TRUE(after[i].alarm);
    }
  }
}

TEST(CategoryVote, RemovingACategoryLeavesOthersUnchanged) {
  std::mt19937_64 rng(6);
  const std::vector<std::int64_t> ts(20, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto verdicts = random_verdicts(rng, ts.size());
    const Category gone = kAllCategories[rng() % 3];
    std::vector<DetectorVerdict> kept;
    for (const auto& v : verdicts)
      if (v.category != gone) kept.push_back(v);
    const auto full = category_vote(verdicts, ts);
    const auto reduced = category_vote(kept, ts);
    for (std::size_t i = 0; i < ts.size(); ++i)
      for (auto c : kAllCategories)
        if (c != gone) EXPECT_EQ(full[i].tally(c), reduced[i].tally(c));
  }
}

TEST(InferAccount, MostFrequentAddressWithSmallestTieBreak) {
  std::vector<Transaction> txs(3);
  txs[0].from = "0xb";
  txs[0].to = "0xa";
  txs[1].from = "0xa";
  txs[1].to = "0xc";
  txs[2].from = "0xc";
  txs[2].to = "0xb";
  EXPECT_EQ(infer_account(txs), "0xa");
  txs[2].to = "0xa";
  EXPECT_EQ(infer_account(txs), "0xa");
}

// ---------------------------------------------------------------------------
// Batch
// ---------------------------------------------------------------------------

SynthConfig baseline(std::int64_t duration, double rate, std::uint64_t seed) {
  SynthConfig s;
  s.duration = duration;
  s.base_rate = rate;
  s.seed = seed;
  return s;
}

EnsembleConfig light_config() {
  EnsembleConfig c;
  c.detectors = {"arima", "stl", "knn", "pca", "iforest", "autoencoder", "kmeans", "dbscan", "ocsvm"};
  c.ae_epochs = 100;
  c.kmeans_k = 3;
  return c;
}

TEST(RunBatch, CleanBaselineAlarmRateBelowFivePercent) {
  const auto data = synth_generate(baseline(kDay, 5.0, 11));
  const auto report = run_batch(data.transactions, EnsembleConfig{});
  std::size_t alarms = 0;
  for (const auto& c : report.cells) alarms += c.alarm;
  EXPECT_LT(static_cast<double>(alarms), 0.05 * static_cast<double>(report.cells.size()));
  EXPECT_EQ(report.account, SynthConfig{}.account);
  EXPECT_EQ(report.detector_ids.size(), 18u);
}

TEST(RunBatch, ValueSpikeFlaggedByPredictiveMajority) {
  auto s = baseline(kDay, 1.0, 12);
  s.injections.push_back({InjectionKind::Spike, 80000, 10.0});
  const auto data = synth_generate(s);
  const auto report = run_batch(data.transactions, light_config());
  const std::int64_t at = data.labels.front().ts;
  const auto cell = std::find_if(report.cells.begin(), report.cells.end(),
                                 [&](const CellVerdict& c) { return c.ts <= at && at < c.ts + 60; });
  ASSERT_NE(cell, report.cells.end());
  EXPECT_TRUE(cell->tally(Category::Predictive).decision);
  EXPECT_TRUE(cell->alarm);
}

TEST(RunBatch, PredictiveDetectorsScoreOnlyTheTestSplit) {
  const auto data = synth_generate(baseline(kDay / 4, 2.0, 13));
  auto c = light_config();
  const auto report = run_batch(data.transactions, c);
  const auto n = report.cells.size();
  const auto split = static_cast<std::size_t>(std::round(0.7 * static_cast<double>(n)));
  EXPECT_EQ(report.cells[split - 1].tally(Category::Predictive).total, 0);
  EXPECT_EQ(report.cells[split].tally(Category::Predictive).total, 3);
}

TEST(RunBatch, Deterministic) {
  const auto data = synth_generate(baseline(kDay / 4, 2.0, 14));
  const auto a = run_batch(data.transactions, light_config());
  const auto b = run_batch(data.transactions, light_config());
  EXPECT_EQ(a.cells, b.cells);
  EXPECT_EQ(a.detector_ids, b.detector_ids);
}

TEST(RunBatch, ZeroDetectorsIsAnError) {
  const auto data = synth_generate(baseline(kDay / 8, 2.0, 15));
  EnsembleConfig c;
  c.detectors.clear();
  EXPECT_THROW(run_batch(data.transactions, c), std::invalid_argument);
}

TEST(RunBatch, FailingDetectorsBecomeWarnings) {
  // Ten cells: too short for the autoencoder window, fine for rows.
  Frame frame;
  frame.features = {FeatureKind::PaymentAmount};
  frame.cells = {{1, 2, 1, 3, 2, 1, 2, 3, 1, 2}};
  EnsembleConfig c;
  c.detectors = {"autoencoder", "kmeans"};
  c.kmeans_k = 2;
  c.mode = ViewMode::Univariate;
  const auto report = run_batch(frame, c);
  EXPECT_EQ(report.detector_ids, std::vector<std::string>{"kmeans:win"});
  ASSERT_FALSE(report.warnings.empty());
  EXPECT_NE(report.warnings.front().find("autoencoder:win failed"), std::string::npos);
  bool skipped = false;
  for (const auto& w : report.warnings) skipped = skipped || w.find("reduction category has no voters") != std::string::npos;
  EXPECT_TRUE(skipped);

  c.detectors = {"autoencoder"};
  EXPECT_THROW(run_batch(frame, c), FitError);
}

// ---------------------------------------------------------------------------
// Report IO
// ---------------------------------------------------------------------------

TEST(Report, RoundTrip) {
  const auto data = synth_generate(baseline(kDay / 8, 2.0, 16));
  const auto report = run_batch(data.transactions, light_config());
  std::ostringstream out;
  write_report(out, report);
  const auto parsed = parse_report(out.str());
  EXPECT_EQ(parsed.account, report.account);
  EXPECT_EQ(parsed.features, report.features);
  ASSERT_EQ(parsed.cells.size(), report.cells.size());
  for (std::size_t i = 0; i < report.cells.size(); ++i) EXPECT_EQ(parsed.cells[i], report.cells[i]) << i;
  EXPECT_EQ(parsed.detector_ids, report.detector_ids);
}

TEST(Report, LineSchema) {
  EnsembleReport report;
  report.account = "0xabc";
  report.features = {FeatureKind::GasPrice};
  CellVerdict cell;
  cell.ts = 120;
  cell.categories[0] = {1, 1, true};
  cell.alarm = true;
  cell.detectors = {"arima"};
  cell.voters = {"arima"};
  cell.values = {2.5};
  EXPECT_EQ(format_report_line(report, cell),
            "{\"ts\":120,\"account\":\"0xabc\",\"categories\":{\"predictive\":{\"flagged\":1,\"total\":1,\"decision\":"
            "true},\"reduction\":{\"flagged\":0,\"total\":0,\"decision\":false},\"clustering\":{\"flagged\":0,"
            "\"total\":0,\"decision\":false}},\"alarm\":true,\"detectors\":[\"arima\"],\"voters\":[\"arima\"],"
            "\"values\":{\"gasprice\":2.5}}");
}

TEST(Report, BadLineCarriesLineNumber) {
  try {
    parse_report("\n{\"ts\": 1}\n");
    FAIL();
  } catch (const RowError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

// ---------------------------------------------------------------------------
// Stream engine
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> rows_of(const Frame& f, std::size_t begin, std::size_t end) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = begin; i < end; ++i) {
    std::vector<double> row;
    for (std::size_t k = 0; k < f.features.size(); ++k) row.push_back(f.at(k, i));
    out.push_back(std::move(row));
  }
  return out;
}

Frame head(const Frame& f, std::size_t n) {
  Frame out = f;
  for (auto& c : out.cells) c.resize(n);
  return out;
}

TEST(StreamEngine, MedianCellsRaiseNoAlarm) {
  const auto data = synth_generate(baseline(4 * kDay, 5.0, 21));
  const auto config = light_config();
  const auto frame = build_frame(data.transactions, config.features, config.grid_step);
  StreamEngine engine(config);
  engine.bootstrap(head(frame, 5760));
  std::vector<double> median;
  for (const auto& column : engine.database().cells) {
    auto sorted = column;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    median.push_back(sorted[sorted.size() / 2]);
  }
  const std::int64_t start = engine.now();
  const auto step = engine.advance(start, std::vector<std::vector<double>>(5, median));
  EXPECT_TRUE(step.alarms.empty());
  EXPECT_TRUE(step.notices.empty());
  EXPECT_FALSE(step.retrained);
  EXPECT_EQ(engine.now(), start + 300);
}

TEST(StreamEngine, DosBurstRaisesClusteringAlarm) {
  auto s = baseline(4 * kDay + 3600, 0.1, 22);
  s.injections.push_back({InjectionKind::Burst, 4 * kDay + 1800, 200.0});  // 20 transactions in one minute
  const auto data = synth_generate(s);
  const auto config = light_config();
  const auto frame = build_frame(data.transactions, config.features, config.grid_step);
  StreamEngine engine(config);
  engine.bootstrap(head(frame, 5760));
  const std::int64_t at = data.labels.front().ts;
  bool seen = false;
  for (std::size_t i = 5760; i + 5 <= frame.end(); i += 5) {
    const auto step = engine.advance(frame.time_of(i), rows_of(frame, i, i + 5));
    const bool window_has_burst = frame.time_of(i) <= at && at < frame.time_of(i + 5);
    for (const auto& cell : step.alarms)
      if (cell.ts <= at && at < cell.ts + 60) {
        EXPECT_TRUE(window_has_burst);
        EXPECT_TRUE(cell.tally(Category::Clustering).decision);
        seen = true;
      }
  }
  EXPECT_TRUE(seen);
}

TEST(StreamEngine, ExactlyOneRetrainOverFourDays) {
  const auto data = synth_generate(baseline(8 * kDay, 0.5, 23));
  auto config = light_config();
  config.detectors = {"arima", "pca", "kmeans"};
  const auto frame = build_frame(data.transactions, config.features, config.grid_step);
  StreamEngine engine(config);
  engine.bootstrap(head(frame, 5760));
  EXPECT_EQ(engine.retrain_count(), 0);
  int retrains = 0;
  for (std::size_t i = 5760; i < 2 * 5760; i += 5) retrains += engine.advance(frame.time_of(i), rows_of(frame, i, i + 5)).retrained;
  EXPECT_EQ(retrains, 1);
  EXPECT_EQ(engine.retrain_count(), 1);
  EXPECT_EQ(engine.last_retrain(), engine.now());
  EXPECT_EQ(engine.database().stored(), 5760u);
}

TEST(StreamEngine, RetrainLowersFalseAlarmsAfterARegimeChange) {
  auto s = baseline(9 * kDay, 2.0, 24);
  s.injections.push_back({InjectionKind::TrendBreak, 4 * kDay, 2.0});
  const auto data = synth_generate(s);
  auto config = light_config();
  config.detectors = {"arima", "stl", "knn"};
  config.features = {FeatureKind::PaymentAmount};
  const auto frame = build_frame(data.transactions, config.features, config.grid_step);
  StreamEngine engine(config);
  engine.bootstrap(head(frame, 5760));
  std::size_t before = 0, after = 0;
  for (std::size_t i = 5760; i + 5 <= frame.end(); i += 5) {
    const auto step = engine.advance(frame.time_of(i), rows_of(frame, i, i + 5));
    const std::size_t day = (i - 5760) / 1440;
    if (day >= 1 && day < 4) before += step.alarms.size();  // new regime, old models
    if (day >= 4) after += step.alarms.size();
  }
  EXPECT_EQ(engine.retrain_count(), 1);
  // Normalize to alarms per day.
  EXPECT_LT(static_cast<double>(after) / 0.99, static_cast<double>(before) / 3.0);
}

TEST(StreamEngine, DeterministicReplay) {
  const auto data = synth_generate(baseline(4 * kDay + 7200, 2.0, 25));
  const auto config = light_config();
  const auto frame = build_frame(data.transactions, config.features, config.grid_step);
  const auto a = replay_stream(frame, config, 4 * kDay);
  const auto b = replay_stream(frame, config, 4 * kDay);
  EXPECT_EQ(a.report.cells, b.report.cells);
  EXPECT_EQ(a.monitored, b.monitored);
}

TEST(StreamEngine, MatchesOneShotScoringWithTheSameModels) {
  const auto data = synth_generate(baseline(4 * kDay + 4 * 3600, 3.0, 26));
  auto config = light_config();
  config.window_stride = 120;  // overlapping windows revisit earlier cells
  const auto frame = build_frame(data.transactions, config.features, config.grid_step);
  const std::size_t boot = 5760;
  const std::size_t end = boot + 4 * 60;

  auto one_shot = make_detectors(config);
  std::vector<DetectorVerdict> verdicts;
  std::vector<std::int64_t> ts;
  for (std::size_t i = 0; i < end; ++i) ts.push_back(frame.time_of(i));
  const Frame span = head(frame, end);
  for (auto& d : one_shot) {
    d->fit(span, 0, boot);
    std::vector<std::size_t> flagged;
    const auto range = d->score(span, boot, end, flagged);
    DetectorVerdict v{d->id(), d->category(), std::vector<bool>(end), std::vector<bool>(end)};
    for (auto i : flagged) v.flags[i] = true;
    for (auto i = range.begin; i < range.end; ++i) v.scored[i] = true;
    verdicts.push_back(std::move(v));
  }
  const auto voted = category_vote(verdicts, ts);
  std::vector<std::int64_t> expected;
  for (std::size_t i = boot; i < end; ++i)
    if (voted[i].alarm) expected.push_back(voted[i].ts);

  StreamEngine engine(config);
  engine.bootstrap(head(frame, boot));
  std::vector<std::int64_t> got;
  // Uneven chunks on purpose.
  const std::size_t chunks[] = {1, 7, 3, 5, 11, 2};
  std::size_t i = boot, k = 0;
  while (i < end) {
    const std::size_t stop = std::min(end, i + chunks[k++ % 6]);
    for (const auto& cell : engine.advance(frame.time_of(i), rows_of(frame, i, stop)).alarms) got.push_back(cell.ts);
    i = stop;
  }
  // Cells the last windows have not reached yet are still pending.
  const auto pending = static_cast<std::int64_t>(config.stride_cells()) * 60;
  std::erase_if(expected, [&](std::int64_t t) { return t >= frame.time_of(end) - pending; });
  std::erase_if(got, [&](std::int64_t t) { return t >= frame.time_of(end) - pending; });
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, expected);

  const auto stream_verdicts = engine.verdicts();
  const std::size_t first = engine.database().first;
  ASSERT_EQ(stream_verdicts.size(), verdicts.size());
  for (std::size_t d = 0; d < verdicts.size(); ++d)
    for (std::size_t c = boot; c < end; ++c)
      EXPECT_EQ(stream_verdicts[d].flags[c - first], verdicts[d].flags[c]) << verdicts[d].id << " " << c;
}

TEST(StreamEngine, GapIsZeroFilledWithNotice) {
  const auto data = synth_generate(baseline(kDay, 2.0, 27));
  auto config = light_config();
  config.detectors = {"arima", "pca"};
  config.reference_span = kDay;
  const auto frame = build_frame(data.transactions, config.features, config.grid_step);
  StreamEngine engine(config);
  engine.bootstrap(head(frame, 1000));
  const std::int64_t expected = engine.now();
  const auto step = engine.advance(expected + 180, {{1.0, 50.0, 60000.0}});
  ASSERT_EQ(step.notices.size(), 1u);
  EXPECT_NE(step.notices[0].find("gap of 3 cells"), std::string::npos);
  EXPECT_EQ(engine.database().end(), 1004u);
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(engine.database().at(f, 1001), 0.0);
}

TEST(StreamEngine, Preconditions) {
  auto config = light_config();
  config.detectors = {"arima", "pca"};
  StreamEngine engine(config);
  EXPECT_THROW(engine.retrain(), DataError);
  EXPECT_THROW(engine.advance(0, {{1.0, 1.0, 1.0}}), std::invalid_argument);
  EXPECT_THROW(engine.bootstrap(Frame{}), DataError);

  const auto data = synth_generate(baseline(kDay / 2, 2.0, 28));
  const auto frame = build_frame(data.transactions, config.features, config.grid_step);
  engine.bootstrap(frame);
  EXPECT_THROW(engine.advance(engine.now() - 60, {{1.0, 1.0, 1.0}}), std::invalid_argument);
  EXPECT_THROW(engine.advance(engine.now() + 30, {{1.0, 1.0, 1.0}}), std::invalid_argument);
}

TEST(StreamEngine, RetrainOnIdenticalDataIsDeterministic) {
  const auto data = synth_generate(baseline(kDay, 2.0, 29));
  auto config = light_config();
  config.reference_span = kDay;
  const auto frame = build_frame(data.transactions, config.features, config.grid_step);
  StreamEngine a(config), b(config);
  a.bootstrap(head(frame, 1400));
  b.bootstrap(head(frame, 1400));
  a.retrain();
  b.retrain();
  b.retrain();
  const auto sa = a.advance(frame.time_of(1400), rows_of(frame, 1400, 1440));
  const auto sb = b.advance(frame.time_of(1400), rows_of(frame, 1400, 1440));
  EXPECT_EQ(sa.alarms, sb.alarms);
  const auto va = a.verdicts(), vb = b.verdicts();
  for (std::size_t d = 0; d < va.size(); ++d) EXPECT_EQ(va[d].flags, vb[d].flags);
}

}  // namespace
}  // namespace txsentry
