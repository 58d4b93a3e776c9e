#include <cmath>
#include <random>

#include "doctest.h"
#include "lyricsync/error.hpp"
#include "lyricsync/metrics.hpp"

using namespace lyricsync;

namespace {

std::vector<WordTiming> Words(std::vector<double> pred, std::vector<double> ref) {
  std::vector<WordTiming> w(pred.size());
  for (size_t i = 0; i < w.size(); ++i) {
    w[i].word_index = static_cast<int>(i);
    w[i].t_pred = pred[i];
    w[i].t_ref = ref[i];
  }
  return w;
}

// Deviations placed on references spaced far apart.
std::vector<WordTiming> Deviations(std::vector<double> devs) {
  std::vector<double> ref, pred;
  for (size_t i = 0; i < devs.size(); ++i) {
    ref.push_back(10.0 * i);
    pred.push_back(10.0 * i + devs[i]);
  }
  return Words(pred, ref);
}

ErrorCode CodeOf(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("mean absolute error") {
  CHECK(Mae(Words({1, 2, 3}, {1, 2, 3})) == 0.0);
  CHECK(Mae(Words({1.0, 2.0, 3.5}, {1.0, 2.5, 3.0})) == doctest::Approx(1.0 / 3.0));
  CHECK(Mae(Deviations({0.2})) == doctest::Approx(0.2));
  CHECK(CodeOf([] { Mae({}); }) == ErrorCode::kEmptySong);
}

TEST_CASE("median absolute error") {
  CHECK(MedAe(Deviations({0.1, 0.2, 10.0})) == doctest::Approx(0.2));
  CHECK(MedAe(Deviations({0, 0, 0})) == 0.0);
  CHECK(MedAe(Deviations({0.1, 0.3})) == doctest::Approx(0.2));
  CHECK(MedAe(Deviations({-0.3, 0.1})) == doctest::Approx(0.2));
  const auto same = Deviations({0.25, -0.25, 0.25});
  CHECK(Mae(same) == doctest::Approx(MedAe(same)));
  CHECK(CodeOf([] { MedAe({}); }) == ErrorCode::kEmptySong);
}

TEST_CASE("percentage of correct duration") {
  auto one = Words({2.0}, {1.0});
  one[0].e_ref = 3.0;
  one[0].e_pred = 4.0;
  CHECK(Perc(one, 10.0) == doctest::Approx(0.1));

  // Contiguous words covering the song, predicted exactly.
  auto full = Words({0, 2, 5}, {0, 2, 5});
  full[2].e_ref = full[2].e_pred = 8.0;
  CHECK(Perc(full, 8.0) == doctest::Approx(1.0));

  auto disjoint = Words({5.0}, {1.0});
  disjoint[0].e_ref = 2.0;
  disjoint[0].e_pred = 6.0;
  CHECK(Perc(disjoint, 10.0) == 0.0);

  // Derived ends: next onset, and min(t + 0.5, duration) for the last word.
  const auto derived = Words({1.0, 3.0}, {1.0, 3.0});
  CHECK(Perc(derived, 10.0) == doctest::Approx((2.0 + 0.5) / 10.0));
  CHECK(Perc(derived, 3.2) == doctest::Approx((2.0 + 0.2) / 3.2));

  CHECK(CodeOf([&] { Perc(derived, 0.0); }) == ErrorCode::kNonpositiveDuration);
  CHECK(CodeOf([] { Perc({}, 1.0); }) == ErrorCode::kEmptySong);
}

TEST_CASE("mauch accuracy uses a strict bound") {
  CHECK(Mauch(Deviations({0.1, 0.3}), 0.2) == doctest::Approx(0.5));
  CHECK(Mauch(Deviations({0, 0, 0}), 0.01) == 1.0);
  auto exact = Words({0.25}, {0.0});
  CHECK(Mauch(exact, 0.25) == 0.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 0.3);
  std::vector<double> devs;
  for (int i = 0; i < 200; ++i) devs.push_back(d(rng));
  const auto w = Deviations(devs);
  double prev = 0.0;
  for (double tau = 0.05; tau < 1.5; tau += 0.05) {
    const double m = Mauch(w, tau);
    CHECK(m >= prev);
    prev = m;
  }
}

TEST_CASE("confusion-matrix rates reproduce the reported F1") {
  // Rates in percent at threshold 0.08: TP 91.07, FP 8.65, FN 0.02, TN 0.26.
  const auto m = F1FromConfusion(91.07, 8.65, 0.02);
  CHECK(std::abs(m.f1 - 0.9517) < 0.01);
}

TEST_CASE("triage sweep boundaries") {
  std::vector<TriageItem> items = {{0.9, 0.05}, {0.8, 0.5}, {0.3, 0.1}, {0.1, 1.0}};
  const std::vector<double> thresholds = {0.0, 0.5, 0.95};
  const auto rows = TriageSweep(items, 0.2, thresholds);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].tp == 2);
  CHECK(rows[0].fp == 2);
  CHECK(rows[0].fn == 0);
  CHECK(rows[0].recall == 1.0);
  const auto all = F1FromConfusion(2, 2, 0);
  CHECK(rows[0].f1 == doctest::Approx(all.f1));
  CHECK(*rows[0].accepted_mae == doctest::Approx((0.05 + 0.5 + 0.1 + 1.0) / 4));
  CHECK(rows[1].tp == 1);
  CHECK(rows[1].fp == 1);
  CHECK(rows[1].fn == 1);
  CHECK(rows[1].tn == 1);
  CHECK(rows[1].precision == doctest::Approx(0.5));
  CHECK(rows[1].recall == doctest::Approx(0.5));
  CHECK(*rows[1].accepted_mae == doctest::Approx(0.275));
  CHECK_FALSE(rows[2].accepted_mae.has_value());
  CHECK(rows[2].tp + rows[2].fp == 0);
  CHECK(CodeOf([&] { TriageSweep({}, 0.2, thresholds); }) == ErrorCode::kEmptyInput);
  CHECK(CodeOf([&] { TriageSweep(items, 0.0, thresholds); }) == ErrorCode::kInvalidArgument);
  CHECK(DefaultThresholds(11)[3] == doctest::Approx(0.3));
}

TEST_CASE("deviation histogram") {
  const std::vector<double> zero(5, 0.0);
  const auto h0 = MakeHistogram(zero, 10, 1.0);
  CHECK(h0.counts[5] == 5);
  CHECK(h0.total() == 5);

  const std::vector<double> wide = {-1.0, 1.0};
  const auto h1 = MakeHistogram(wide, 4, 0.5);
  CHECK(h1.underflow == 1);
  CHECK(h1.overflow == 1);
  CHECK(h1.total() == 2);

  const std::vector<double> d = {0.05};
  const auto h2 = MakeHistogram(d, 80, 2.0);
  CHECK(h2.counts[41] == 1);
  CHECK(h2.bin_width() == doctest::Approx(0.05));
  CHECK(h2.bin_lower(41) == doctest::Approx(0.05));

  CHECK(CodeOf([] { MakeHistogram({}, 80, 2.0); }) == ErrorCode::kEmptyInput);
  CHECK(CodeOf([&] { MakeHistogram(d, 0, 2.0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("aggregates are unweighted means of per-song values") {
  SongEvaluation a{"a", Deviations({0.1, 0.1, 0.1, 0.1}), 50.0, 0.9};
  SongEvaluation b{"b", Deviations({0.5}), 20.0, 0.2};
  MetricsOptions opt;
  opt.taus = {0.2, 0.3};
  const std::vector<SongEvaluation> songs = {a, b};
  const auto r = Evaluate(songs, opt);
  REQUIRE(r.per_song.size() == 2);
  CHECK(r.aggregate.mae == doctest::Approx((0.1 + 0.5) / 2));
  CHECK(r.aggregate.mauch.at(0.2) == doctest::Approx((1.0 + 0.0) / 2));
  CHECK(r.aggregate.mauch.at(0.3) >= r.aggregate.mauch.at(0.2));
  CHECK(r.aggregate.n_words == 5);
  CHECK(r.histogram.total() == 5);
  CHECK(r.triage.size() == opt.thresholds.size());
  CHECK(r.ToJson().find("mauch_0.3") != std::string::npos);
  CHECK(r.ToCsv().find("mean,") != std::string::npos);
  CHECK(CodeOf([] { Evaluate({}, {}); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("reject-lowest picks the lowest confidences with id tie-break") {
  const std::vector<Scored> items = {{"d", 0.5}, {"c", 0.1}, {"b", 0.1}, {"a", 0.9}, {"e", 0.3},
                                     {"f", 0.7}, {"g", 0.8}, {"h", 0.6}, {"i", 0.95}, {"j", 0.99}};
  CHECK(RejectLowest(items, 0.1) == std::vector<std::string>{"b"});
  CHECK(RejectLowest(items, 0.2) == std::vector<std::string>{"b", "c"});
  CHECK(RejectLowest(items, 0.0).empty());
  CHECK(RejectLowest(items, 1.0).size() == 10);
  CHECK(CodeOf([&] { RejectLowest(items, 1.5); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("word pairing") {
  SongLabels ref, pred;
  ref.words = {{1.0, "a"}, {2.0, "b"}};
  pred.words = {{1.1, "a"}, {2.2, "b"}};
  const std::vector<double> conf = {0.4, 0.6};
  const auto w = PairWords(ref, pred, conf);
  CHECK(w[1].t_pred == 2.2);
  CHECK(w[1].confidence == 0.6);
  pred.words.pop_back();
  CHECK(CodeOf([&] { PairWords(ref, pred); }) == ErrorCode::kInvalidArgument);
}
