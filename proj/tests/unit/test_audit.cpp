#include <gtest/gtest.h>

#include <cmath>

#include "shiftaudit/audit.hpp"
#include "shiftaudit/error.hpp"
#include "shiftaudit/synth.hpp"
#include "test_util.hpp"

using namespace shiftaudit;

TEST(Accuracy, ExactCounts) {
  const std::vector<std::string> pred{"a", "b", "a", "a", "c"};
  const std::vector<std::string> truth{"a", "b", "b", "a", "a"};
  const auto r = accuracy_ci(pred, truth, 200, 1);
  EXPECT_DOUBLE_EQ(r.point, 3.0 / 5.0);
  EXPECT_EQ(r.n, 5u);
  EXPECT_GE(r.ci_lo, 0.0);
  EXPECT_LE(r.ci_hi, 1.0);
  EXPECT_LE(r.ci_lo, r.ci_hi);
}

TEST(Accuracy, PerfectAndZeroHaveDegenerateIntervals) {
  const std::vector<std::string> a{"x", "y", "x"};
  const std::vector<std::string> b{"y", "x", "y"};
  const auto perfect = accuracy_ci(a, a, 100, 2);
  EXPECT_EQ(perfect.point, 1.0);
  EXPECT_EQ(perfect.ci_lo, 1.0);
  EXPECT_EQ(perfect.ci_hi, 1.0);
  const auto zero = accuracy_ci(a, b, 100, 2);
  EXPECT_EQ(zero.point, 0.0);
  EXPECT_EQ(zero.ci_hi, 0.0);
}

TEST(Accuracy, RejectsBadInput) {
  const std::vector<std::string> a{"x"};
  const std::vector<std::string> b{"x", "y"};
  EXPECT_THROW(accuracy_ci(a, b, 100, 0), std::invalid_argument);
  EXPECT_THROW(accuracy_ci({}, {}, 100, 0), std::invalid_argument);
  EXPECT_THROW(accuracy_ci(a, a, 1, 0), std::invalid_argument);
}

TEST(Pearson, ExactCases) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 6, 8, 10};
  const std::vector<double> down{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(pearson(x, up), 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, down), -1.0);
  EXPECT_THROW(pearson(x, std::vector<double>(5, 1.0)), std::invalid_argument);
  EXPECT_THROW(pearson(std::vector<double>{1.0}, std::vector<double>{2.0}), std::invalid_argument);
}

TEST(Pearson, MatchesTextbookFormula) {
  const auto m = testutil::gaussian_matrix(100, 2, 3);
  std::vector<double> x(100);
  std::vector<double> y(100);
  for (int i = 0; i < 100; ++i) {
    x[static_cast<std::size_t>(i)] = m(i, 0);
    y[static_cast<std::size_t>(i)] = m(i, 0) + m(i, 1);
  }
  // n sum xy - sum x sum y over the product of root terms.
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double r = (100 * sxy - sx * sy) / std::sqrt((100 * sxx - sx * sx) * (100 * syy - sy * sy));
  EXPECT_NEAR(pearson(x, y), r, 1e-12);
  const auto ci = pearson_ci(x, y, 500, 4);
  EXPECT_LE(ci.ci_lo, ci.r);
  EXPECT_GE(ci.ci_hi, ci.r);
  EXPECT_GE(ci.ci_lo, -1.0);
  EXPECT_LE(ci.ci_hi, 1.0);
  EXPECT_EQ(ci.skipped, 0u);
}

TEST(Pearson, DegenerateResamplesAreRedrawnOrSkipped) {
  // With 3 points, a resample is constant with probability 3/27; redraws
  // should nearly always recover.
  const std::vector<double> x{0, 1, 2};
  const std::vector<double> y{0, 2, 1};
  const auto ci = pearson_ci(x, y, 300, 5);
  EXPECT_EQ(ci.skipped, 0u);
  const auto again = pearson_ci(x, y, 300, 5);
  EXPECT_EQ(ci.ci_lo, again.ci_lo);
  EXPECT_EQ(ci.ci_hi, again.ci_hi);
}

TEST(Polygon, EvenOddRule) {
  const std::vector<Point2> tri{{0, 0}, {4, 0}, {0, 4}};
  EXPECT_TRUE(inside_polygon(tri, {1, 1}));
  EXPECT_FALSE(inside_polygon(tri, {3, 3}));
  EXPECT_FALSE(inside_polygon(tri, {-1, 1}));
  // Self-intersecting star: the central pentagon is outside under even-odd.
  const std::vector<Point2> star{{0, 3}, {2, -3}, {-3, 1}, {3, 1}, {-2, -3}};
  EXPECT_FALSE(inside_polygon(star, {0, 0}));
  EXPECT_TRUE(inside_polygon(star, {0, 2.5}));
  const std::vector<Point2> pts{{1, 1}, {3, 3}, {0.5, 0.5}, {2, 1}};
  EXPECT_EQ(select_in_polygon(tri, pts), (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_THROW(inside_polygon(std::vector<Point2>{{0, 0}, {1, 1}}, {0, 0}), std::invalid_argument);
}

TEST(Denoise, ProbeBeatsNoisyLabelsOnCleanClusters) {
  const auto r = generate(synth_spec_from_json(nlohmann::json::parse(R"({
    "dim": 4, "seed": 2,
    "cohorts": [{"name": "pos", "n": 150, "mean": [2, 0, 0, 0], "scale": 0.5},
                {"name": "neg", "n": 150, "mean": [-2, 0, 0, 0], "scale": 0.5}],
    "labels": [{"name": "f", "rule": {"type": "by_cohort", "values": {"pos": "p", "neg": "n"}},
                "flip_rate": 0.2, "emit_clean": true}]
  })")));
  const auto parts = split(r.dataset, {0.8, 1, SplitMode::frame_level});
  DenoiseOptions opts;
  opts.label_name = "f";
  opts.positive_value = "p";
  opts.reference_label = "f_clean";
  opts.resamples = 200;
  const auto d = denoise_via_probe(parts.train, parts.test, opts);
  ASSERT_TRUE(d.probe_accuracy && d.noisy_agreement);
  EXPECT_GT(d.probe_accuracy->point, 0.97);
  EXPECT_LT(d.noisy_agreement->point, 0.9);
  EXPECT_EQ(d.ids, parts.test.ids());
  EXPECT_EQ(d.model.classes.first, "not_p");
  for (std::size_t i = 0; i < d.ids.size(); ++i) {
    EXPECT_EQ(d.predictions[i], d.decision_values[i] >= 0.0 ? "p" : "not_p");
  }
  opts.reference_label = "missing";
  EXPECT_THROW(denoise_via_probe(parts.train, parts.test, opts), DataError);
}

TEST(Transfer, ThreeScenariosAndValidation) {
  const auto r = generate(synth_spec_from_json(nlohmann::json::parse(R"({
    "dim": 3, "seed": 3,
    "cohorts": [{"name": "s", "n": 120}, {"name": "t", "n": 120, "mean": [0, 0, 3]}],
    "confidence": {"weights": [1, 0, 0], "noise_std": 0.02}
  })")));
  const auto s = split(filter_by_cohort(r.dataset, {"s"}), {0.75, 1});
  const auto t = split(filter_by_cohort(r.dataset, {"t"}), {0.75, 2});
  ScenarioOptions opts;
  opts.resamples = 100;
  const auto reports = run_transfer_scenarios(s.train, s.test, t.train, t.test, opts);
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(reports[0].name, "in_domain");
  EXPECT_EQ(reports[1].name, "transfer");
  EXPECT_EQ(reports[2].name, "union");
  EXPECT_EQ(reports[2].n_train, s.train.size() + t.train.size());
  for (const auto& rep : reports) {
    EXPECT_LE(rep.correlation.ci_lo, rep.correlation.ci_hi);
    EXPECT_EQ(rep.n_test, rep.name == "in_domain" ? s.test.size() : t.test.size());
  }
  // Reruns are identical whatever else ran in between.
  const auto again = run_transfer_scenarios(s.train, s.test, t.train, t.test, opts);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(again[k].correlation.ci_lo, reports[k].correlation.ci_lo);
  EXPECT_THROW(run_transfer_scenarios(s.train, s.test, t.train, t.train, opts), DataError);
}

TEST(Transfer, NegLogTargets) {
  const auto ds = testutil::toy_dataset(3, 2, 1);
  const auto raw = confidence_targets(ds);
  const auto nl = confidence_targets(ds, TargetTransform::neg_log);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_DOUBLE_EQ(nl[i], -std::log(raw[i]));
}
