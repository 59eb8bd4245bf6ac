#include <gtest/gtest.h>

#include <cmath>

#include "shiftaudit/error.hpp"
#include "shiftaudit/serialize.hpp"
#include "test_util.hpp"

using namespace shiftaudit;

TEST(Serialize, SvcModelRoundTripPredictsBitIdentically) {
  const auto x = testutil::gaussian_matrix(80, 5, 1);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 80; ++i) y.push_back(x(i, 0) + x(i, 1) > 0 ? 1 : -1);
  auto m = train_svc(x, y, {});
  m.classes = {"not_nbi", "nbi"};
  const auto text = model_to_json(m).dump();
  const auto back = svc_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back.classes, m.classes);
  EXPECT_EQ(back.bias, m.bias);
  EXPECT_TRUE(testutil::bit_identical(back.support_vectors, m.support_vectors));
  const auto probe = testutil::gaussian_matrix(50, 5, 2);
  EXPECT_TRUE(testutil::bit_identical(decision_values(back, probe), decision_values(m, probe)));
}

TEST(Serialize, SvrModelRoundTripPredictsBitIdentically) {
  const auto x = testutil::gaussian_matrix(60, 3, 3);
  std::vector<double> t;
  for (Eigen::Index i = 0; i < 60; ++i) t.push_back(std::tanh(x(i, 0)));
  const auto m = train_svr(x, t, {});
  const auto back = svr_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  EXPECT_EQ(back.epsilon, m.epsilon);
  const auto probe = testutil::gaussian_matrix(40, 3, 4);
  EXPECT_TRUE(testutil::bit_identical(predict_values(back, probe), predict_values(m, probe)));
}

TEST(Serialize, ModelKindChecks) {
  EXPECT_THROW(model_kind(nlohmann::json::object()), DataError);
  EXPECT_THROW(model_kind({{"format", kModelFormat}, {"version", 2}, {"kind", "svc"}}), DataError);
  EXPECT_EQ(model_kind({{"format", kModelFormat}, {"version", 1}, {"kind", "svr"}}), "svr");
  auto doc = model_to_json(SvrModel{});
  EXPECT_THROW(svc_from_json(doc), DataError);
  doc["dual_coefs"] = {1.0};
  EXPECT_THROW(svr_from_json(doc), DataError);
}

TEST(Serialize, ProjectionCsvAndJsonRoundTrip) {
  testutil::TempDir dir;
  Projection p;
  p.ids = {"a", "b", "c"};
  p.coords = testutil::gaussian_matrix(3, 2, 5);
  p.final_kl = 0.25;
  write_text(dir / "p.csv", projection_to_csv(p));
  const auto csv = load_projection(dir / "p.csv");
  EXPECT_EQ(csv.ids, p.ids);
  EXPECT_TRUE(testutil::bit_identical(csv.coords, p.coords));
  EXPECT_TRUE(std::isnan(csv.final_kl));
  write_json(dir / "p.json", to_json(p));
  const auto js = load_projection(dir / "p.json");
  EXPECT_TRUE(testutil::bit_identical(js.coords, p.coords));
  EXPECT_EQ(js.final_kl, 0.25);
}

TEST(Serialize, ReportShapes) {
  FrechetReport r;
  r.reference = "ref";
  r.cohort = "c";
  r.boot = {1.0, 2.0};
  const auto j = to_json(r);
  EXPECT_FALSE(j.contains("boot"));
  EXPECT_EQ(to_json(r, true)["boot"].size(), 2u);
  EXPECT_EQ(j["ci"].size(), 2u);
  ShiftTest t{1.5, 0.1, "a", "b"};
  EXPECT_EQ(to_json(t)["pair"], nlohmann::json({"a", "b"}));
  EXPECT_EQ(to_json(GammaMode::scale()), "scale");
  EXPECT_EQ(to_json(GammaMode::fixed_value(0.5)), 0.5);
}
