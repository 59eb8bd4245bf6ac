#include <gtest/gtest.h>

#include <fstream>

#include "shiftaudit/audit.hpp"
#include "shiftaudit/error.hpp"
#include "shiftaudit/label_store.hpp"
#include "test_util.hpp"

using namespace shiftaudit;

namespace {

RelabelAction action(std::vector<std::string> ids, std::string value, std::string label = "kind") {
  RelabelAction a;
  a.selection = std::move(ids);
  a.label_name = std::move(label);
  a.new_value = std::move(value);
  a.author = "tester";
  a.timestamp = std::chrono::system_clock::time_point(std::chrono::milliseconds(1700000000000));
  return a;
}

}  // namespace

TEST(LabelStore, RelabelUpdatesViewAndLog) {
  const auto ds = testutil::toy_dataset(4, 2, 1);
  LabelStore store(ds);
  EXPECT_EQ(store.sequence(), 0u);
  EXPECT_EQ(*store.value(1, "kind"), "y");
  const auto& a = store.relabel(action({"a1", "b0"}, "x"));
  EXPECT_EQ(a.seq, 1u);
  EXPECT_EQ(*store.value(1, "kind"), "x");
  EXPECT_EQ(store.base()[1].at("kind"), "y");
  EXPECT_EQ(ds[1].labels.at("kind"), "y");  // source data untouched
  store.relabel(action({"a1"}, "y"));
  EXPECT_EQ(store.sequence(), 2u);
  EXPECT_EQ(*store.value(1, "kind"), "y");
  EXPECT_EQ(store.replay(), store.view());
}

TEST(LabelStore, ValidationErrors) {
  const auto ds = testutil::toy_dataset(4, 2, 1);
  LabelStore store(ds);
  EXPECT_THROW(store.relabel(action({}, "x")), DataError);
  EXPECT_THROW(store.relabel(action({"a0"}, "z")), DataError);
  EXPECT_THROW(store.relabel(action({"a0"}, "x", "other")), DataError);
  try {
    store.relabel(action({"a0", "ghost", "spirit"}, "x"));
    FAIL() << "expected UnknownIdError";
  } catch (const UnknownIdError& e) {
    EXPECT_EQ(e.ids(), (std::vector<std::string>{"ghost", "spirit"}));
  }
  EXPECT_EQ(store.sequence(), 0u);
  EXPECT_EQ(store.view(), store.base());
}

TEST(LabelStore, LogRoundTripReplaysToSameView) {
  testutil::TempDir dir;
  const auto ds = testutil::toy_dataset(6, 2, 2);
  LabelStore store(ds);
  auto a = action({"a0", "a2"}, "y");
  a.note = "looked odd";
  append_action_log(dir / "log.ndjson", store.relabel(a));
  append_action_log(dir / "log.ndjson", store.relabel(action({"b5"}, "x")));

  LabelStore replayed(ds);
  replayed.load_log(dir / "log.ndjson");
  EXPECT_EQ(replayed.view(), store.view());
  EXPECT_EQ(replayed.log(), store.log());
  EXPECT_EQ(replayed.log()[0].note, "looked odd");
}

TEST(LabelStore, MalformedLogIsADataError) {
  testutil::TempDir dir;
  std::ofstream(dir / "bad.ndjson") << "{not json\n";
  const auto ds = testutil::toy_dataset(2, 2, 2);
  LabelStore store(ds);
  EXPECT_THROW(store.load_log(dir / "bad.ndjson"), DataError);
  EXPECT_THROW(store.load_log(dir / "missing.ndjson"), DataError);
}

TEST(LabelStore, RelabelSelectionRaisesAgreementExactly) {
  // Four of ten records disagree with the reference; fixing three of them
  // must move agreement from 6/10 to 9/10.
  std::vector<EmbeddingRecord> recs;
  for (int i = 0; i < 10; ++i) {
    EmbeddingRecord r;
    r.id = "r" + std::to_string(i);
    r.cohort = "c";
    r.vector = {static_cast<float>(i)};
    r.labels["noisy"] = i < 4 ? "wl" : "ce";
    r.labels["truth"] = "ce";
    recs.push_back(r);
  }
  const Dataset ds(recs, 1, {{"noisy", {"ce", "wl"}}, {"truth", {"ce", "wl"}}});
  LabelStore store(ds);
  EXPECT_DOUBLE_EQ(label_agreement(store, "noisy", "truth", {}, 50, 0).point, 0.6);
  relabel_selection(store, action({"r0", "r1", "r2"}, "ce", "noisy"));
  EXPECT_DOUBLE_EQ(label_agreement(store, "noisy", "truth", {}, 50, 0).point, 0.9);
  const std::vector<std::size_t> subset{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(label_agreement(store, "noisy", "truth", subset, 50, 0).point, 0.75);
}
