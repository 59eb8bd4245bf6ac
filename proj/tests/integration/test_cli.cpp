#include <gtest/gtest.h>

#include <csignal>
#include <fstream>
#include <sstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include "shiftaudit/audit.hpp"
#include "shiftaudit/serialize.hpp"
#include "shiftaudit/service.hpp"
#include "test_util.hpp"

#include <httplib.h>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kBin = SHIFTAUDIT_BIN;
const fs::path kFixtures = SHIFTAUDIT_FIXTURES;

// Runs the CLI through the shell; stdout and stderr go to files in dir.
int run(const testutil::TempDir& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.path().string() + "' && '" + kBin + "' " + args + " >stdout.txt 2>stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read(const fs::path& p) { return json::parse(slurp(p)); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(run(dir, "synth --spec '" + (kFixtures / "cohorts.json").string() + "' --format csv --out cohorts"), 0)
        << slurp(dir / "stderr.txt");
  }
  std::string data() const { return (dir / "cohorts" / "dataset.csv").string(); }
  testutil::TempDir dir;
};

}  // namespace

TEST_F(CliTest, SynthWritesGroundTruthAndIsReproducible) {
  EXPECT_TRUE(fs::exists(dir / "cohorts" / "ground_truth.json"));
  EXPECT_TRUE(fs::exists(dir / "cohorts" / "synth.meta.json"));
  ASSERT_EQ(run(dir, "synth --spec '" + (kFixtures / "cohorts.json").string() + "' --format csv --out again"), 0);
  EXPECT_EQ(slurp(dir / "cohorts" / "dataset.csv"), slurp(dir / "again" / "dataset.csv"));
  EXPECT_EQ(slurp(dir / "cohorts" / "ground_truth.json"), slurp(dir / "again" / "ground_truth.json"));
  const auto truth = read(dir / "cohorts" / "ground_truth.json");
  EXPECT_EQ(truth["records"].size(), 1300u);
  EXPECT_TRUE(truth.contains("closed_form_fd"));
}

TEST_F(CliTest, FrechetArtifactIsByteIdenticalAcrossRuns) {
  const std::string args = "frechet --data '" + data() + "' --ref israel_wl --cohorts japan_wl,japan_ce --b 100 --seed 5";
  ASSERT_EQ(run(dir, args + " --out a.json"), 0) << slurp(dir / "stderr.txt");
  ASSERT_EQ(run(dir, args + " --out b.json"), 0);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_TRUE(fs::exists(dir / "a.json.meta.json"));
  const auto doc = read(dir / "a.json");
  ASSERT_EQ(doc["reports"].size(), 2u);
  EXPECT_LT(doc["reports"][0]["point"].get<double>(), doc["reports"][1]["point"].get<double>());
  ASSERT_EQ(doc["tests"].size(), 1u);

  ASSERT_EQ(run(dir, args + " --format csv"), 0);
  const auto csv = slurp(dir / "stdout.txt");
  EXPECT_EQ(csv.rfind("kind,a,b,value,ci_lo,ci_hi,p\n", 0), 0u);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run(dir, "frechet --data '" + data() + "' --ref israel_wl --cohorts japan_wl --b 1"), 1);
  EXPECT_EQ(run(dir, "frechet --data '" + data() + "' --ref israel_wl --cohorts nowhere"), 2);
  EXPECT_EQ(run(dir, "frechet --data missing.csv --ref a --cohorts b"), 2);
  EXPECT_EQ(run(dir, "frechet --ref a"), 1);
  EXPECT_EQ(run(dir, "no-such-command"), 1);
  EXPECT_EQ(run(dir, "tsne --data '" + data() + "' --cohorts japan_ce --perplexity 5000"), 1);
  EXPECT_NE(slurp(dir / "stderr.txt").find("perplexity"), std::string::npos);
  EXPECT_EQ(run(dir, "probe-train --data '" + data() + "' --task svc --label modality --positive ce --format csv"), 1);

  // A hard iteration cap still writes the model, flagged as unconverged.
  EXPECT_EQ(run(dir, "probe-train --data '" + data() +
                         "' --task svc --label modality --positive ce --max-iter 2 --out capped.json"),
            3);
  ASSERT_TRUE(fs::exists(dir / "capped.json"));
  EXPECT_FALSE(read(dir / "capped.json")["converged"].get<bool>());
}

TEST_F(CliTest, TsneProjection) {
  const std::string args = "tsne --data '" + data() + "' --cohorts japan_ce,japan_nbi --perplexity 20 --iterations 250";
  ASSERT_EQ(run(dir, args + " --format csv --out p.csv"), 0) << slurp(dir / "stderr.txt");
  ASSERT_EQ(run(dir, args + " --format csv --out q.csv"), 0);
  const auto text = slurp(dir / "p.csv");
  EXPECT_EQ(text, slurp(dir / "q.csv"));
  EXPECT_EQ(text.rfind("id,x,y\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 601);
}

TEST_F(CliTest, ProbeTrainThenEvaluate) {
  ASSERT_EQ(run(dir, "probe-train --data '" + data() +
                         "' --task svc --label modality --positive ce --split 0.8 --seed 2 --out svc.json"),
            0)
      << slurp(dir / "stderr.txt");
  const auto model = read(dir / "svc.json");
  EXPECT_EQ(model["format"], "shiftaudit.probe");
  EXPECT_EQ(model["kind"], "svc");
  EXPECT_TRUE(model.contains("training"));

  ASSERT_EQ(run(dir, "probe-eval --model svc.json --data '" + data() +
                         "' --label modality_clean --split 0.8 --part test --seed 2 --b 200 --out eval.json"),
            0)
      << slurp(dir / "stderr.txt");
  const auto eval = read(dir / "eval.json");
  EXPECT_EQ(eval["accuracy"]["n"], 260);
  // ce differs from the rest by a mean shift of 2.5 in one coordinate.
  EXPECT_GT(eval["accuracy"]["accuracy"].get<double>(), 0.85);

  ASSERT_EQ(run(dir, "probe-train --data '" + data() + "' --task svr --neg-log --gamma scale:2 --out svr.json"), 0)
      << slurp(dir / "stderr.txt");
  EXPECT_EQ(read(dir / "svr.json")["kind"], "svr");
  ASSERT_EQ(run(dir, "probe-eval --model svr.json --data '" + data() + "' --neg-log --b 100 --out svr_eval.json"), 0)
      << slurp(dir / "stderr.txt");
  EXPECT_GT(read(dir / "svr_eval.json")["correlation"]["r"].get<double>(), 0.5);
}

TEST(CliPipeline, SynthThenPredictPerf) {
  testutil::TempDir dir;
  ASSERT_EQ(run(dir, "synth --spec '" + (kFixtures / "transfer.json").string() + "' --out t"), 0);
  const std::string args = "predict-perf --data t/dataset.json --source wl --target nbi --b 200 --seed 1";
  ASSERT_EQ(run(dir, args + " --out perf.json"), 0) << slurp(dir / "stderr.txt");
  ASSERT_EQ(run(dir, args + " --out perf2.json"), 0);
  EXPECT_EQ(slurp(dir / "perf.json"), slurp(dir / "perf2.json"));
  const auto doc = read(dir / "perf.json");
  ASSERT_EQ(doc["scenarios"].size(), 3u);
  std::vector<std::string> names;
  for (const auto& s : doc["scenarios"]) {
    names.push_back(s["name"]);
    EXPECT_EQ(s["correlation"]["ci"].size(), 2u);
  }
  EXPECT_EQ(names, (std::vector<std::string>{"in_domain", "transfer", "union"}));
}

TEST(CliPipeline, DenoiseOnPlantedNoise) {
  testutil::TempDir dir;
  ASSERT_EQ(run(dir, "synth --spec '" + (kFixtures / "denoise.json").string() + "' --format csv --out d"), 0);
  ASSERT_EQ(run(dir, "denoise --data d/dataset.csv --label finding --positive polyp --reference finding_clean "
                     "--split 0.7 --b 200 --out dn.json"),
            0)
      << slurp(dir / "stderr.txt");
  const auto doc = read(dir / "dn.json");
  EXPECT_GT(doc["probe_accuracy"]["accuracy"].get<double>(), doc["noisy_agreement"]["accuracy"].get<double>());
  EXPECT_EQ(run(dir, "denoise --data d/dataset.csv --label finding --positive polyp --reference nothing"), 2);
  EXPECT_EQ(run(dir, "denoise --label finding --positive polyp"), 1);
}

TEST_F(CliTest, ServeRelabelThenOfflineAccuracyAgrees) {
  const int port = 20000 + static_cast<int>(::getpid() % 20000);
  const auto log = dir / "actions.ndjson";
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    const std::string port_text = std::to_string(port);
    const std::string d = data();
    const std::string l = log.string();
    if (!std::freopen((dir / "serve.err").c_str(), "w", stderr)) std::_Exit(126);
    ::execl(kBin.c_str(), kBin.c_str(), "serve", "--data", d.c_str(), "--port", port_text.c_str(), "--log", l.c_str(),
            static_cast<char*>(nullptr));
    std::_Exit(127);
  }
  httplib::Client client("127.0.0.1", port);
  bool up = false;
  for (int i = 0; i < 200 && !up; ++i) {
    up = static_cast<bool>(client.Get("/api/dataset/summary"));
    if (!up) std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  ASSERT_TRUE(up) << slurp(dir / "serve.err");

  const json body = {{"ids", {"japan_ce-000", "japan_ce-001", "japan_ce-002"}},
                     {"label_name", "modality"},
                     {"value", "wl"},
                     {"author", "cli-test"}};
  auto res = client.Post("/api/selection/relabel", body.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200) << res->body;
  res = client.Get("/api/metrics/accuracy?label_name=modality&reference=modality_clean&b=300&seed=9");
  ASSERT_TRUE(res);
  const auto online = json::parse(res->body);

  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);

  ASSERT_EQ(run(dir, "accuracy --data '" + data() +
                         "' --log actions.ndjson --label modality --reference modality_clean --b 300 --seed 9"),
            0)
      << slurp(dir / "stderr.txt");
  const auto offline = json::parse(slurp(dir / "stdout.txt"));
  EXPECT_EQ(offline["accuracy"].get<double>(), online["accuracy"].get<double>());
  EXPECT_EQ(offline["ci"], online["ci"]);
  EXPECT_EQ(offline["sequence"], 1);
}
