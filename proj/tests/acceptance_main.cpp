#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace {

struct Criterion {
  int number;
  const char* title;
  std::vector<std::string> tests;  // "Suite.Name" or "Suite.*"
  double time_limit_s = 0;         // 0: none
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1,
       "gradient correctness",
       {"PrimitiveGradient.*", "Matmul.GradientOfSumIsRowSumsOfB", "EncodeImage.GradientsMatchFiniteDifferences",
        "EncodePoints.GradientsMatchFiniteDifferences", "Gradients.*", "InstanceNorm.GradientsMatchFiniteDifferences",
        "Forward.GradientsMatchFiniteDifferences"},
       60},
      {2,
       "attention oracle",
       {"SelfAttention.MatchesTripleLoopOracle", "CrossAttention.MatchesTripleLoopOracle",
        "Attention.SixteenElementMapsMatchTripleLoop"}},
      {3, "matching oracle", {"CoarseMatch.EqualsBruteForceAndIsScaleInvariant", "FineMatch.EqualsPerPatchBruteForce"}},
      {4, "EPnP exactness", {"Epnp.NoiseFreeExactRecovery"}},
      {5, "RANSAC robustness", {"Ransac.RecoversPoseUnderHalfOutliers"}, 10},
      {6, "end-to-end overfit", {"EndToEnd.OverfitsSixteenScenes"}},
      {7, "ablation directions", {"Ablation.*"}},
      {8,
       "KITTI parser",
       {"Velodyne.RoundTripIsBitExact", "Velodyne.TruncatedRecordReportsOffsetDeterministically",
        "Velodyne.ThirtyTwoBytesGiveTwoPoints", "Calib.*", "Poses.*", "KittiFrame.*"}},
      {9,
       "metrics",
       {"RreRte.IdenticalPosesGiveExactZero", "RegistrationRecall.MonotoneInThresholds",
        "InlierRatio.MatchesIndependentRecountAndIgnoresOrder"}},
  };
  return all;
}

bool matches(const std::string& pattern, const std::string& full) {
  if (pattern.ends_with(".*")) return full.rfind(pattern.substr(0, pattern.size() - 1), 0) == 0;
  return pattern == full;
}

struct Outcome {
  bool passed;
  double seconds;
};

class Recorder : public ::testing::EmptyTestEventListener {
 public:
  std::map<std::string, Outcome> results;

 private:
  std::chrono::steady_clock::time_point start_;
  void OnTestStart(const ::testing::TestInfo&) override { start_ = std::chrono::steady_clock::now(); }
  void OnTestEnd(const ::testing::TestInfo& info) override {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    results[std::string(info.test_suite_name()) + "." + info.name()] = {info.result()->Passed(), s};
  }
};

}  // namespace

int main(int argc, char** argv) {
  std::string filter;
  for (const auto& c : criteria())
    for (const auto& t : c.tests) filter += (filter.empty() ? "" : ":") + t;
  ::testing::GTEST_FLAG(filter) = filter;
  ::testing::InitGoogleTest(&argc, argv);
  auto* recorder = new Recorder;
  ::testing::UnitTest::GetInstance()->listeners().Append(recorder);
  const int rc = RUN_ALL_TESTS();

  bool all = rc == 0;
  std::printf("\nacceptance summary\n");
  for (const auto& c : criteria()) {
    int ran = 0, failed = 0;
    double seconds = 0;
    for (const auto& [name, o] : recorder->results) {
      bool hit = false;
      for (const auto& p : c.tests) hit = hit || matches(p, name);
      if (!hit) continue;
      ++ran;
      failed += o.passed ? 0 : 1;
      seconds += o.seconds;
    }
    const bool in_time = c.time_limit_s <= 0 || seconds < c.time_limit_s;
    const bool pass = ran > 0 && failed == 0 && in_time;
    all = all && pass;
    char limit[48] = "";
    if (c.time_limit_s > 0) std::snprintf(limit, sizeof limit, " (limit %.0f s)", c.time_limit_s);
    std::printf("criterion %d %-22s %s  %d/%d tests passed, %.1f s%s\n", c.number, c.title, pass ? "PASS" : "FAIL",
                ran - failed, ran, seconds, limit);
  }
  return all ? 0 : 1;
}
