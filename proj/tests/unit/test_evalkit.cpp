#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "metric_oracles.hpp"
#include "xva/error.hpp"
#include "xva/evalkit.hpp"

namespace xva {
namespace {

using testing::count_oracle;
using testing::pairwise_auc;
using testing::random_predictions;

Prediction pred(int label, double p1, std::string id = "t") {
  Prediction p;
  p.trial_id = std::move(id);
  p.true_label = label;
  p.probabilities = {1.0 - p1, p1};
  return p;
}

// --- confusion scalars ---------------------------------------------------------------

TEST(Confusion, PerfectPredictions) {
  std::vector<Prediction> v;
  for (int i = 0; i < 10; ++i) v.push_back(pred(i % 2, i % 2 ? 0.9 : 0.2));
  const auto m = confusion_and_scalars(v);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.mcc, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_FALSE(m.any_degenerate());
}

TEST(Confusion, InvertedPredictions) {
  std::vector<Prediction> v;
  for (int i = 0; i < 74; ++i) v.push_back(pred(i < 50 ? 1 : 0, i < 50 ? 0.1 : 0.8));
  const auto m = confusion_and_scalars(v);
  EXPECT_EQ(m.counts, (ConfusionCounts{0, 24, 0, 50}));
  EXPECT_EQ(m.accuracy, 0.0);
  EXPECT_EQ(m.mcc, -1.0);
}

TEST(Confusion, MatchesCountingOracleExactly) {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto v = random_predictions(200, rng);
    const auto m = confusion_and_scalars(v);
    const auto o = count_oracle(v);
    EXPECT_EQ(m.counts, (ConfusionCounts{o.tp, o.fp, o.tn, o.fn}));
    EXPECT_EQ(m.counts.total(), 200u);
    EXPECT_EQ(m.accuracy, o.accuracy);
    EXPECT_EQ(m.sensitivity, o.sensitivity);
    EXPECT_EQ(m.specificity, o.specificity);
    EXPECT_EQ(m.f1, o.f1);
    EXPECT_EQ(m.mcc, o.mcc);
  }
}

TEST(Confusion, TieAtOneHalfPredictsClassZero) {
  EXPECT_EQ(pred(1, 0.5).predicted(), 0);
}

TEST(Confusion, DegenerateCellsAreZeroAndFlagged) {
  const auto m = scalars_from_counts({0, 0, 5, 0});
  EXPECT_EQ(m.sensitivity, 0.0);
  EXPECT_TRUE(m.degenerate_sensitivity);
  EXPECT_FALSE(m.degenerate_specificity);
  EXPECT_EQ(m.specificity, 1.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_TRUE(m.degenerate_f1);
  EXPECT_EQ(m.mcc, 0.0);
  EXPECT_TRUE(m.degenerate_mcc);
  EXPECT_FALSE(std::isnan(m.mcc));
}

TEST(Confusion, MccSymmetricUnderClassSwap) {
  Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    auto v = random_predictions(60, rng);
    const double a = confusion_and_scalars(v).mcc;
    for (auto& p : v) {
      p.true_label = 1 - p.true_label;
      std::swap(p.probabilities[0], p.probabilities[1]);
      // A tie predicts class 0 both before and after; break it the other way.
      if (p.probabilities[0] == p.probabilities[1]) p.probabilities = {0.4, 0.6};
    }
    EXPECT_NEAR(confusion_and_scalars(v).mcc, a, 1e-12);
  }
}

TEST(Confusion, EmptyInputThrows) {
  EXPECT_THROW(confusion_and_scalars(std::vector<Prediction>{}), UsageError);
}

TEST(Prediction, ValidateRejectsBadInputs) {
  EXPECT_NO_THROW(validate(pred(1, 0.3)));
  auto p = pred(2, 0.3);
  EXPECT_THROW(validate(p), UsageError);
  p = pred(0, 0.3);
  p.probabilities = {0.5, 0.6};
  EXPECT_THROW(validate(p), UsageError);
  p.probabilities = {1.2, -0.2};
  EXPECT_THROW(validate(p), UsageError);
}

// --- ranking metrics -----------------------------------------------------------------

TEST(RocAuc, PerfectSeparation) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_EQ(roc_auc(s, y), 1.0);
  EXPECT_EQ(pr_auc(s, y), 1.0);
}

TEST(RocAuc, AllTiesGiveOneHalf) {
  const std::vector<double> s(8, 0.4);
  const std::vector<int> y{0, 1, 1, 0, 1, 0, 0, 0};
  EXPECT_EQ(roc_auc(s, y), 0.5);
  EXPECT_DOUBLE_EQ(pr_auc(s, y), 3.0 / 8.0);
}

TEST(RocAuc, MatchesPairwiseOracle) {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    auto v = random_predictions(30, rng);
    v[0].true_label = 0;
    v[1].true_label = 1;
    EXPECT_NEAR(roc_auc(v), pairwise_auc(v), 1e-12);
  }
}

TEST(RocAuc, InvariantUnderMonotoneTransform) {
  Rng rng(4);
  std::vector<double> s(40);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    s[i] = rng.uniform();
    y[i] = static_cast<int>(i % 2);
  }
  std::vector<double> t(40);
  std::transform(s.begin(), s.end(), t.begin(), [](double x) { return std::exp(3 * x) - 7; });
  EXPECT_DOUBLE_EQ(roc_auc(s, y), roc_auc(t, y));
  EXPECT_DOUBLE_EQ(pr_auc(s, y), pr_auc(t, y));
}

TEST(PrAuc, StepWiseOracle) {
  // Descending: 0.9(1) 0.8(0) 0.7(1) 0.6(0). Recall steps of 1/2 at
  // precisions 1 and 2/3.
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  const std::vector<int> y{1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(pr_auc(s, y), 0.5 * 1.0 + 0.5 * (2.0 / 3.0));
}

TEST(RocAuc, SingleClassIsUndefined) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> y{1, 1};
  EXPECT_THROW(roc_auc(s, y), UndefinedMetricError);
  EXPECT_THROW(pr_auc(s, std::vector<int>{0, 0}), UndefinedMetricError);
}

// --- k-fold ----------------------------------------------------------------------

std::vector<FoldItem> items(std::size_t pos, std::size_t neg, std::size_t subjects = 0) {
  std::vector<FoldItem> out;
  for (std::size_t i = 0; i < pos + neg; ++i) {
    const std::string sid = subjects ? "s" + std::to_string(i % subjects) : "s" + std::to_string(i);
    out.push_back({"t" + std::to_string(i), sid, i < pos ? 1 : 0});
  }
  return out;
}

void expect_partition(const FoldPlan& plan, std::size_t n) {
  std::multiset<std::size_t> seen;
  for (std::size_t f = 0; f < plan.k; ++f) {
    const auto test = plan.test_indices(f);
    const auto train = plan.train_indices(f);
    EXPECT_EQ(test.size() + train.size(), n);
    std::set<std::size_t> t(test.begin(), test.end());
    for (auto i : train) EXPECT_EQ(t.count(i), 0u);
    seen.insert(test.begin(), test.end());
  }
  ASSERT_EQ(seen.size(), n);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen.count(i), 1u);
}

TEST(Kfold, SeventyFourTrialsStratified) {
  const auto v = items(24, 50);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = kfold(v, 10, FoldMode::kStratified, seed);
    expect_partition(plan, 74);
    for (std::size_t f = 0; f < 10; ++f) {
      const auto test = plan.test_indices(f);
      EXPECT_TRUE(test.size() == 7 || test.size() == 8) << test.size();
      std::size_t pos = 0;
      for (auto i : test) pos += v[i].label;
      const double expected = 24.0 * double(test.size()) / 74.0;
      EXPECT_LE(std::abs(double(pos) - expected), 1.0);
    }
  }
}

TEST(Kfold, DeterministicUnderSeed) {
  const auto v = items(20, 30);
  EXPECT_EQ(kfold(v, 10, FoldMode::kStratified, 5).fold_of,
            kfold(v, 10, FoldMode::kStratified, 5).fold_of);
  EXPECT_NE(kfold(v, 10, FoldMode::kStratified, 5).fold_of,
            kfold(v, 10, FoldMode::kStratified, 6).fold_of);
}

TEST(Kfold, LeaveOneOut) {
  const auto v = items(6, 5);
  const auto plan = kfold(v, 11, FoldMode::kStratified, 1);
  expect_partition(plan, 11);
  for (auto s : plan.fold_sizes()) EXPECT_EQ(s, 1u);
}

TEST(Kfold, SubjectGroupedKeepsSubjectsWhole) {
  const auto v = items(12, 13, 5);
  const auto plan = kfold(v, 5, FoldMode::kSubjectGrouped, 3);
  expect_partition(plan, 25);
  for (std::size_t f = 0; f < 5; ++f) {
    std::set<std::string> subjects;
    for (auto i : plan.test_indices(f)) subjects.insert(v[i].subject_id);
    EXPECT_EQ(subjects.size(), 1u);
  }
  const auto big = items(30, 30, 13);
  const auto p2 = kfold(big, 4, FoldMode::kSubjectGrouped, 9);
  expect_partition(p2, 60);
  std::map<std::string, std::size_t> fold_of_subject;
  for (std::size_t i = 0; i < big.size(); ++i) {
    auto [it, inserted] = fold_of_subject.emplace(big[i].subject_id, p2.fold_of[i]);
    EXPECT_EQ(it->second, p2.fold_of[i]);
  }
}

TEST(Kfold, Errors) {
  EXPECT_THROW(kfold(items(3, 3), 7, FoldMode::kStratified, 0), UsageError);
  EXPECT_THROW(kfold(items(6, 0), 3, FoldMode::kStratified, 0), UsageError);
  EXPECT_THROW(kfold(items(6, 6, 3), 4, FoldMode::kSubjectGrouped, 0), UsageError);
  EXPECT_THROW(kfold(items(6, 6), 1, FoldMode::kStratified, 0), UsageError);
}

// --- trust -----------------------------------------------------------------------

TEST(Trust, AllCorrectConfident) {
  std::vector<Prediction> v;
  for (int i = 0; i < 8; ++i) v.push_back(pred(i % 2, i % 2 ? 1.0 : 0.0));
  const auto s = trust_spectrum(v);
  EXPECT_TRUE(s[0].present);
  EXPECT_TRUE(s[1].present);
  EXPECT_EQ(s[0].nts, 1.0);
  EXPECT_EQ(s[1].nts, 1.0);
  EXPECT_FALSE(s[2].present);
  EXPECT_FALSE(s[3].present);
}

TEST(Trust, ConfidentlyWrong) {
  const std::vector<Prediction> v{pred(0, 0.9), pred(1, 0.8)};
  const auto s = trust_spectrum(v);
  ASSERT_TRUE(s[static_cast<int>(TrustGroup::kFP)].present);
  EXPECT_NEAR(s[static_cast<int>(TrustGroup::kFP)].trust[0], 0.1, 1e-12);
  EXPECT_NEAR(s[static_cast<int>(TrustGroup::kFP)].nts, 0.1, 1e-12);
  EXPECT_LT(s[static_cast<int>(TrustGroup::kFP)].nts, 0.2);
}

TEST(Trust, MatchesScalarLoopOracle) {
  Rng rng(6);
  const auto v = random_predictions(100, rng, 1000);
  const auto s = trust_spectrum(v);
  double sum[4] = {}, n[4] = {};
  for (const auto& p : v) {
    const int g = p.predicted() == 1 ? (p.true_label == 1 ? 0 : 2) : (p.true_label == 0 ? 1 : 3);
    sum[g] += p.probabilities[static_cast<std::size_t>(p.true_label)];
    n[g] += 1;
  }
  for (int g = 0; g < 4; ++g) {
    EXPECT_EQ(s[g].group, static_cast<TrustGroup>(g));
    ASSERT_EQ(s[g].present, n[g] > 0);
    if (!s[g].present) continue;
    EXPECT_NEAR(s[g].nts, sum[g] / n[g], 1e-12);
    EXPECT_GE(s[g].nts, 0.0);
    EXPECT_LE(s[g].nts, 1.0);
    ASSERT_EQ(s[g].density.size(), kTrustBins);
    double integral = 0.0;
    for (double d : s[g].density) integral += d / double(kTrustBins);
    EXPECT_NEAR(integral, 1.0, 1e-12);
  }
  // TP trust is the predicted-class probability.
  double tp = 0, ntp = 0;
  for (const auto& p : v)
    if (p.true_label == 1 && p.predicted() == 1) tp += p.probabilities[1], ntp += 1;
  EXPECT_NEAR(s[0].nts, tp / ntp, 1e-12);
}

TEST(Trust, EmptyThrows) {
  EXPECT_THROW(trust_spectrum(std::vector<Prediction>{}), UsageError);
}

// --- reports ---------------------------------------------------------------------

TEST(Evaluate, SingleFoldPooledEqualsFold) {
  Rng rng(7);
  auto v = random_predictions(40, rng);
  v[0].true_label = 0;
  v[1].true_label = 1;
  const std::vector<std::vector<Prediction>> folds{v};
  const auto r = evaluate(folds);
  ASSERT_EQ(r.folds.size(), 1u);
  EXPECT_EQ(r.folds[0].metrics.counts, r.pooled.metrics.counts);
  EXPECT_EQ(r.folds[0].metrics.mcc, r.pooled.metrics.mcc);
  EXPECT_EQ(r.folds[0].roc_auc, r.pooled.roc_auc);
  EXPECT_EQ(r.pooled.name, "pooled");
  EXPECT_EQ(r.folds[0].name, "0");
}

TEST(Evaluate, IdenticalFoldsHaveZeroStd) {
  Rng rng(8);
  auto v = random_predictions(20, rng);
  v[0].true_label = 0;
  v[1].true_label = 1;
  const std::vector<std::vector<Prediction>> folds(10, v);
  const auto csv = metric_block_csv(evaluate(folds));
  EXPECT_EQ(csv.rfind("metric,pooled,fold_mean,fold_std\n", 0), 0u);
  std::size_t rows = 0, pos = csv.find('\n') + 1;
  while (pos < csv.size()) {
    const auto end = csv.find('\n', pos);
    const std::string line = csv.substr(pos, end - pos);
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0") << line;
    ++rows;
    pos = end + 1;
  }
  EXPECT_EQ(rows, 7u);
}

TEST(Evaluate, SingleClassFoldLeavesRankingMetricsEmpty) {
  const std::vector<std::vector<Prediction>> folds{{pred(1, 0.7), pred(1, 0.2)},
                                                   {pred(0, 0.3), pred(1, 0.6)}};
  const auto r = evaluate(folds);
  EXPECT_FALSE(r.folds[0].roc_auc.has_value());
  EXPECT_TRUE(r.folds[1].roc_auc.has_value());
  EXPECT_TRUE(r.pooled.roc_auc.has_value());
}

TEST(Evaluate, Errors) {
  EXPECT_THROW(evaluate(std::vector<std::vector<Prediction>>{}), UsageError);
  EXPECT_THROW(evaluate(std::vector<std::vector<Prediction>>{{pred(0, 0.1)}, {}}), UsageError);
}

TEST(MeanStd, ScalarOracle) {
  Rng rng(9);
  std::vector<double> v(10);
  for (auto& x : v) x = rng.uniform();
  double m = 0;
  for (double x : v) m += x;
  m /= 10;
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  const auto r = mean_std(v);
  EXPECT_NEAR(r.mean, m, 1e-15);
  EXPECT_NEAR(r.std, std::sqrt(ss / 10), 1e-15);
  EXPECT_THROW(mean_std(std::vector<double>{}), UsageError);
}

TEST(FormatReal, RoundTripsShortest) {
  for (double v : {0.0, 1.0, 0.1, 2.0 / 3.0, -1e-300, 123456.789}) {
    EXPECT_EQ(std::stod(format_real(v)), v);
  }
  EXPECT_EQ(format_real(0.5), "0.5");
  EXPECT_EQ(format_real(1.0), "1");
}

TEST(Reports, ReportCsvLayout) {
  const std::vector<std::vector<Prediction>> folds{{pred(0, 0.3), pred(1, 0.6)},
                                                   {pred(1, 0.2), pred(1, 0.9)}};
  const auto csv = report_csv(evaluate(folds));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "fold,n,tp,fp,tn,fn,accuracy,sensitivity,specificity,f1,mcc,roc_auc,pr_auc,"
            "degenerate");
  EXPECT_NE(csv.find("\n0,2,1,0,1,0,1,1,1,1,1,1,1,\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("\n1,2,1,0,0,1,0.5,0.5,0,"), std::string::npos) << csv;
  EXPECT_NE(csv.find(",specificity;mcc\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("\npooled,4,"), std::string::npos);
}

TEST(Reports, PredictionsJsonl) {
  const std::vector<std::vector<Prediction>> folds{{pred(0, 0.25, "a")}, {pred(1, 0.75, "b")}};
  const auto text = predictions_jsonl(folds);
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(first["trial_id"], "a");
  EXPECT_EQ(first["fold"], 0);
  EXPECT_EQ(first["predicted"], 0);
  EXPECT_EQ(first["probabilities"][1], 0.25);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Reports, TrustCsv) {
  auto wrong = pred(0, 0.9);
  wrong.probabilities = {0.1, 0.9};
  const auto s = trust_spectrum(std::vector<Prediction>{pred(1, 0.9), wrong});
  EXPECT_EQ(trust_csv(s), "group,present,n,nts\nTP,1,1,0.9\nTN,0,,\nFP,1,1,0.1\nFN,0,,\n");
  const auto d = trust_density_csv(s);
  EXPECT_EQ(std::count(d.begin(), d.end(), '\n'), 1 + 2 * static_cast<long>(kTrustBins));
  EXPECT_NE(d.find("TP,0.9,0.92,50\n"), std::string::npos);
}

}  // namespace
}  // namespace xva
