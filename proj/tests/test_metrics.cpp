#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "artgest/core/rng.hpp"
#include "artgest/eval/metrics.hpp"
#include "artgest/eval/report.hpp"

using namespace artgest;
using namespace artgest::eval;

namespace {

// Brute-force reference metrics, kept deliberately independent of the
// library implementation: plain nested loops and the textbook formulas.
struct OracleMetrics {
  std::vector<std::vector<long>> cm;
  std::vector<double> precision, recall, f1;
  double macro = 0.0;
};

OracleMetrics oracle_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                             int c) {
  OracleMetrics o;
  o.cm.assign(c, std::vector<long>(c, 0));
  for (int t = 0; t < c; ++t)
    for (int p = 0; p < c; ++p)
      for (size_t k = 0; k < preds.size(); ++k)
        if (labels[k] == t && preds[k] == p) ++o.cm[t][p];
  o.precision.assign(c, 0.0);
  o.recall.assign(c, 0.0);
  o.f1.assign(c, 0.0);
  for (int i = 0; i < c; ++i) {
    long tp = o.cm[i][i], pred_i = 0, true_i = 0;
    for (int k = 0; k < c; ++k) {
      pred_i += o.cm[k][i];
      true_i += o.cm[i][k];
    }
    if (pred_i > 0) o.precision[i] = double(tp) / pred_i;
    if (true_i > 0) o.recall[i] = double(tp) / true_i;
    if (o.precision[i] + o.recall[i] > 0)
      o.f1[i] = 2 * o.precision[i] * o.recall[i] / (o.precision[i] + o.recall[i]);
    o.macro += o.f1[i] / c;
  }
  return o;
}

ConfusionMatrix cm_from(const std::vector<std::vector<int64_t>>& rows) {
  ConfusionMatrix cm(static_cast<int64_t>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows.size(); ++j) cm.at(i, j) = rows[i][j];
  return cm;
}

}  // namespace

TEST(ConfusionMatrix, PerfectPredictionsAreDiagonal) {
  std::vector<int> labels = {0, 1, 2, 1, 0, 2, 2};
  auto cm = confusion_matrix(labels, labels, 3);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j)
      EXPECT_EQ(cm.at(i, j), i == j ? cm.row_sum(i) : 0);
  EXPECT_EQ(cm.total(), 7);
}

TEST(ConfusionMatrix, HandCountedTwoByTwo) {
  auto cm = confusion_matrix({1, 1}, {0, 1}, 2);
  EXPECT_EQ(cm.at(0, 0), 0);
  EXPECT_EQ(cm.at(0, 1), 1);
  EXPECT_EQ(cm.at(1, 0), 0);
  EXPECT_EQ(cm.at(1, 1), 1);
}

TEST(ConfusionMatrix, Errors) {
  EXPECT_THROW(confusion_matrix({0, 1}, {0}, 2), Error);
  EXPECT_THROW(confusion_matrix({0, 5}, {0, 1}, 2), Error);
  EXPECT_THROW(confusion_matrix({0, -1}, {0, 1}, 2), Error);
}

TEST(F1, PerfectDiagonalGivesOnes) {
  auto cm = cm_from({{4, 0, 0}, {0, 2, 0}, {0, 0, 9}});
  for (double f : per_class_f1(cm)) EXPECT_DOUBLE_EQ(f, 1.0);
  EXPECT_DOUBLE_EQ(macro_f1(cm), 1.0);
}

TEST(F1, ZeroSupportZeroPredictionsIsZeroByConvention) {
  auto cm = cm_from({{3, 0}, {0, 0}});
  auto f1 = per_class_f1(cm);
  EXPECT_DOUBLE_EQ(f1[1], 0.0);
  EXPECT_DOUBLE_EQ(macro_f1(cm), 0.5);
}

TEST(F1, HandComputedExample) {
  auto cm = cm_from({{3, 1}, {2, 4}});
  auto p = per_class_precision(cm);
  auto r = per_class_recall(cm);
  auto f1 = per_class_f1(cm);
  EXPECT_NEAR(p[0], 0.6, 1e-12);
  EXPECT_NEAR(p[1], 0.8, 1e-12);
  EXPECT_NEAR(r[0], 0.75, 1e-12);
  EXPECT_NEAR(r[1], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(f1[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(f1[1], 2 * 0.8 * (2.0 / 3.0) / (0.8 + 2.0 / 3.0), 1e-12);
}

TEST(F1, MacroEqualsMeanOfPerClass) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = static_cast<int>(rng.uniform_int(2, 8));
    const int n = static_cast<int>(rng.uniform_int(1, 100));
    std::vector<int> preds(n), labels(n);
    for (int i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng.uniform_int(0, c - 1));
      labels[i] = static_cast<int>(rng.uniform_int(0, c - 1));
    }
    auto cm = confusion_matrix(preds, labels, c);
    auto f1 = per_class_f1(cm);
    double mean = 0.0;
    for (double v : f1) mean += v / c;
    EXPECT_NEAR(macro_f1(cm), mean, 1e-12);
  }
}

TEST(F1, MatchesBruteForceOracleOnRandomData) {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = static_cast<int>(rng.uniform_int(2, 8));
    const int n = static_cast<int>(rng.uniform_int(1, 200));
    std::vector<int> preds(n), labels(n);
    for (int i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng.uniform_int(0, c - 1));
      labels[i] = static_cast<int>(rng.uniform_int(0, c - 1));
    }
    auto cm = confusion_matrix(preds, labels, c);
    auto o = oracle_metrics(preds, labels, c);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) EXPECT_EQ(cm.at(i, j), o.cm[i][j]);
    auto f1 = per_class_f1(cm);
    for (int i = 0; i < c; ++i) EXPECT_NEAR(f1[i], o.f1[i], 1e-9);
    EXPECT_NEAR(macro_f1(cm), o.macro, 1e-9);
  }
}

TEST(F1, PermutationInvariance) {
  Rng rng(5);
  const int c = 5, n = 80;
  std::vector<int> preds(n), labels(n);
  for (int i = 0; i < n; ++i) {
    preds[i] = static_cast<int>(rng.uniform_int(0, c - 1));
    labels[i] = static_cast<int>(rng.uniform_int(0, c - 1));
  }
  const double base = macro_f1(confusion_matrix(preds, labels, c));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int trial = 0; trial < 10; ++trial) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int64_t>(i) - 1)]);
    std::vector<int> p2(n), l2(n);
    for (int i = 0; i < n; ++i) {
      p2[i] = preds[order[i]];
      l2[i] = labels[order[i]];
    }
    EXPECT_DOUBLE_EQ(macro_f1(confusion_matrix(p2, l2, c)), base);
  }
}

// Flipping one mistaken sample of class t to correct never lowers class t's F1.
TEST(F1, CorrectingASampleNeverHurtsThatClass) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = static_cast<int>(rng.uniform_int(2, 6));
    ConfusionMatrix cm(c);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) cm.at(i, j) = rng.uniform_int(0, 6);
    // find an off-diagonal cell to fix
    const int t = static_cast<int>(rng.uniform_int(0, c - 1));
    int j = -1;
    for (int k = 0; k < c; ++k)
      if (k != t && cm.at(t, k) > 0) j = k;
    if (j < 0) continue;
    const double before = per_class_f1(cm)[t];
    --cm.at(t, j);
    ++cm.at(t, t);
    const double after = per_class_f1(cm)[t];
    EXPECT_GE(after, before - 1e-12);
  }
}

TEST(F1, BoundsHoldOnRandomMatrices) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = static_cast<int>(rng.uniform_int(2, 8));
    ConfusionMatrix cm(c);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) cm.at(i, j) = rng.uniform_int(0, 9);
    auto p = per_class_precision(cm);
    auto r = per_class_recall(cm);
    auto f1 = per_class_f1(cm);
    for (int i = 0; i < c; ++i) {
      EXPECT_GE(p[i], 0.0);
      EXPECT_LE(p[i], 1.0);
      EXPECT_GE(r[i], 0.0);
      EXPECT_LE(r[i], 1.0);
      EXPECT_GE(f1[i], 0.0);
      EXPECT_LE(f1[i], 1.0);
    }
    EXPECT_GE(macro_f1(cm), 0.0);
    EXPECT_LE(macro_f1(cm), 1.0);
  }
}

TEST(Aggregate, SingleValue) {
  auto a = aggregate_runs({0.5});
  EXPECT_DOUBLE_EQ(a.mean, 0.5);
  EXPECT_DOUBLE_EQ(a.std, 0.0);
  EXPECT_TRUE(a.single_run);
}

TEST(Aggregate, TwoValuesHandComputed) {
  auto a = aggregate_runs({0.2, 0.4});
  EXPECT_NEAR(a.mean, 0.3, 1e-15);
  EXPECT_NEAR(a.std, std::sqrt(0.02), 1e-12);  // sqrt(((0.1)^2+(0.1)^2)/1)
  EXPECT_FALSE(a.single_run);
}

TEST(Aggregate, ConstantListHasZeroStd) {
  auto a = aggregate_runs({0.7, 0.7, 0.7});
  EXPECT_NEAR(a.mean, 0.7, 1e-12);
  EXPECT_NEAR(a.std, 0.0, 1e-12);
}

TEST(Aggregate, EmptyThrows) { EXPECT_THROW(aggregate_runs({}), Error); }

TEST(Aggregate, MatchesTwoPassOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 20));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(0.0, 100.0);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double std_ref = std::sqrt(ss / (n - 1));
    auto a = aggregate_runs(v);
    EXPECT_NEAR(a.mean, mean, 1e-12);
    EXPECT_NEAR(a.std, std_ref, 1e-12);
  }
}

TEST(Report, MarkdownRowFormatting) {
  std::vector<MultiRunSummary> rows = {
      {"HRNet-W32", Variant::without_context, 17.3, 1.8, 5},
      {"HRNet-W32", Variant::with_context, 37.1, 2.8, 5},
  };
  const std::string md = render_report(rows, ReportFormat::markdown);
  EXPECT_NE(md.find("| HRNet-W32 | Without Context | 17.3 ± 1.8 |"), std::string::npos);
  EXPECT_NE(md.find("| HRNet-W32 | With Context | 37.1 ± 2.8 |"), std::string::npos);
}

TEST(Report, SingleRunMarker) {
  std::vector<MultiRunSummary> rows = {{"ResNet-50", Variant::with_context, 36.8, 0.0, 1}};
  const std::string md = render_report(rows, ReportFormat::markdown);
  EXPECT_NE(md.find("36.8 ± 0.0 (single run)"), std::string::npos);
}

TEST(Report, JsonRoundTripMatchesDirectMarkdown) {
  std::vector<MultiRunSummary> rows = {
      {"ResNet-101", Variant::without_context, 34.2, 1.8, 5},
      {"ResNet-101", Variant::with_context, 36.7, 1.9, 5},
      {"SwinV2", Variant::with_context, 18.7, 1.9, 1},
  };
  const std::string direct = render_report(rows, ReportFormat::markdown);
  const std::string via_json =
      render_report(parse_summaries(render_report(rows, ReportFormat::json)),
                    ReportFormat::markdown);
  EXPECT_EQ(direct, via_json);
}

TEST(Report, RunSetJsonSchemaRoundTrip) {
  ConfusionMatrix cm = cm_from({{3, 1}, {2, 4}});
  RunSetReport rs;
  rs.backbone = "tiny_test";
  rs.variant = Variant::with_context;
  rs.per_run.push_back(make_report(cm, "run0", 1, Variant::with_context));
  rs.per_run.push_back(make_report(cm, "run1", 2, Variant::with_context));

  auto j = run_set_to_json(rs);
  EXPECT_EQ(j.at("n_runs").get<int>(), 2);
  EXPECT_TRUE(j.contains("mean_f1"));
  EXPECT_TRUE(j.contains("std_f1"));

  RunSetReport back = run_set_from_json(j);
  ASSERT_EQ(back.per_run.size(), 2u);
  EXPECT_DOUBLE_EQ(back.per_run[0].macro_f1, rs.per_run[0].macro_f1);
  EXPECT_EQ(back.per_run[0].confusion.at(1, 0), 2);
  EXPECT_EQ(back.per_run[1].seed, 2u);
}

TEST(Metrics, WeightedF1DiffersUnderImbalance) {
  // class 0 dominant and easy, class 1 rare and missed
  auto cm = cm_from({{90, 0}, {10, 0}});
  EXPECT_GT(weighted_f1(cm), macro_f1(cm));
}
