#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "starn/error.hpp"
#include "starn/metrics.hpp"

using namespace starn;
using namespace starn::metrics;

namespace {

Confusion from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
    Confusion c(static_cast<int>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t p = 0; p < rows.size(); ++p) c.at(static_cast<int>(t), static_cast<int>(p)) = rows[t][p];
    }
    return c;
}

oracle::CountMatrix to_oracle(const Confusion& c) {
    oracle::CountMatrix m(c.classes, std::vector<std::int64_t>(c.classes));
    for (int t = 0; t < c.classes; ++t) {
        for (int p = 0; p < c.classes; ++p) m[t][p] = c.at(t, p);
    }
    return m;
}

RowMatrix one_hot(const std::vector<int>& y, int k = 4) {
    RowMatrix m = RowMatrix::Zero(static_cast<Eigen::Index>(y.size()), k);
    for (std::size_t i = 0; i < y.size(); ++i) m(static_cast<Eigen::Index>(i), y[i]) = 1.0;
    return m;
}

// Labels that cover every class at least once.
std::vector<int> covering_labels(std::mt19937_64& eng, std::size_t n, int k = 4) {
    auto y = fixtures::random_labels(eng, n, k);
    for (int c = 0; c < k; ++c) y[c] = c;
    std::shuffle(y.begin(), y.end(), eng);
    return y;
}

}  // namespace

TEST(Confusion, Examples) {
    const std::vector<int> y{0, 1, 2, 3, 3};
    const auto perfect = confusion_matrix(y, y);
    for (int t = 0; t < 4; ++t) {
        for (int p = 0; p < 4; ++p) EXPECT_EQ(perfect.at(t, p), t == p ? (t == 3 ? 2 : 1) : 0);
    }
    const std::vector<int> zeros(5, 0);
    const auto col = confusion_matrix(y, zeros);
    EXPECT_EQ(col.predicted(0), 5);
    for (int p = 1; p < 4; ++p) EXPECT_EQ(col.predicted(p), 0);
    EXPECT_THROW(confusion_matrix(y, std::vector<int>{0}), DimensionError);
    EXPECT_THROW(confusion_matrix(std::vector<int>{4}, std::vector<int>{0}), DataError);
}

TEST(ConfusionOracle, RandomTally) {
    std::mt19937_64 eng(1);
    const auto y = fixtures::random_labels(eng, 100, 4), p = fixtures::random_labels(eng, 100, 4);
    const auto c = confusion_matrix(y, p);
    EXPECT_EQ(to_oracle(c), oracle::tally(y, p, 4));
    EXPECT_EQ(c.total(), 100);
    for (int k = 0; k < 4; ++k) EXPECT_EQ(c.support(k), std::count(y.begin(), y.end(), k));
}

TEST(F1, Examples) {
    const auto diag = from_rows({{3, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, 4, 0}, {0, 0, 0, 1}});
    EXPECT_EQ(macro_f1(diag), 1.0);
    EXPECT_EQ(weighted_f1(diag), 1.0);
    const auto absent = from_rows({{3, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, 4, 0}, {0, 0, 0, 0}});
    EXPECT_DOUBLE_EQ(macro_f1(absent), 0.75);
    EXPECT_TRUE(per_class_scores(absent)[3].degenerate);
    // two-class reduction [[40,10],[5,45]]: F1_0 = 80/95, F1_1 = 90/105
    const auto two = from_rows({{40, 10}, {5, 45}});
    EXPECT_NEAR(macro_f1(two), 0.5 * (80.0 / 95.0 + 90.0 / 105.0), 1e-15);
    EXPECT_NEAR(weighted_f1(two), 0.5 * (80.0 / 95.0 + 90.0 / 105.0), 1e-15);
}

TEST(BalancedAccuracy, Examples) {
    const auto diag = from_rows({{3, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, 4, 0}, {0, 0, 0, 1}});
    EXPECT_EQ(balanced_accuracy(diag), 1.0);
    const auto miss = from_rows({{3, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, 4, 0}, {1, 0, 0, 0}});
    EXPECT_DOUBLE_EQ(balanced_accuracy(miss), 0.75);
}

TEST(SevereRecall, Examples) {
    const auto all = from_rows({{1, 1, 0, 0}, {0, 2, 0, 0}, {0, 0, 4, 0}, {0, 0, 0, 3}});
    EXPECT_EQ(severe_recall(all), 1.0);
    const auto none = from_rows({{1, 1, 0, 0}, {0, 2, 0, 0}, {0, 0, 4, 0}, {0, 0, 0, 0}});
    EXPECT_FALSE(severe_recall(none).has_value());
}

TEST(Kappa, Examples) {
    const auto two = from_rows({{40, 10}, {5, 45}});
    EXPECT_NEAR(cohens_kappa(two), 0.70, 1e-12);
    EXPECT_EQ(cohens_kappa(from_rows({{3, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, 4, 0}, {0, 0, 0, 1}})), 1.0);
    const auto constant = from_rows({{5, 0, 0, 0}, {5, 0, 0, 0}, {5, 0, 0, 0}, {5, 0, 0, 0}});
    EXPECT_EQ(cohens_kappa(constant), 0.0);
}

TEST(RocAuc, Examples) {
    const std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3};
    EXPECT_EQ(roc_auc_multiclass(y, one_hot(y)).value, 1.0);
    const RowMatrix flat = RowMatrix::Constant(8, 4, 0.25);
    EXPECT_EQ(roc_auc_multiclass(y, flat).value, 0.5);
    const std::vector<int> two{0, 0, 1, 1};
    const auto r = roc_auc_multiclass(two, one_hot(two));
    EXPECT_EQ(r.value, 1.0);
    EXPECT_EQ(r.warnings.size(), 5u);  // every pair touching classes 2 or 3
    const std::vector<int> single{2, 2};
    EXPECT_FALSE(roc_auc_multiclass(single, one_hot(single)).value.has_value());
}

TEST(Auprc, Examples) {
    const std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3, 3, 3};
    for (double v : auprc_per_class(y, one_hot(y))) EXPECT_EQ(v, 1.0);
    const auto flat = auprc_per_class(y, RowMatrix::Constant(10, 4, 0.25));
    EXPECT_DOUBLE_EQ(flat[0], 0.2);
    EXPECT_DOUBLE_EQ(flat[3], 0.4);
    const std::vector<int> no3{0, 1, 2, 0};
    EXPECT_EQ(auprc_per_class(no3, one_hot(no3))[3], 0.0);
}

TEST(ScalingFit, Examples) {
    const std::vector<double> x{1, 2, 3, 4}, line{3, 5, 7, 9}, flat{4, 4, 4, 4};
    const auto f = scaling_fit(x, line);
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 1.0, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    const auto c = scaling_fit(x, flat);
    EXPECT_EQ(c.slope, 0.0);
    EXPECT_EQ(c.r2, 0.0);
    EXPECT_THROW(scaling_fit(std::vector<double>{2, 2}, std::vector<double>{1, 3}), DataError);
    EXPECT_THROW(scaling_fit(x, std::vector<double>{1}), DimensionError);
}

TEST(MetricsOracle, TwentyRandomInstances) {
    std::mt19937_64 eng(2024);
    std::uniform_int_distribution<int> size(30, 60);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = size(eng);
        const auto y = covering_labels(eng, n);
        const RowMatrix p = fixtures::random_probs(eng, n, 4, trial % 2 ? 0.05 : 0.0);
        const auto pred = argmax_rows(p);
        const auto cm = oracle::tally(y, pred, 4);
        const auto rep = evaluate(y, p);
        EXPECT_NEAR(rep.macro_f1, oracle::macro_f1(cm), 1e-9);
        EXPECT_NEAR(rep.weighted_f1, oracle::weighted_f1(cm), 1e-9);
        EXPECT_NEAR(rep.balanced_accuracy, oracle::balanced_accuracy(cm), 1e-9);
        EXPECT_NEAR(rep.cohens_kappa, oracle::kappa(cm), 1e-9);
        ASSERT_TRUE(rep.severe_recall.has_value());
        EXPECT_NEAR(*rep.severe_recall, oracle::recall_of(cm, 3), 1e-9);
        ASSERT_TRUE(rep.roc_auc_weighted.has_value());
        EXPECT_NEAR(*rep.roc_auc_weighted, oracle::roc_auc_ovo(y, p), 1e-9);
        for (int c = 0; c < 4; ++c) {
            EXPECT_NEAR(rep.per_class[c].f1, oracle::f1_of(cm, c), 1e-9);
            EXPECT_NEAR(rep.per_class[c].auprc, oracle::average_precision(y, p, c), 1e-9) << trial << " " << c;
        }
        std::vector<double> xs(n), ys(n);
        std::normal_distribution<double> noise(0, 3);
        for (std::size_t i = 0; i < n; ++i) xs[i] = 10.0 * i, ys[i] = 0.03 * xs[i] + 17 + noise(eng);
        const auto fit = scaling_fit(xs, ys);
        const auto want = oracle::ols(xs, ys);
        EXPECT_NEAR(fit.slope, want.slope, 1e-9);
        EXPECT_NEAR(fit.intercept, want.intercept, 1e-9);
        EXPECT_NEAR(fit.r2, want.r2, 1e-9);
    }
}

TEST(MetricsProperty, BoundsUnderFuzzing) {
    std::mt19937_64 eng(5);
    std::uniform_int_distribution<int> size(1, 40);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = size(eng);
        const auto y = fixtures::random_labels(eng, n, 4);
        const RowMatrix p = fixtures::random_probs(eng, n, 4, trial % 3 == 0 ? 0.1 : 0.0);
        const auto r = evaluate(y, p);
        for (double v : {r.macro_f1, r.weighted_f1, r.balanced_accuracy}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_GE(r.cohens_kappa, -1.0);
        EXPECT_LE(r.cohens_kappa, 1.0);
        if (r.severe_recall) {
            EXPECT_TRUE(*r.severe_recall >= 0 && *r.severe_recall <= 1);
        }
        if (r.roc_auc_weighted) {
            EXPECT_TRUE(*r.roc_auc_weighted >= 0 && *r.roc_auc_weighted <= 1);
        }
        for (const auto& c : r.per_class) {
            EXPECT_TRUE(c.precision >= 0 && c.precision <= 1);
            EXPECT_TRUE(c.recall >= 0 && c.recall <= 1);
            EXPECT_TRUE(c.auprc >= 0 && c.auprc <= 1);
        }
        EXPECT_EQ(r.confusion.total(), static_cast<std::int64_t>(n));
        for (int c = 0; c < 4; ++c) EXPECT_EQ(r.per_class[c].support, r.confusion.support(c));
    }
}

TEST(MetricsProperty, MacroF1InvariantUnderRelabeling) {
    std::mt19937_64 eng(6);
    std::vector<int> perm{0, 1, 2, 3};
    for (int trial = 0; trial < 50; ++trial) {
        const auto y = fixtures::random_labels(eng, 60, 4), p = fixtures::random_labels(eng, 60, 4);
        std::shuffle(perm.begin(), perm.end(), eng);
        std::vector<int> yr, pr;
        for (int v : y) yr.push_back(perm[v]);
        for (int v : p) pr.push_back(perm[v]);
        const auto a = confusion_matrix(y, p), b = confusion_matrix(yr, pr);
        EXPECT_NEAR(macro_f1(a), macro_f1(b), 1e-15);
        const auto sa = per_class_scores(a), sb = per_class_scores(b);
        for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(sa[c].f1, sb[perm[c]].f1);
    }
}

TEST(MetricsProperty, AucInvariantUnderMonotoneRescoring) {
    // the pairwise score p_a / (p_a + p_b) keeps its order under powers of the
    // probabilities and under per-row positive scaling
    std::mt19937_64 eng(7);
    std::uniform_real_distribution<double> s(0.1, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto y = covering_labels(eng, 40);
        const RowMatrix p = fixtures::random_probs(eng, 40, 4);
        const double base = *roc_auc_multiclass(y, p).value;
        for (double k : {0.5, 2.0, 3.0}) EXPECT_NEAR(*roc_auc_multiclass(y, p.array().pow(k).matrix()).value, base, 1e-12);
        RowMatrix scaled = p;
        for (Eigen::Index i = 0; i < scaled.rows(); ++i) scaled.row(i) *= s(eng);
        EXPECT_NEAR(*roc_auc_multiclass(y, scaled).value, base, 1e-12);
    }
}

TEST(Report, JsonAndFiles) {
    const std::vector<int> y{0, 1, 2, 3, 3, 2};
    const auto r = evaluate(y, one_hot(y));
    const auto j = to_json(r);
    EXPECT_EQ(j.at("macro_f1").get<double>(), 1.0);
    EXPECT_EQ(j.at("confusion").size(), 4u);
    fixtures::TempDir dir("metrics");
    write_report(dir / "m.json", r);
    write_confusion_csv(dir / "c.csv", r.confusion);
    EXPECT_TRUE(std::filesystem::exists(dir / "m.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "c.csv"));
    EXPECT_THROW(evaluate(std::vector<int>{}, RowMatrix(0, 4)), DataError);
}
