#include <gtest/gtest.h>

#include <numeric>

#include "test_util.hpp"
#include "wsciss/errors.hpp"
#include "wsciss/eval.hpp"

using namespace wsciss;

namespace {

using Parts = std::vector<std::vector<std::string>>;

TaskSchedule four_two() { return TaskSchedule(Parts{{"a", "b", "c", "d"}, {"e", "f"}}); }

std::vector<int> range(int lo, int hi) {
    std::vector<int> v(static_cast<std::size_t>(hi - lo));
    std::iota(v.begin(), v.end(), lo);
    return v;
}

}  // namespace

TEST(Confusion, PerfectSingleClassIsDiagonal) {
    ConfusionMatrix cm(3);
    const HardLabelMap m(4, 4, 2);
    cm.accumulate(m, m);
    EXPECT_EQ(cm(2, 2), 16u);
    EXPECT_EQ(cm.total(), 16u);
}

TEST(Confusion, AllIgnoreLeavesMatrixUnchanged) {
    ConfusionMatrix cm(3);
    Rng rng(1);
    cm.accumulate(HardLabelMap(4, 4, kIgnore), testutil::random_labels(rng, 4, 4, 3));
    EXPECT_EQ(cm, ConfusionMatrix(3));
}

TEST(Confusion, MatchesPerPixelTally) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const HardLabelMap g = testutil::random_labels(rng, 8, 8, 3, 0.1);
        const HardLabelMap p = testutil::random_labels(rng, 8, 8, 3);
        ConfusionMatrix cm(3);
        cm.accumulate(g, p);
        std::vector<std::uint64_t> ref(9, 0);
        for (int i = 0; i < 64; ++i) {
            if (g[i] >= 0) ++ref[static_cast<std::size_t>(g[i] * 3 + p[i])];
        }
        EXPECT_EQ(cm.counts(), ref);
    }
}

TEST(Confusion, OutOfRangeAndShapeErrors) {
    ConfusionMatrix cm(3);
    EXPECT_THROW(cm.accumulate(HardLabelMap(2, 2, 3), HardLabelMap(2, 2, 0)), ValidationError);
    EXPECT_THROW(cm.accumulate(HardLabelMap(2, 2, 0), HardLabelMap(2, 2, 5)), ValidationError);
    EXPECT_THROW(cm.accumulate(HardLabelMap(2, 2, 0), HardLabelMap(2, 3, 0)), ValidationError);
}

TEST(Confusion, AccumulationOrderAndMergeIndependent) {
    Rng rng(3);
    std::vector<std::pair<HardLabelMap, HardLabelMap>> pairs;
    for (int i = 0; i < 6; ++i) pairs.emplace_back(testutil::random_labels(rng, 5, 5, 4, 0.1), testutil::random_labels(rng, 5, 5, 4));
    ConfusionMatrix fwd(4), rev(4), left(4), right(4);
    for (const auto& [g, p] : pairs) fwd.accumulate(g, p);
    for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) rev.accumulate(it->first, it->second);
    for (std::size_t i = 0; i < pairs.size(); ++i) (i % 2 ? left : right).accumulate(pairs[i].first, pairs[i].second);
    left.merge(right);
    EXPECT_EQ(fwd, rev);
    EXPECT_EQ(fwd, left);
}

TEST(Miou, PerfectPredictionIsOneForEveryGroup) {
    Rng rng(4);
    const HardLabelMap g = testutil::random_labels(rng, 10, 10, 7);
    ConfusionMatrix cm(7);
    cm.accumulate(g, g);
    const auto groups = task_groups(four_two(), 2);
    EXPECT_EQ(miou(cm, groups.base), 1.0);
    EXPECT_EQ(miou(cm, groups.novel), 1.0);
    EXPECT_EQ(miou(cm, groups.all), 1.0);
}

TEST(Miou, PartialOverlapIouIsTwoSixths) {
    // Class 1 on 4 pixels; prediction hits 2 of them and 2 pixels of class 2.
    const HardLabelMap g(2, 4, {1, 1, 1, 1, 2, 2, 2, 2});
    const HardLabelMap p(2, 4, {1, 1, 2, 2, 1, 1, 2, 2});
    ConfusionMatrix cm(3);
    cm.accumulate(g, p);
    const auto iou = class_iou(cm);
    EXPECT_DOUBLE_EQ(*iou[1], 2.0 / 6.0);
    EXPECT_FALSE(iou[0].has_value());
}

TEST(Miou, AllMeanIsNotWeightedGroupMean) {
    Rng rng(5);
    ConfusionMatrix cm(21);
    for (int i = 0; i < 5; ++i) {
        HardLabelMap g = testutil::random_labels(rng, 10, 10, 21);
        HardLabelMap p = g;
        for (int k = 0; k < 100; ++k) {
            if (g[k] >= 16 && rng.bernoulli(0.7)) p[k] = 0;
        }
        cm.accumulate(g, p);
    }
    const double base = miou(cm, range(1, 16));
    const double novel = miou(cm, range(16, 21));
    const double all = miou(cm, range(0, 21));
    EXPECT_NE(all, (15 * base + 5 * novel) / 20);
    EXPECT_GT(base, novel);
}

TEST(Miou, UndefinedAndEmptyGroups) {
    ConfusionMatrix cm(4);
    cm.accumulate(HardLabelMap(2, 2, 1), HardLabelMap(2, 2, 1));
    const std::vector<int> absent{2, 3};
    const std::vector<int> none;
    EXPECT_THROW(miou(cm, absent), MetricError);
    EXPECT_THROW(miou(cm, none), ValidationError);
    const std::vector<int> mixed{1, 2};
    const auto d = miou_detail(cm, mixed);
    EXPECT_EQ(d.value, 1.0);
    EXPECT_EQ(d.excluded, std::vector<int>{2});
}

TEST(Miou, BoundedAndPermutationInvariant) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const HardLabelMap g = testutil::random_labels(rng, 6, 6, 5, 0.1);
        const HardLabelMap p = testutil::random_labels(rng, 6, 6, 5);
        std::vector<int> perm = range(0, 5);
        rng.shuffle(perm);
        HardLabelMap gp = g, pp = p;
        for (int i = 0; i < 36; ++i) {
            if (gp[i] >= 0) gp[i] = perm[static_cast<std::size_t>(gp[i])];
            pp[i] = perm[static_cast<std::size_t>(pp[i])];
        }
        ConfusionMatrix a(5), b(5);
        a.accumulate(g, p);
        b.accumulate(gp, pp);
        for (const auto& v : class_iou(a)) {
            if (v) {
                EXPECT_GE(*v, 0.0);
                EXPECT_LE(*v, 1.0);
            }
        }
        const std::vector<int> group{0, 2, 3};
        std::vector<int> mapped;
        for (int c : group) mapped.push_back(perm[static_cast<std::size_t>(c)]);
        std::sort(mapped.begin(), mapped.end());
        EXPECT_NEAR(miou(a, group), miou(b, mapped), 1e-15);
    }
}

TEST(Miou, TallyOracleExact) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + static_cast<int>(rng.index(5));
        const HardLabelMap g = testutil::random_labels(rng, 7, 9, n, 0.1);
        const HardLabelMap p = testutil::random_labels(rng, 7, 9, n);
        ConfusionMatrix cm(n);
        cm.accumulate(g, p);
        const auto t = oracle::tally({g.labels()}, {p.labels()}, n);
        for (int c = 0; c < n; ++c) {
            EXPECT_EQ(static_cast<std::int64_t>(cm(c, c)), t.tp[static_cast<std::size_t>(c)]);
            EXPECT_EQ(static_cast<std::int64_t>(cm.col_sum(c) - cm(c, c)), t.fp[static_cast<std::size_t>(c)]);
            EXPECT_EQ(static_cast<std::int64_t>(cm.row_sum(c) - cm(c, c)), t.fn[static_cast<std::size_t>(c)]);
        }
        const std::vector<int> group = range(1, n);
        EXPECT_EQ(miou(cm, group), oracle::grouped_miou(t, group));
    }
}

TEST(Groups, FourTwoLayout) {
    const auto g = task_groups(four_two(), 2);
    EXPECT_EQ(g.base, range(1, 5));
    EXPECT_EQ(g.novel, range(5, 7));
    EXPECT_EQ(g.all, range(0, 7));
    EXPECT_EQ(task_groups(four_two(), 2, false).all, range(1, 7));
    EXPECT_TRUE(task_groups(four_two(), 1).novel.empty());
}

TEST(Groups, RestrictToSeenIgnoresFutureClasses) {
    const HardLabelMap g(1, 5, {0, 2, 5, 6, kIgnore});
    EXPECT_EQ(restrict_to_seen(g, 5), HardLabelMap(1, 5, {0, 2, kIgnore, kIgnore, kIgnore}));
}

TEST(Report, RecordsJsonRoundTripAndTable) {
    Rng rng(8);
    ConfusionMatrix cm1(5), cm2(7);
    cm1.accumulate(testutil::random_labels(rng, 8, 8, 5), testutil::random_labels(rng, 8, 8, 5));
    cm2.accumulate(testutil::random_labels(rng, 8, 8, 7), testutil::random_labels(rng, 8, 8, 7));
    EvalReport r;
    for (auto& m : metric_records(cm1, four_two(), 1, "disjoint")) r.records.push_back(m);
    for (auto& m : metric_records(cm2, four_two(), 2, "disjoint")) r.records.push_back(m);
    EXPECT_EQ(eval_report_from_json(nlohmann::json::parse(to_json(r).dump())), r);
    const std::string table = format_table(r, four_two());
    EXPECT_NE(table.find("1-4"), std::string::npos);
    EXPECT_NE(table.find("5-6"), std::string::npos);
    EXPECT_NE(table.find("All"), std::string::npos);
    EXPECT_NE(table.find("disjoint"), std::string::npos);
}

TEST(Report, AblationTableHasFourRows) {
    std::vector<AblationRow> rows{{false, false, 0.1, 0.2, 0.3, 5},
                                  {true, false, 0.1, 0.3, 0.35, 5},
                                  {false, true, 0.15, 0.2, 0.33, 5},
                                  {true, true, 0.15, 0.3, 0.38, 5}};
    const std::string t = format_ablation_table(rows);
    EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 6);  // header, rule, 4 rows
    EXPECT_EQ(to_json(rows).size(), 4u);
}
