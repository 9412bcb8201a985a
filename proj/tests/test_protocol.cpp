#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "wsciss/errors.hpp"
#include "wsciss/protocol.hpp"
#include "wsciss/synthetic.hpp"

using namespace wsciss;
namespace fs = std::filesystem;

namespace {

using Parts = std::vector<std::vector<std::string>>;

// person=1, cat=2 in task 1; car=3, sofa=4 in task 2
TaskSchedule small_schedule() { return TaskSchedule(Parts{{"person", "cat"}, {"car", "sofa"}}); }

TrainSample sample_with(const std::string& id, std::vector<int> classes) {
    HardLabelMap m(2, 4, kBackground);
    for (std::size_t i = 0; i < classes.size(); ++i) m[static_cast<int>(i)] = classes[i];
    std::sort(classes.begin(), classes.end());
    return TrainSample{Image(Tensor3(3, 2, 4), id), ImageLevelLabels(classes), m};
}

std::vector<std::string> ids(const std::vector<TrainSample>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.id());
    return out;
}

class ThrowingOracle final : public FoundationOracle {
public:
    LabelMap segment(const TrainSample&, std::span<const int>, int) const override {
        throw IoError("oracle backend unavailable");
    }
    std::string config_key() const override { return "throwing"; }
};

struct Corpus {
    RunConfig cfg;
    std::vector<TrainSample> train;
    std::vector<TrainSample> eval;
};

Corpus tiny_corpus(const std::string& name, Scenario scenario = Scenario::disjoint) {
    Corpus c{testutil::tiny_config(name), {}, {}};
    c.cfg.scenario = scenario;
    c.train = generate_synthetic(c.cfg.synthetic, c.cfg.schedule, c.cfg.synthetic.train_images, 11, "tr");
    c.eval = generate_synthetic(c.cfg.synthetic, c.cfg.schedule, c.cfg.synthetic.eval_images, 12, "ev");
    return c;
}

}  // namespace

TEST(Split, DisjointAndOverlapExamples) {
    const std::vector<TrainSample> full{sample_with("a", {1}), sample_with("b", {1, 3}), sample_with("c", {3}),
                                        sample_with("d", {2, 4}), sample_with("e", {})};
    const ScenarioConfig disjoint{Scenario::disjoint, small_schedule(), 0};
    const ScenarioConfig overlap{Scenario::overlap, small_schedule(), 0};

    EXPECT_EQ(ids(split_dataset(full, disjoint, 1)), (std::vector<std::string>{"a"}));
    EXPECT_EQ(ids(split_dataset(full, overlap, 1)), (std::vector<std::string>{"a", "b", "d"}));
    EXPECT_EQ(ids(split_dataset(full, disjoint, 2)), (std::vector<std::string>{"b", "c", "d"}));

    // An image shown for task 2 only carries task-2 classes as weak labels.
    const auto d2 = split_dataset(full, overlap, 2);
    EXPECT_EQ(d2[0].weak_labels.classes(), std::vector<int>{3});
    EXPECT_EQ(d2[2].weak_labels.classes(), std::vector<int>{4});
    EXPECT_EQ(split_dataset(full, overlap, 1)[1].weak_labels.classes(), std::vector<int>{1});
}

TEST(Split, SizesMatchBruteForceCount) {
    const auto c = tiny_corpus("split_sizes");
    auto full = generate_synthetic(c.cfg.synthetic, c.cfg.schedule, 60, 5, "s");
    for (Scenario sc : {Scenario::disjoint, Scenario::overlap}) {
        const ScenarioConfig cfg{sc, c.cfg.schedule, 0};
        for (int t = 1; t <= 2; ++t) {
            const int lo = c.cfg.schedule.first_index(t);
            const int hi = c.cfg.schedule.accumulated_count(t);
            std::size_t expected = 0;
            for (const auto& s : full) {
                bool novel = false, future = false;
                for (int v : s.hidden_mask->labels()) {
                    novel = novel || (v >= lo && v < hi);
                    future = future || v >= hi;
                }
                if (novel && (sc == Scenario::overlap || !future)) ++expected;
            }
            EXPECT_EQ(split_dataset(full, cfg, t).size(), expected) << to_string(sc) << " task " << t;
        }
    }
}

TEST(Split, DisjointIsSubsetOfOverlap) {
    const auto c = tiny_corpus("split_subset");
    for (int t = 1; t <= 2; ++t) {
        const auto d = ids(split_dataset(c.train, {Scenario::disjoint, c.cfg.schedule, 0}, t));
        auto o = ids(split_dataset(c.train, {Scenario::overlap, c.cfg.schedule, 0}, t));
        std::sort(o.begin(), o.end());
        for (const auto& id : d) EXPECT_TRUE(std::binary_search(o.begin(), o.end(), id)) << id;
    }
}

TEST(Split, EmptySplitNamesPartition) {
    const std::vector<TrainSample> full{sample_with("a", {1}), sample_with("b", {2})};
    try {
        split_dataset(full, {Scenario::disjoint, small_schedule(), 0}, 2);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("car, sofa"), std::string::npos);
    }
}

TEST(Split, EvalViewIgnoresFutureClasses) {
    const std::vector<TrainSample> full{sample_with("a", {1, 3})};
    const auto v = eval_view(full, small_schedule(), 1);
    EXPECT_EQ((*v[0].hidden_mask)[0], 1);
    EXPECT_EQ((*v[0].hidden_mask)[1], kIgnore);
    EXPECT_EQ((*eval_view(full, small_schedule(), 2)[0].hidden_mask)[1], 3);
}

TEST(Protocol, FirstTaskHasNoDistillationTerms) {
    const auto c = tiny_corpus("first_task");
    const auto oracle = make_oracle(c.cfg);
    TaskState s0;
    s0.exemplars = ExemplarSet(c.cfg.exemplar.budget_per_class);
    const Dataset d1(split_dataset(c.train, {c.cfg.scenario, c.cfg.schedule, 0}, 1));
    const TaskOutcome out = run_task(s0, d1, c.cfg, {oracle.get(), nullptr, {}, &c.eval, {}});
    ASSERT_FALSE(out.training.epochs.empty());
    for (const auto& e : out.training.epochs) {
        EXPECT_EQ(e.parts.kd, 0.0);
        EXPECT_EQ(e.parts.bce_loc, 0.0);
    }
    EXPECT_EQ(out.state.t, 2);
    EXPECT_EQ(out.state.live_net->num_classes(), 5);
    EXPECT_EQ(out.state.metrics.size(), 2u);  // base and all
}

TEST(Protocol, TwoTaskRunGrowsHeadsAndReportsEveryGroup) {
    const auto c = tiny_corpus("two_tasks");
    const auto dir = testutil::scratch("two_tasks");
    const RunResult r = run_protocol(c.cfg, c.train, c.eval, dir);
    ASSERT_EQ(r.tasks.size(), 2u);
    EXPECT_EQ(r.tasks[1].state.live_net->num_classes(), 7);
    EXPECT_EQ(r.tasks[1].state.frozen_prev->network().num_classes(), 7);
    EXPECT_GT(r.tasks[1].training.epochs.back().parts.kd, 0.0);
    std::set<std::string> groups;
    for (const auto& m : r.report.records) {
        if (m.task == 2) groups.insert(m.group);
    }
    EXPECT_EQ(groups, (std::set<std::string>{"all", "base", "novel"}));
    for (int t = 1; t <= 2; ++t) {
        EXPECT_TRUE(fs::exists(task_dir(dir, t) / "report.json"));
        EXPECT_TRUE(fs::exists(task_dir(dir, t) / "checkpoint"));
        EXPECT_FALSE(fs::exists(fs::path(task_dir(dir, t).string() + ".partial")));
    }
    EXPECT_TRUE(fs::exists(task_dir(dir, 2) / "frozen_pass"));
}

TEST(Protocol, IncrementalTaskNeverReadsFirstTaskOnlyImages) {
    for (Scenario sc : {Scenario::disjoint, Scenario::overlap}) {
        const auto c = tiny_corpus("isolation", sc);
        const ScenarioConfig scfg{sc, c.cfg.schedule, 0};
        auto log = std::make_shared<AccessLog>();
        const Dataset d1(split_dataset(c.train, scfg, 1), log);
        const Dataset d2(split_dataset(c.train, scfg, 2), log);
        const auto oracle = make_oracle(c.cfg);
        const auto editor = make_editor(c.cfg, testutil::scratch("isolation_edit"));
        TaskState s0;
        s0.exemplars = ExemplarSet(c.cfg.exemplar.budget_per_class);
        const TaskEnvironment env{oracle.get(), editor.get(), {}, nullptr, {}};
        const TaskOutcome first = run_task(s0, d1, c.cfg, env);
        ASSERT_GT(first.state.exemplars.total(), 0u);
        run_task(first.state, d2, c.cfg, env);

        const auto ids2 = d2.ids();
        const std::set<std::string> in2(ids2.begin(), ids2.end());
        std::set<std::string> exclusive;
        for (const auto& id : d1.ids()) {
            if (!in2.count(id)) exclusive.insert(id);
        }
        ASSERT_FALSE(exclusive.empty());
        EXPECT_FALSE(log->accessed_in("task1").empty());
        std::size_t leaks = 0;
        for (const auto& id : log->accessed_in("task2")) leaks += exclusive.count(id);
        EXPECT_EQ(leaks, 0u) << to_string(sc);
    }
}

TEST(Protocol, OracleFailureLeavesNoTaskDirectory) {
    const auto c = tiny_corpus("atomic");
    const auto dir = testutil::scratch("atomic");
    const ThrowingOracle oracle;
    TaskState s0;
    s0.exemplars = ExemplarSet(c.cfg.exemplar.budget_per_class);
    const Dataset d1(split_dataset(c.train, {c.cfg.scenario, c.cfg.schedule, 0}, 1));
    EXPECT_THROW(run_task(s0, d1, c.cfg, {&oracle, nullptr, dir, nullptr, {}}), OracleError);
    EXPECT_FALSE(fs::exists(task_dir(dir, 1)));
    EXPECT_FALSE(fs::exists(fs::path(task_dir(dir, 1).string() + ".partial")));
}

TEST(Protocol, SecondTaskWithoutFrozenNetworkIsRejected) {
    const auto c = tiny_corpus("no_frozen");
    const auto oracle = make_oracle(c.cfg);
    TaskState s;
    s.t = 2;
    const Dataset d2(split_dataset(c.train, {c.cfg.scenario, c.cfg.schedule, 0}, 2));
    EXPECT_THROW(run_task(s, d2, c.cfg, {oracle.get(), nullptr, {}, nullptr, {}}), ValidationError);
}

TEST(Protocol, LoadStateNamesMissingTask) {
    const auto c = tiny_corpus("load_state");
    const auto dir = testutil::scratch("load_state");
    EXPECT_EQ(load_task_state(dir, c.cfg, 1).t, 1);
    EXPECT_THROW(load_task_state(dir, c.cfg, 3), RangeError);
    try {
        load_task_state(dir, c.cfg, 2);
        FAIL() << "expected MissingArtifactError";
    } catch (const MissingArtifactError& e) {
        EXPECT_NE(std::string(e.what()).find("train --task 1"), std::string::npos);
    }
}

TEST(Protocol, ResumedSecondTaskMatchesContinuousRun) {
    const auto c = tiny_corpus("resume");
    const auto dir = testutil::scratch("resume");
    const RunResult full = run_protocol(c.cfg, c.train, c.eval, dir);

    const TaskState s = load_task_state(dir, c.cfg, 2);
    const auto oracle = make_oracle(c.cfg);
    const auto editor = make_editor(c.cfg, dir / "editor_work");
    const Dataset d2(split_dataset(c.train, {c.cfg.scenario, c.cfg.schedule, c.cfg.seed}, 2));
    const TaskOutcome again = run_task(s, d2, c.cfg, {oracle.get(), editor.get(), {}, &c.eval, {}});
    EXPECT_EQ(*again.confusion, *full.tasks[1].confusion);
}

TEST(Protocol, SameSeedGivesIdenticalMetrics) {
    const auto c = tiny_corpus("repro");
    const RunResult a = run_protocol(c.cfg, c.train, c.eval, {});
    const RunResult b = run_protocol(c.cfg, c.train, c.eval, {});
    EXPECT_EQ(a.report, b.report);
    EXPECT_EQ(*a.tasks[1].confusion, *b.tasks[1].confusion);
}
