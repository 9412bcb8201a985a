#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsciss/config.hpp"
#include "wsciss/dataset.hpp"
#include "wsciss/eval.hpp"
#include "wsciss/exemplar.hpp"
#include "wsciss/pseudo_label.hpp"
#include "wsciss/segnet.hpp"
#include "wsciss/trainer.hpp"

namespace wsciss {

struct ScenarioConfig {
    Scenario scenario = Scenario::disjoint;
    TaskSchedule schedule;
    std::uint64_t seed = 0;

    /// Incremental runs need at least two partitions.
    void validate(bool incremental = true) const;
};

/// Classes present in a sample's hidden mask (background excluded).
std::vector<int> present_classes(const TrainSample& sample);

/// D^t: images with at least one C^t object; disjoint additionally drops
/// images showing any future-partition object. Weak labels are cut down to
/// C^t. Throws ConfigError naming the partition when nothing qualifies.
std::vector<TrainSample> split_dataset(const std::vector<TrainSample>& full, const ScenarioConfig& cfg, int t);

/// Evaluation view after task t: every image, future classes ignored.
std::vector<TrainSample> eval_view(const std::vector<TrainSample>& full, const TaskSchedule& schedule, int t);

/// Everything carried from one task to the next. Holds no dataset.
struct TaskState {
    int t = 1;  // next task to run
    std::optional<SegNet> live_net;
    std::optional<FrozenSegNet> frozen_prev;
    ExemplarSet exemplars;
    std::vector<MetricRecord> metrics;

    /// Throws ValidationError when the frozen network is missing or has
    /// the wrong class count for t > 1.
    void validate(const TaskSchedule& schedule) const;
};

struct TaskEnvironment {
    const FoundationOracle* oracle = nullptr;
    const ImageEditor* editor = nullptr;
    /// runs/<name>; empty keeps every artifact in memory.
    std::filesystem::path run_dir;
    /// Evaluated after training when set (ground truth in hidden masks).
    const std::vector<TrainSample>* eval_samples = nullptr;
    std::function<void(const std::string&)> log;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct TaskOutcome {
    TaskState state;  // ready for task t + 1
    TrainingReport training;
    std::vector<StageTiming> stages;
    std::vector<std::string> warnings;
    std::optional<ConfusionMatrix> confusion;
    nlohmann::json report;
};

/// One class-incremental task: frozen pass (t > 1), head extension, oracle
/// masks, training, freezing, exemplar rebuild. Artifacts go to
/// `run_dir/task<t>` and only appear once every stage has succeeded.
TaskOutcome run_task(const TaskState& state, const Dataset& data, const RunConfig& cfg, const TaskEnvironment& env);

std::filesystem::path task_dir(const std::filesystem::path& run_dir, int t);

/// State after task t - 1 as persisted by run_task. Throws
/// MissingArtifactError naming the command to run when absent.
TaskState load_task_state(const std::filesystem::path& run_dir, const RunConfig& cfg, int t);

/// Confusion matrix of `net` over an evaluation view after task t.
ConfusionMatrix evaluate_network(const SegNet& net, const std::vector<TrainSample>& samples,
                                 const TaskSchedule& schedule, int t);

/// Oracle and editor described by the config.
std::unique_ptr<FoundationOracle> make_oracle(const RunConfig& cfg);
std::unique_ptr<ImageEditor> make_editor(const RunConfig& cfg, const std::filesystem::path& work_dir);

struct RunResult {
    std::vector<TaskOutcome> tasks;
    EvalReport report;
};

/// All tasks of the schedule in order, evaluating after each.
RunResult run_protocol(const RunConfig& cfg, const std::vector<TrainSample>& train_full,
                       const std::vector<TrainSample>& eval_full, const std::filesystem::path& run_dir,
                       const std::function<void(const std::string&)>& log = {});

struct AblationResult {
    std::vector<AblationRow> rows;  // fusion x augmentation, means over seeds
    std::vector<std::vector<AblationRow>> per_seed;
};

/// 2x2 grid of {fusion on/off} x {exemplar augmentation on/off} on a two-
/// task schedule. Task 1 is trained once per seed and shared by the arms;
/// the switches act on the incremental task.
AblationResult run_ablation(const RunConfig& cfg, const std::vector<TrainSample>& train_full,
                            const std::vector<TrainSample>& eval_full, const std::vector<std::uint64_t>& seeds,
                            const std::function<void(const std::string&)>& log = {});

}  // namespace wsciss
