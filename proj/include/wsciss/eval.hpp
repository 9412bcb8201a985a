#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsciss/types.hpp"

namespace wsciss {

/// counts[g][p] = pixels with ground truth g predicted as p; ignore pixels
/// are skipped.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int num_classes);

    int num_classes() const noexcept { return n_; }
    std::uint64_t operator()(int gt, int pred) const { return counts_[index(gt, pred)]; }
    std::uint64_t total() const noexcept;
    std::uint64_t row_sum(int c) const;
    std::uint64_t col_sum(int c) const;

    /// Throws ValidationError on shape mismatch or labels out of range.
    void accumulate(const HardLabelMap& gt, const HardLabelMap& pred);
    void merge(const ConfusionMatrix& other);

    const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }
    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t index(int g, int p) const { return static_cast<std::size_t>(g) * n_ + p; }
    int n_ = 0;
    std::vector<std::uint64_t> counts_;
};

/// IoU per class; nullopt where the union is empty.
std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm);

struct MiouDetail {
    double value = 0.0;
    std::vector<int> excluded;  // zero-union classes left out of the mean
};

/// Unweighted mean IoU over `group`. Throws ValidationError for an empty
/// group and MetricError when every class in it has zero union.
MiouDetail miou_detail(const ConfusionMatrix& cm, std::span<const int> group);
double miou(const ConfusionMatrix& cm, std::span<const int> group);

/// Remaps ground truth for evaluation after task t: classes beyond
/// |C^t_acc| become ignore.
HardLabelMap restrict_to_seen(const HardLabelMap& gt, int accumulated_count);

struct MetricRecord {
    int task = 0;
    std::string scenario;
    std::string group;  // "base", "novel" or "all"
    std::optional<double> miou;
    std::vector<int> classes;

    bool operator==(const MetricRecord&) const = default;
};

struct EvalReport {
    std::vector<MetricRecord> records;

    bool operator==(const EvalReport&) const = default;
};

struct GroupSpec {
    std::vector<int> base;
    std::vector<int> novel;
    std::vector<int> all;
};

/// base = C^1, novel = C^2..C^t, all = every accumulated class (background
/// included unless disabled).
GroupSpec task_groups(const TaskSchedule& schedule, int t, bool include_background_in_all = true);

/// Records for one evaluated task; groups with undefined mIoU get nullopt.
std::vector<MetricRecord> metric_records(const ConfusionMatrix& cm, const TaskSchedule& schedule, int t,
                                         const std::string& scenario, bool include_background_in_all = true);

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// Aligned text table: one row per (task, scenario), columns base / novel /
/// All, labelled with their class ranges.
std::string format_table(const EvalReport& report, const TaskSchedule& schedule);

struct AblationRow {
    bool fusion = false;
    bool augmentation = false;
    double base = 0.0;
    double novel = 0.0;
    double all = 0.0;
    int runs = 0;

    bool operator==(const AblationRow&) const = default;
};

std::string format_ablation_table(const std::vector<AblationRow>& rows);
nlohmann::json to_json(const std::vector<AblationRow>& rows);

}  // namespace wsciss
