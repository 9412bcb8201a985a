#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wsciss/tensor.hpp"

namespace wsciss {

/// Label value for pixels that no source labels.
inline constexpr int kIgnore = -1;

/// Background is class index 0 in every accumulated class set.
inline constexpr int kBackground = 0;

/// RGB image with pixel values in [0, 1].
class Image {
public:
    Image() = default;
    Image(Tensor3 pixels, std::string id);

    int height() const noexcept { return pixels_.height(); }
    int width() const noexcept { return pixels_.width(); }
    const Tensor3& pixels() const noexcept { return pixels_; }
    const std::string& id() const noexcept { return id_; }

    bool operator==(const Image&) const = default;

private:
    Tensor3 pixels_;
    std::string id_;
};

enum class ScoreKind { logits, probabilities };

/// Dense per-pixel class scores, shape (C, H, W).
class LabelMap {
public:
    LabelMap() = default;
    LabelMap(Tensor3 scores, ScoreKind kind);

    int num_classes() const noexcept { return scores_.channels(); }
    int height() const noexcept { return scores_.height(); }
    int width() const noexcept { return scores_.width(); }
    ScoreKind kind() const noexcept { return kind_; }
    const Tensor3& scores() const& noexcept { return scores_; }
    Tensor3 scores() && { return std::move(scores_); }

    double operator()(int c, int y, int x) const noexcept { return scores_(c, y, x); }

private:
    Tensor3 scores_;
    ScoreKind kind_ = ScoreKind::probabilities;
};

/// Per-pixel class index map; entries are class indices or kIgnore.
class HardLabelMap {
public:
    HardLabelMap() = default;
    HardLabelMap(int height, int width, int fill = kBackground);
    HardLabelMap(int height, int width, std::vector<int> labels);

    int height() const noexcept { return h_; }
    int width() const noexcept { return w_; }
    int size() const noexcept { return h_ * w_; }

    int& operator()(int y, int x) noexcept { return labels_[static_cast<std::size_t>(y) * w_ + x]; }
    int operator()(int y, int x) const noexcept { return labels_[static_cast<std::size_t>(y) * w_ + x]; }
    int operator[](int i) const noexcept { return labels_[static_cast<std::size_t>(i)]; }
    int& operator[](int i) noexcept { return labels_[static_cast<std::size_t>(i)]; }

    const std::vector<int>& labels() const& noexcept { return labels_; }
    std::vector<int> labels() && { return std::move(labels_); }

    /// Throws ValidationError if any non-ignore entry is outside [0, num_classes).
    void validate(int num_classes) const;

    bool operator==(const HardLabelMap&) const = default;

private:
    int h_ = 0;
    int w_ = 0;
    std::vector<int> labels_;
};

/// Image-level multi-label: the set of (global, schedule-ordered) class
/// indices known to be present. Background is implicit and never listed.
class ImageLevelLabels {
public:
    ImageLevelLabels() = default;
    explicit ImageLevelLabels(std::vector<int> classes);

    const std::vector<int>& classes() const noexcept { return classes_; }
    bool contains(int cls) const noexcept;
    bool empty() const noexcept { return classes_.empty(); }
    ImageLevelLabels with(int cls) const;

    bool operator==(const ImageLevelLabels&) const = default;

private:
    std::vector<int> classes_;  // sorted, unique, all > 0
};

/// Ordered class partitions [C^1, C^2, ...]. Class indices are global:
/// background 0, then every partition's classes in schedule order.
class TaskSchedule {
public:
    TaskSchedule() = default;
    TaskSchedule(std::vector<std::vector<std::string>> partitions, std::string background_name = "background");

    int num_tasks() const noexcept { return static_cast<int>(partitions_.size()); }
    const std::vector<std::vector<std::string>>& partitions() const noexcept { return partitions_; }
    const std::string& background_name() const noexcept { return background_; }

    /// |C^t_acc| including background. Throws RangeError for t outside [1, T].
    int accumulated_count(int t) const;
    /// First global index of C^t.
    int first_index(int t) const;
    /// Global indices of C^t (novel classes at task t).
    std::vector<int> task_class_indices(int t) const;
    /// Global index of a class name, background included.
    std::optional<int> index_of(const std::string& name) const;
    const std::string& name_of(int index) const;
    int total_classes() const noexcept { return static_cast<int>(names_.size()); }
    /// Task that introduced `cls` (0 for background).
    int task_of(int cls) const;

    bool operator==(const TaskSchedule&) const = default;

private:
    std::vector<std::vector<std::string>> partitions_;
    std::string background_;
    std::vector<std::string> names_;  // background first
};

/// Background followed by C^1..C^t in schedule order.
std::vector<std::string> accumulated_classes(const TaskSchedule& schedule, int t);

struct TrainSample {
    Image image;
    ImageLevelLabels weak_labels;
    /// Dense ground truth; only the synthetic oracle, split curation and
    /// evaluation may read it.
    std::optional<HardLabelMap> hidden_mask;

    const std::string& id() const noexcept { return image.id(); }
};

/// Per-pixel argmax; ties go to the lowest class index.
HardLabelMap harden(const LabelMap& soft);

/// One-hot probability map of `hard` with `num_classes` channels; ignore
/// pixels get an all-zero column.
LabelMap one_hot(const HardLabelMap& hard, int num_classes);

}  // namespace wsciss
