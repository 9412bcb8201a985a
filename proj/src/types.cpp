#include "wsciss/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "wsciss/errors.hpp"

namespace wsciss {

Image::Image(Tensor3 pixels, std::string id) : pixels_(std::move(pixels)), id_(std::move(id)) {
    if (pixels_.channels() != 3) throw ValidationError("image must have 3 channels");
    if (pixels_.height() < 1 || pixels_.width() < 1) throw ValidationError("image must be at least 1x1");
    for (double v : pixels_.values()) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw ValidationError("image '" + id_ + "' has a pixel outside [0,1]");
        }
    }
}

LabelMap::LabelMap(Tensor3 scores, ScoreKind kind) : scores_(std::move(scores)), kind_(kind) {
    if (kind_ == ScoreKind::probabilities) {
        for (double v : scores_.values()) {
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("probability map entry outside [0,1]");
        }
    }
}

HardLabelMap::HardLabelMap(int height, int width, int fill)
    : h_(height), w_(width), labels_(static_cast<std::size_t>(height) * width, fill) {
    if (height < 0 || width < 0) throw ValidationError("label map dimensions must be non-negative");
}

HardLabelMap::HardLabelMap(int height, int width, std::vector<int> labels)
    : h_(height), w_(width), labels_(std::move(labels)) {
    if (labels_.size() != static_cast<std::size_t>(height) * width) {
        throw ValidationError("label buffer size does not match height*width");
    }
}

void HardLabelMap::validate(int num_classes) const {
    for (int v : labels_) {
        if (v != kIgnore && (v < 0 || v >= num_classes)) {
            throw ValidationError("label " + std::to_string(v) + " outside class range [0," +
                                  std::to_string(num_classes) + ")");
        }
    }
}

ImageLevelLabels::ImageLevelLabels(std::vector<int> classes) : classes_(std::move(classes)) {
    std::sort(classes_.begin(), classes_.end());
    classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
    if (!classes_.empty() && classes_.front() <= kBackground) {
        throw ValidationError("image-level labels never include background");
    }
}

bool ImageLevelLabels::contains(int cls) const noexcept {
    return std::binary_search(classes_.begin(), classes_.end(), cls);
}

ImageLevelLabels ImageLevelLabels::with(int cls) const {
    auto v = classes_;
    v.push_back(cls);
    return ImageLevelLabels(std::move(v));
}

TaskSchedule::TaskSchedule(std::vector<std::vector<std::string>> partitions, std::string background_name)
    : partitions_(std::move(partitions)), background_(std::move(background_name)) {
    std::set<std::string> seen{background_};
    names_.push_back(background_);
    for (const auto& part : partitions_) {
        if (part.empty()) throw ValidationError("task partitions must be non-empty");
        for (const auto& name : part) {
            if (name == background_) throw ValidationError("background may not appear in a partition");
            if (!seen.insert(name).second) throw ValidationError("duplicate class name '" + name + "'");
            names_.push_back(name);
        }
    }
}

int TaskSchedule::accumulated_count(int t) const {
    if (t < 1 || t > num_tasks()) {
        throw RangeError("task index " + std::to_string(t) + " outside [1," + std::to_string(num_tasks()) + "]");
    }
    int n = 1;
    for (int i = 0; i < t; ++i) n += static_cast<int>(partitions_[static_cast<std::size_t>(i)].size());
    return n;
}

int TaskSchedule::first_index(int t) const {
    return accumulated_count(t) - static_cast<int>(partitions_[static_cast<std::size_t>(t - 1)].size());
}

std::vector<int> TaskSchedule::task_class_indices(int t) const {
    std::vector<int> out;
    for (int c = first_index(t); c < accumulated_count(t); ++c) out.push_back(c);
    return out;
}

std::optional<int> TaskSchedule::index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<int>(it - names_.begin());
}

const std::string& TaskSchedule::name_of(int index) const {
    if (index < 0 || index >= total_classes()) throw RangeError("class index out of range");
    return names_[static_cast<std::size_t>(index)];
}

int TaskSchedule::task_of(int cls) const {
    if (cls == kBackground) return 0;
    for (int t = 1; t <= num_tasks(); ++t) {
        if (cls < accumulated_count(t)) return t;
    }
    throw RangeError("class index out of range");
}

std::vector<std::string> accumulated_classes(const TaskSchedule& schedule, int t) {
    const int n = schedule.accumulated_count(t);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) out.push_back(schedule.name_of(c));
    return out;
}

HardLabelMap harden(const LabelMap& soft) {
    if (soft.kind() != ScoreKind::probabilities) throw ValidationError("harden expects probabilities");
    const Tensor3& s = soft.scores();
    if (!s.all_finite()) throw ValidationError("harden: non-finite score");
    HardLabelMap out(s.height(), s.width());
    for (int y = 0; y < s.height(); ++y) {
        for (int x = 0; x < s.width(); ++x) {
            int best = 0;
            for (int c = 1; c < s.channels(); ++c) {
                if (s(c, y, x) > s(best, y, x)) best = c;
            }
            out(y, x) = best;
        }
    }
    return out;
}

LabelMap one_hot(const HardLabelMap& hard, int num_classes) {
    hard.validate(num_classes);
    Tensor3 t(num_classes, hard.height(), hard.width());
    for (int y = 0; y < hard.height(); ++y) {
        for (int x = 0; x < hard.width(); ++x) {
            if (hard(y, x) != kIgnore) t(hard(y, x), y, x) = 1.0;
        }
    }
    return LabelMap(std::move(t), ScoreKind::probabilities);
}

}  // namespace wsciss
