#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wsciss/types.hpp"

namespace wsciss {

/// Records which sample ids were read, tagged by the phase active at the
/// time. Used to prove that a task never touches data of earlier tasks.
class AccessLog {
public:
    void set_phase(std::string phase);
    void record(const std::string& sample_id);
    std::set<std::string> accessed_in(const std::string& phase) const;
    std::size_t total_reads() const;

private:
    mutable std::mutex mutex_;
    std::string phase_;
    std::vector<std::pair<std::string, std::string>> reads_;
};

/// In-memory collection of samples. Every `at()` is reported to the
/// attached AccessLog, if any.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<TrainSample> samples, std::shared_ptr<AccessLog> log = nullptr);

    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    const TrainSample& at(std::size_t i) const;
    /// Sample ids without counting as a read.
    std::vector<std::string> ids() const;

    void attach_log(std::shared_ptr<AccessLog> log) { log_ = std::move(log); }
    const std::shared_ptr<AccessLog>& log() const noexcept { return log_; }

private:
    std::vector<TrainSample> samples_;
    std::shared_ptr<AccessLog> log_;
};

/// On-disk dataset index. Mask bytes are 1-based positions into
/// `class_names` (0 = background, 255 = ignore).
struct Manifest {
    struct Entry {
        std::string id;
        std::string image;  // relative to the dataset directory
        std::vector<std::string> labels;
        std::optional<std::string> mask;
    };
    std::vector<std::string> class_names;
    std::vector<Entry> entries;
};

inline constexpr const char* kManifestFile = "manifest.json";

void write_manifest(const std::filesystem::path& dir, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& dir);

/// Loads every sample, remapping labels and masks to the schedule's global
/// class indices. Classes missing from the schedule raise ConfigError.
std::vector<TrainSample> load_samples(const std::filesystem::path& dir, const TaskSchedule& schedule);

/// Writes samples (in schedule indexing) as a dataset directory.
void write_samples(const std::filesystem::path& dir, const std::vector<TrainSample>& samples,
                   const TaskSchedule& schedule);

}  // namespace wsciss
