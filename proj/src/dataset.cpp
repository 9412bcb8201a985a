#include "wsciss/dataset.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "wsciss/errors.hpp"
#include "wsciss/image_io.hpp"

namespace wsciss {

namespace fs = std::filesystem;
using nlohmann::json;

void AccessLog::set_phase(std::string phase) {
    std::lock_guard lock(mutex_);
    phase_ = std::move(phase);
}

void AccessLog::record(const std::string& sample_id) {
    std::lock_guard lock(mutex_);
    reads_.emplace_back(phase_, sample_id);
}

std::set<std::string> AccessLog::accessed_in(const std::string& phase) const {
    std::lock_guard lock(mutex_);
    std::set<std::string> out;
    for (const auto& [p, id] : reads_) {
        if (p == phase) out.insert(id);
    }
    return out;
}

std::size_t AccessLog::total_reads() const {
    std::lock_guard lock(mutex_);
    return reads_.size();
}

Dataset::Dataset(std::vector<TrainSample> samples, std::shared_ptr<AccessLog> log)
    : samples_(std::move(samples)), log_(std::move(log)) {}

const TrainSample& Dataset::at(std::size_t i) const {
    if (i >= samples_.size()) throw RangeError("dataset index out of range");
    const auto& s = samples_[i];
    if (log_) log_->record(s.id());
    return s;
}

std::vector<std::string> Dataset::ids() const {
    std::vector<std::string> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.id());
    return out;
}

void write_manifest(const fs::path& dir, const Manifest& manifest) {
    json j;
    j["format"] = "wsciss-dataset";
    j["version"] = 1;
    j["classes"] = manifest.class_names;
    j["samples"] = json::array();
    for (const auto& e : manifest.entries) {
        json s{{"id", e.id}, {"image", e.image}, {"labels", e.labels}};
        if (e.mask) s["mask"] = *e.mask;
        j["samples"].push_back(std::move(s));
    }
    fs::create_directories(dir);
    std::ofstream out(dir / kManifestFile);
    if (!out) throw IoError("cannot write manifest in '" + dir.string() + "'");
    out << j.dump(2) << '\n';
}

Manifest read_manifest(const fs::path& dir) {
    std::ifstream in(dir / kManifestFile);
    if (!in) throw IoError("no manifest at '" + (dir / kManifestFile).string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest '" + (dir / kManifestFile).string() + "': " + e.what());
    }
    if (j.value("format", "") != "wsciss-dataset") throw IoError("not a dataset manifest: " + dir.string());
    Manifest m;
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    for (const auto& s : j.at("samples")) {
        Manifest::Entry e;
        e.id = s.at("id").get<std::string>();
        e.image = s.at("image").get<std::string>();
        e.labels = s.at("labels").get<std::vector<std::string>>();
        if (s.contains("mask")) e.mask = s.at("mask").get<std::string>();
        m.entries.push_back(std::move(e));
    }
    return m;
}

std::vector<TrainSample> load_samples(const fs::path& dir, const TaskSchedule& schedule) {
    const Manifest m = read_manifest(dir);
    std::vector<int> remap{kBackground};
    for (const auto& name : m.class_names) {
        auto idx = schedule.index_of(name);
        if (!idx) throw ConfigError("dataset class '" + name + "' is not part of the task schedule");
        remap.push_back(*idx);
    }
    std::vector<TrainSample> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        TrainSample s;
        s.image = io::read_image_png(dir / e.image, e.id);
        std::vector<int> weak;
        for (const auto& name : e.labels) {
            auto idx = schedule.index_of(name);
            if (!idx) throw ConfigError("sample '" + e.id + "' has unknown label '" + name + "'");
            weak.push_back(*idx);
        }
        s.weak_labels = ImageLevelLabels(std::move(weak));
        if (e.mask) {
            HardLabelMap raw = io::read_mask_png(dir / *e.mask);
            if (raw.height() != s.image.height() || raw.width() != s.image.width()) {
                throw ValidationError("mask of sample '" + e.id + "' does not match its image size");
            }
            for (int i = 0; i < raw.size(); ++i) {
                const int v = raw[i];
                if (v == kIgnore) continue;
                if (v >= static_cast<int>(remap.size())) {
                    throw ValidationError("mask of sample '" + e.id + "' has out-of-range value");
                }
                raw[i] = remap[static_cast<std::size_t>(v)];
            }
            s.hidden_mask = std::move(raw);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_samples(const fs::path& dir, const std::vector<TrainSample>& samples, const TaskSchedule& schedule) {
    Manifest m;
    for (int c = 1; c < schedule.total_classes(); ++c) m.class_names.push_back(schedule.name_of(c));
    for (const auto& s : samples) {
        Manifest::Entry e;
        e.id = s.id();
        e.image = "images/" + s.id() + ".png";
        io::write_image_png(dir / e.image, s.image);
        for (int c : s.weak_labels.classes()) e.labels.push_back(schedule.name_of(c));
        if (s.hidden_mask) {
            e.mask = "masks/" + s.id() + ".png";
            io::write_mask_png(dir / *e.mask, *s.hidden_mask);
        }
        m.entries.push_back(std::move(e));
    }
    write_manifest(dir, m);
}

}  // namespace wsciss
