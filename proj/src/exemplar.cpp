#include "wsciss/exemplar.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <queue>

#include <nlohmann/json.hpp>

#include "wsciss/errors.hpp"
#include "wsciss/image_io.hpp"

namespace wsciss {

void ExemplarItem::validate() const {
    if (crop.height() != crop_mask.height() || crop.width() != crop_mask.width()) {
        throw ValidationError("exemplar crop and mask differ in size");
    }
    const auto& l = crop_mask.labels();
    if (std::count(l.begin(), l.end(), 1) == 0) throw ValidationError("exemplar mask has no foreground pixel");
    if (class_index <= kBackground) throw ValidationError("exemplar class must be a foreground class");
}

ExemplarSet::ExemplarSet(int budget_per_class) : budget_(budget_per_class) {
    if (budget_per_class < 1) throw ValidationError("exemplar budget must be >= 1");
}

void ExemplarSet::add(ExemplarItem item) {
    item.validate();
    auto& v = items_[item.class_index];
    if (static_cast<int>(v.size()) >= budget_) throw ValidationError("exemplar class is at its budget");
    v.push_back(std::move(item));
}

const std::vector<ExemplarItem>& ExemplarSet::items(int class_index) const {
    static const std::vector<ExemplarItem> none;
    auto it = items_.find(class_index);
    return it == items_.end() ? none : it->second;
}

std::vector<int> ExemplarSet::classes() const {
    std::vector<int> out;
    for (const auto& [c, v] : items_) {
        if (!v.empty()) out.push_back(c);
    }
    return out;
}

std::size_t ExemplarSet::total() const {
    std::size_t n = 0;
    for (const auto& [c, v] : items_) n += v.size();
    return n;
}

void ExemplarSet::validate(int accumulated_count) const {
    for (const auto& [c, v] : items_) {
        if (c <= kBackground || c >= accumulated_count) throw ValidationError("exemplar class outside the accumulated set");
        if (static_cast<int>(v.size()) > budget_) throw ValidationError("exemplar class exceeds its budget");
    }
}

std::vector<Component> connected_components(const HardLabelMap& labels, int cls) {
    const int H = labels.height();
    const int W = labels.width();
    std::vector<char> seen(static_cast<std::size_t>(H) * W, 0);
    std::vector<Component> out;
    for (int start = 0; start < H * W; ++start) {
        if (seen[static_cast<std::size_t>(start)] || labels[start] != cls) continue;
        Component comp;
        int y0 = H, x0 = W, y1 = -1, x1 = -1;
        std::queue<int> q;
        q.push(start);
        seen[static_cast<std::size_t>(start)] = 1;
        while (!q.empty()) {
            const int i = q.front();
            q.pop();
            comp.pixels.push_back(i);
            const int y = i / W;
            const int x = i % W;
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            const int ny[4] = {y - 1, y + 1, y, y};
            const int nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= H || nx[k] < 0 || nx[k] >= W) continue;
                const int j = ny[k] * W + nx[k];
                if (seen[static_cast<std::size_t>(j)] || labels[j] != cls) continue;
                seen[static_cast<std::size_t>(j)] = 1;
                q.push(j);
            }
        }
        std::sort(comp.pixels.begin(), comp.pixels.end());
        comp.box = {y0, x0, y1 - y0 + 1, x1 - x0 + 1};
        out.push_back(std::move(comp));
    }
    return out;
}

namespace {

ExemplarItem crop_component(const TrainSample& sample, const Component& comp, int cls, int W) {
    const Box& b = comp.box;
    Tensor3 px(3, b.height, b.width);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < b.height; ++y) {
            for (int x = 0; x < b.width; ++x) px(c, y, x) = sample.image.pixels()(c, b.y0 + y, b.x0 + x);
        }
    }
    HardLabelMap mask(b.height, b.width, 0);
    for (int i : comp.pixels) mask(i / W - b.y0, i % W - b.x0) = 1;
    ExemplarItem item;
    item.class_index = cls;
    item.crop = Image(std::move(px), sample.id() + "#" + std::to_string(cls) + "@" + std::to_string(b.y0) + "," +
                                         std::to_string(b.x0));
    item.crop_mask = std::move(mask);
    item.source_sample_id = sample.id();
    item.box = b;
    return item;
}

}  // namespace

ExemplarBuildResult build_exemplar_set(const Dataset& dataset, const std::vector<HardLabelMap>& hard_labels,
                                       const TaskSchedule& schedule, int t, int budget, int min_area,
                                       std::uint64_t seed, const ExemplarSet* previous) {
    if (hard_labels.size() != dataset.size()) throw ValidationError("need one hard pseudo-label map per sample");
    if (budget < 1) throw ValidationError("exemplar budget must be >= 1");
    const int acc = schedule.accumulated_count(t);
    std::map<int, std::vector<ExemplarItem>> candidates;
    if (previous != nullptr) {
        for (int c : previous->classes()) {
            if (c < acc) candidates[c] = previous->items(c);
        }
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const TrainSample& s = dataset.at(i);
        const HardLabelMap& hard = hard_labels[i];
        if (hard.height() != s.image.height() || hard.width() != s.image.width()) {
            throw ValidationError("pseudo-label size differs from image '" + s.id() + "'");
        }
        for (int c = 1; c < acc; ++c) {
            for (const auto& comp : connected_components(hard, c)) {
                if (comp.box.area() < min_area) continue;
                candidates[c].push_back(crop_component(s, comp, c, hard.width()));
            }
        }
    }
    ExemplarBuildResult result{ExemplarSet(budget), {}};
    for (int c = 1; c < acc; ++c) {
        auto& pool = candidates[c];
        if (pool.empty()) {
            result.warnings.push_back("class '" + schedule.name_of(c) + "' has no exemplar candidates");
            continue;
        }
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
        auto picks = rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(budget));
        std::sort(picks.begin(), picks.end());
        for (auto k : picks) result.set.add(pool[k]);
    }
    return result;
}

HardLabelMap paste_mask(const ExemplarItem& exemplar, const Region& region, int height, int width) {
    HardLabelMap out(height, width, 0);
    const auto& m = exemplar.crop_mask;
    for (int y = 0; y < region.height; ++y) {
        const int sy = std::min(m.height() - 1, static_cast<int>((y + 0.5) * m.height() / region.height));
        for (int x = 0; x < region.width; ++x) {
            const int sx = std::min(m.width() - 1, static_cast<int>((x + 0.5) * m.width() / region.width));
            const int yy = region.y0 + y;
            const int xx = region.x0 + x;
            if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;
            out(yy, xx) = m(sy, sx);
        }
    }
    return out;
}

Region random_region(int height, int width, const ExemplarItem& exemplar, const RegionConfig& cfg, Rng& rng) {
    const double side = rng.uniform(cfg.scale_min, cfg.scale_max) * std::min(height, width);
    const int ch = exemplar.crop.height();
    const int cw = exemplar.crop.width();
    int rh, rw;
    if (cw >= ch) {
        rw = std::max(1, static_cast<int>(std::lround(side)));
        rh = std::max(1, static_cast<int>(std::lround(side * ch / cw)));
    } else {
        rh = std::max(1, static_cast<int>(std::lround(side)));
        rw = std::max(1, static_cast<int>(std::lround(side * cw / ch)));
    }
    const double cy = rng.uniform() * height;
    const double cx = rng.uniform() * width;
    int y0 = static_cast<int>(std::floor(cy - rh / 2.0));
    int x0 = static_cast<int>(std::floor(cx - rw / 2.0));
    int y1 = y0 + rh;
    int x1 = x0 + rw;
    y0 = std::max(0, y0);
    x0 = std::max(0, x0);
    y1 = std::min(height, y1);
    x1 = std::min(width, x1);
    return {y0, x0, std::max(1, y1 - y0), std::max(1, x1 - x0)};
}

AugmentResult augment(const TrainSample& scene, const ExemplarSet& set, const ImageEditor& editor, Rng& rng,
                      const RegionConfig& cfg) {
    AugmentResult r;
    r.sample = scene;
    if (set.empty()) return r;
    const auto classes = set.classes();
    const int cls = classes[rng.index(classes.size())];
    const auto& items = set.items(cls);
    const ExemplarItem& item = items[rng.index(items.size())];
    const int H = scene.image.height();
    const int W = scene.image.width();
    r.region = random_region(H, W, item, cfg, rng);
    Image edited = editor.edit(scene.image, r.region, item);
    if (edited.height() != H || edited.width() != W) throw ValidationError("editor changed the image size");
    r.sample.image = Image(edited.pixels(), scene.id() + "+aug");
    r.sample.weak_labels = scene.weak_labels.with(cls);
    if (scene.hidden_mask) {
        const HardLabelMap pasted = paste_mask(item, r.region, H, W);
        HardLabelMap mask = *scene.hidden_mask;
        for (int i = 0; i < mask.size(); ++i) {
            if (pasted[i] == 1) mask[i] = cls;
        }
        r.sample.hidden_mask = std::move(mask);
    }
    r.applied = true;
    r.exemplar_class = cls;
    return r;
}

void save_exemplar_set(const std::filesystem::path& dir, const ExemplarSet& set, const TaskSchedule& schedule) {
    using nlohmann::json;
    json index = json::object();
    index["budget_per_class"] = set.budget_per_class();
    index["classes"] = json::array();
    for (int c : set.classes()) {
        const std::string name = schedule.name_of(c);
        const auto cdir = dir / name;
        json items = json::array();
        int k = 0;
        for (const auto& item : set.items(c)) {
            char stem[32];
            std::snprintf(stem, sizeof(stem), "item_%03d", k++);
            io::write_image_png(cdir / (std::string(stem) + ".png"), item.crop);
            io::write_mask_png(cdir / (std::string(stem) + "_mask.png"), item.crop_mask);
            items.push_back({{"crop", std::string(stem) + ".png"},
                             {"mask", std::string(stem) + "_mask.png"},
                             {"source_id", item.source_sample_id},
                             {"box", {item.box.y0, item.box.x0, item.box.height, item.box.width}}});
        }
        std::filesystem::create_directories(cdir);
        std::ofstream(cdir / "manifest.json") << json{{"class", name}, {"items", items}}.dump(2) << '\n';
        index["classes"].push_back(name);
    }
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "index.json") << index.dump(2) << '\n';
}

ExemplarSet load_exemplar_set(const std::filesystem::path& dir, const TaskSchedule& schedule, int budget_per_class) {
    using nlohmann::json;
    std::ifstream in(dir / "index.json");
    if (!in) throw MissingArtifactError("no exemplar store at '" + dir.string() + "'");
    const json index = json::parse(in);
    ExemplarSet set(budget_per_class);
    for (const auto& name_j : index.at("classes")) {
        const auto name = name_j.get<std::string>();
        const auto idx = schedule.index_of(name);
        if (!idx) throw ConfigError("exemplar class '" + name + "' is not in the schedule");
        std::ifstream min(dir / name / "manifest.json");
        if (!min) throw IoError("missing exemplar manifest for class '" + name + "'");
        const json m = json::parse(min);
        for (const auto& it : m.at("items")) {
            ExemplarItem item;
            item.class_index = *idx;
            item.source_sample_id = it.at("source_id").get<std::string>();
            const auto b = it.at("box").get<std::vector<int>>();
            item.box = {b.at(0), b.at(1), b.at(2), b.at(3)};
            item.crop = io::read_image_png(dir / name / it.at("crop").get<std::string>(), item.source_sample_id);
            item.crop_mask = io::read_mask_png(dir / name / it.at("mask").get<std::string>());
            set.add(std::move(item));
        }
    }
    return set;
}

}  // namespace wsciss
