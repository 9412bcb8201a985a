#include "wsciss/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "wsciss/dataset.hpp"
#include "wsciss/errors.hpp"
#include "wsciss/rng.hpp"

namespace wsciss {
namespace {

const std::map<std::string, std::array<double, 3>>& palette() {
    static const std::map<std::string, std::array<double, 3>> p{
        {"circle", {0.90, 0.20, 0.20}}, {"square", {0.20, 0.80, 0.25}}, {"triangle", {0.20, 0.35, 0.90}},
        {"ring", {0.90, 0.85, 0.15}},   {"cross", {0.80, 0.25, 0.85}},  {"diamond", {0.15, 0.85, 0.85}},
    };
    return p;
}

}  // namespace

const std::vector<std::string>& synthetic_shapes() {
    static const std::vector<std::string> s{"circle", "square", "triangle", "ring", "cross", "diamond"};
    return s;
}

std::vector<char> rasterize_shape(const std::string& shape, double cy, double cx, double r, int height, int width) {
    std::vector<char> m(static_cast<std::size_t>(height) * width, 0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dy = (y + 0.5 - cy) / r;
            const double dx = (x + 0.5 - cx) / r;
            bool in = false;
            if (shape == "circle") {
                in = dy * dy + dx * dx <= 1.0;
            } else if (shape == "square") {
                in = std::abs(dy) <= 0.85 && std::abs(dx) <= 0.85;
            } else if (shape == "triangle") {
                // apex up, base at dy = 0.8
                in = dy <= 0.8 && dy >= -1.0 && std::abs(dx) <= (dy + 1.0) * 0.5;
            } else if (shape == "ring") {
                const double d = dy * dy + dx * dx;
                in = d <= 1.0 && d >= 0.36;
            } else if (shape == "cross") {
                in = (std::abs(dy) <= 1.0 && std::abs(dx) <= 0.33) || (std::abs(dx) <= 1.0 && std::abs(dy) <= 0.33);
            } else if (shape == "diamond") {
                in = std::abs(dy) + std::abs(dx) <= 1.0;
            } else {
                throw ConfigError("unknown synthetic shape '" + shape + "'");
            }
            m[static_cast<std::size_t>(y) * width + x] = in ? 1 : 0;
        }
    }
    return m;
}

std::vector<TrainSample> generate_synthetic(const SyntheticCorpusConfig& cfg, const TaskSchedule& schedule, int count,
                                            std::uint64_t seed, const std::string& id_prefix) {
    if (cfg.image_size < 8) throw ConfigError("synthetic.image_size must be >= 8");
    if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects) throw ConfigError("synthetic object counts are invalid");
    std::vector<int> classes;
    for (const auto& name : cfg.classes) {
        if (!palette().contains(name)) throw ConfigError("unknown synthetic shape '" + name + "'");
        const auto idx = schedule.index_of(name);
        if (!idx || *idx == kBackground) throw ConfigError("synthetic class '" + name + "' is not in the schedule");
        classes.push_back(*idx);
    }
    if (classes.empty()) throw ConfigError("synthetic.classes is empty");

    const int S = cfg.image_size;
    std::vector<TrainSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(n)));
        Tensor3 px(3, S, S);
        const double base = rng.uniform(0.25, 0.55);
        for (int y = 0; y < S; ++y) {
            for (int x = 0; x < S; ++x) {
                const double v = base + 0.06 * rng.normal();
                for (int c = 0; c < 3; ++c) px(c, y, x) = std::clamp(v + 0.02 * rng.normal(), 0.0, 1.0);
            }
        }
        HardLabelMap mask(S, S, kBackground);
        const int objects = cfg.min_objects + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.max_objects - cfg.min_objects + 1)));
        for (int k = 0; k < objects; ++k) {
            const std::size_t ci = rng.index(classes.size());
            const std::string& name = cfg.classes[ci];
            const double r = rng.uniform(0.14, 0.26) * S;
            const double cy = rng.uniform(r * 0.6, S - r * 0.6);
            const double cx = rng.uniform(r * 0.6, S - r * 0.6);
            const auto shape = rasterize_shape(name, cy, cx, r, S, S);
            const auto& col = palette().at(name);
            std::array<double, 3> tint;
            for (int c = 0; c < 3; ++c) tint[static_cast<std::size_t>(c)] = col[static_cast<std::size_t>(c)] + 0.05 * rng.normal();
            for (int i = 0; i < S * S; ++i) {
                if (!shape[static_cast<std::size_t>(i)]) continue;
                mask[i] = classes[ci];
                for (int c = 0; c < 3; ++c) {
                    px(c, i / S, i % S) = std::clamp(tint[static_cast<std::size_t>(c)] + 0.03 * rng.normal(), 0.0, 1.0);
                }
            }
        }
        std::vector<int> present;
        for (int v : mask.labels()) {
            if (v > kBackground) present.push_back(v);
        }
        std::sort(present.begin(), present.end());
        present.erase(std::unique(present.begin(), present.end()), present.end());
        char id[64];
        std::snprintf(id, sizeof(id), "%s%05d", id_prefix.c_str(), n);
        out.push_back(TrainSample{Image(std::move(px), id), ImageLevelLabels(present), std::move(mask)});
    }
    return out;
}

SyntheticCorpusPaths write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpusConfig& cfg,
                                            const TaskSchedule& schedule) {
    SyntheticCorpusPaths p{dir / "train", dir / "eval"};
    write_samples(p.train, generate_synthetic(cfg, schedule, cfg.train_images, mix_seed(cfg.seed, 1), "train_"), schedule);
    write_samples(p.eval, generate_synthetic(cfg, schedule, cfg.eval_images, mix_seed(cfg.seed, 2), "eval_"), schedule);
    return p;
}

}  // namespace wsciss
