#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wsciss/dataset.hpp"
#include "wsciss/rng.hpp"
#include "wsciss/types.hpp"

namespace wsciss {

struct Box {
    int y0 = 0;
    int x0 = 0;
    int height = 0;
    int width = 0;

    int area() const noexcept { return height * width; }
    bool contains(int y, int x) const noexcept { return y >= y0 && y < y0 + height && x >= x0 && x < x0 + width; }
    bool operator==(const Box&) const = default;
};

/// Cropped object: tight box around one connected pseudo-labeled region.
struct ExemplarItem {
    int class_index = 0;
    Image crop;
    HardLabelMap crop_mask;  // 1 = object, 0 = other
    std::string source_sample_id;
    Box box;  // location in the source image

    void validate() const;
};

class ExemplarSet {
public:
    explicit ExemplarSet(int budget_per_class = 50);

    int budget_per_class() const noexcept { return budget_; }
    /// Throws if the class is full.
    void add(ExemplarItem item);
    const std::vector<ExemplarItem>& items(int class_index) const;
    std::vector<int> classes() const;
    std::size_t total() const;
    bool empty() const { return total() == 0; }
    /// Every class must be a foreground class below `accumulated_count`.
    void validate(int accumulated_count) const;

private:
    int budget_;
    std::map<int, std::vector<ExemplarItem>> items_;
};

struct Component {
    Box box;
    std::vector<int> pixels;  // raster indices in the source map
};

/// 4-connected components of `cls` in raster order of their first pixel.
std::vector<Component> connected_components(const HardLabelMap& labels, int cls);

struct ExemplarBuildResult {
    ExemplarSet set;
    /// Classes without any valid component.
    std::vector<std::string> warnings;
};

/// Crops every component with box area >= min_area out of the hard
/// pseudo-labels of `dataset`, pools them with items carried over from
/// `previous`, and keeps a seeded random subset of at most `budget` per class.
ExemplarBuildResult build_exemplar_set(const Dataset& dataset, const std::vector<HardLabelMap>& hard_labels,
                                       const TaskSchedule& schedule, int t, int budget, int min_area,
                                       std::uint64_t seed, const ExemplarSet* previous = nullptr);

/// Editing region in scene coordinates.
using Region = Box;

/// Exemplar-guided editor: puts the exemplar's object into `region`.
class ImageEditor {
public:
    virtual ~ImageEditor() = default;
    virtual Image edit(const Image& scene, const Region& region, const ExemplarItem& exemplar) const = 0;
    /// Pixels farther than this from the region are never modified.
    virtual int feather_margin() const = 0;
};

/// Resizes the crop into the region and alpha-composites it under its mask,
/// with the mask edge softened by a Gaussian of sigma `feather`.
class MaskedBlendEditor final : public ImageEditor {
public:
    MaskedBlendEditor(double blend = 1.0, double feather = 1.0);

    Image edit(const Image& scene, const Region& region, const ExemplarItem& exemplar) const override;
    int feather_margin() const override;

private:
    double blend_;
    double feather_;
};

/// Runs `command scene.png region_mask.png exemplar.png output.png`. The
/// command may print a different output path as its last stdout line.
class SubprocessEditor final : public ImageEditor {
public:
    SubprocessEditor(std::string command, std::filesystem::path work_dir, int margin = 0);

    Image edit(const Image& scene, const Region& region, const ExemplarItem& exemplar) const override;
    int feather_margin() const override { return margin_; }

private:
    std::string command_;
    std::filesystem::path work_dir_;
    int margin_;
};

/// Crop mask resized (nearest) into `region` of a height x width canvas.
HardLabelMap paste_mask(const ExemplarItem& exemplar, const Region& region, int height, int width);

struct RegionConfig {
    double scale_min = 0.2;
    double scale_max = 0.5;
};

/// Uniform center, longer side uniform in [scale_min, scale_max] * min(H, W),
/// aspect following the crop, clipped to the image.
Region random_region(int height, int width, const ExemplarItem& exemplar, const RegionConfig& cfg, Rng& rng);

struct AugmentResult {
    TrainSample sample;
    bool applied = false;
    int exemplar_class = 0;
    Region region;
};

/// Composes a random exemplar into the scene. Weak labels gain the exemplar
/// class; the hidden mask (if any) gains the pasted object. An empty set is
/// a no-op with applied = false.
AugmentResult augment(const TrainSample& scene, const ExemplarSet& set, const ImageEditor& editor, Rng& rng,
                      const RegionConfig& cfg = {});

void save_exemplar_set(const std::filesystem::path& dir, const ExemplarSet& set, const TaskSchedule& schedule);
ExemplarSet load_exemplar_set(const std::filesystem::path& dir, const TaskSchedule& schedule, int budget_per_class);

}  // namespace wsciss
