#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wsciss/types.hpp"

namespace wsciss {

/// Per-pixel normalized entropy of the localizer distribution, in [0, 1].
class EntropyWeights {
public:
    EntropyWeights() = default;
    EntropyWeights(int height, int width, std::vector<double> values);
    static EntropyWeights constant(int height, int width, double value);

    int height() const noexcept { return h_; }
    int width() const noexcept { return w_; }
    double operator()(int y, int x) const noexcept { return w_values_[static_cast<std::size_t>(y) * w_ + x]; }
    const std::vector<double>& values() const& noexcept { return w_values_; }
    std::vector<double> values() && { return std::move(w_values_); }

private:
    int h_ = 0;
    int w_ = 0;
    std::vector<double> w_values_;
};

inline constexpr double kLogEpsilon = 1e-12;

/// w = -sum_c p log p / log(normalizer) with p the pixel-wise softmax of the
/// logits. `normalizer_classes` defaults to the channel count.
EntropyWeights entropy_weights(const LabelMap& loc_logits, std::optional<int> normalizer_classes = std::nullopt);

/// out = w * fdt + (1 - w) * sigmoid(loc_logits), per channel and pixel.
LabelMap fuse(const LabelMap& fdt, const LabelMap& loc_logits, const EntropyWeights& w);

double sigmoid(double z) noexcept;
LabelMap sigmoid_map(const LabelMap& logits);
LabelMap softmax_map(const LabelMap& logits);

/// Class indices to prompt for: weak labels plus (at t > 1) every
/// non-background class in the frozen network's prediction. Sorted.
std::vector<int> build_prompt(const TrainSample& sample, const HardLabelMap* prev_prediction,
                              const TaskSchedule& schedule, int t);
std::vector<std::string> prompt_names(const std::vector<int>& prompt, const TaskSchedule& schedule);

/// Open-set detector + promptable segmenter, seen as one producer of dense
/// masks. Output has `num_classes` channels: prompted channels carry the
/// masks, other foreground channels are exactly zero, and the background
/// channel is 1 - max over prompted channels.
class FoundationOracle {
public:
    virtual ~FoundationOracle() = default;
    virtual LabelMap segment(const TrainSample& sample, std::span<const int> prompt, int num_classes) const = 0;
    /// Stable description of the configuration; hashed into cache keys.
    virtual std::string config_key() const = 0;
};

/// Reads the hidden mask, dilates every prompted class mask and flips each
/// pixel's membership with probability `noise_rate`.
class SyntheticOracle final : public FoundationOracle {
public:
    SyntheticOracle(double noise_rate, int dilation_radius, std::uint64_t seed);

    LabelMap segment(const TrainSample& sample, std::span<const int> prompt, int num_classes) const override;
    std::string config_key() const override;

    double noise_rate() const noexcept { return noise_rate_; }
    int dilation_radius() const noexcept { return dilation_radius_; }

private:
    double noise_rate_;
    int dilation_radius_;
    std::uint64_t seed_;
};

struct PseudoLabelOptions {
    double background_threshold = 0.5;
    /// false: pseudo-labels come from the localizer alone (w = 0).
    bool use_fusion = true;
    /// Entropy normalizer: accumulated class count (default) or the novel
    /// class count |C^t| when false.
    bool normalize_by_accumulated = true;
    int novel_class_count = 0;
};

struct PseudoLabels {
    LabelMap soft;
    HardLabelMap hard;
};

/// Fusion + hardening for one sample given the oracle masks and the
/// localizer logits. Pixels whose foreground fused scores are all below the
/// threshold become background.
PseudoLabels fuse_pseudo_labels(const LabelMap& fdt, const LabelMap& loc_logits, const PseudoLabelOptions& opts);

using LocalizerForward = std::function<LabelMap(const Image&)>;
using FrozenPredictor = std::function<HardLabelMap(const Image&)>;

/// build_prompt -> oracle -> entropy_weights -> fuse -> harden.
PseudoLabels generate_pseudo_labels(const TrainSample& sample, const FoundationOracle& oracle,
                                    const LocalizerForward& localizer, const FrozenPredictor* prev_net,
                                    const TaskSchedule& schedule, int t, const PseudoLabelOptions& opts = {});

/// Oracle call with failures re-raised as OracleError carrying the sample id.
LabelMap run_oracle(const FoundationOracle& oracle, const TrainSample& sample, std::span<const int> prompt,
                    int num_classes);

std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace wsciss
