#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wsciss/tensor.hpp"
#include "wsciss/types.hpp"

namespace wsciss {

/// alpha1/alpha2 weight the BCE-pixel and contrastive terms; beta1/beta2
/// the distillation and localizer-transfer terms of incremental steps.
struct LossWeights {
    double alpha1 = 1.0;
    double alpha2 = 0.1;
    double beta1 = 0.0;
    double beta2 = 0.0;

    void validate() const;
};

struct ContrastiveSamplingConfig {
    int samples_per_class = 16;
    double temperature = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Constants of normalized global weighted pooling and the focal penalty.
struct ImageLevelLossConfig {
    double ngwp_epsilon = 1.0;
    double focal_power = 3.0;
    double focal_lambda = 0.01;
};

struct KdConfig {
    /// Divide the squared norm by the element count.
    bool average = true;
};

/// Loss value plus gradient with respect to the loss input (logits or
/// features). `degenerate` marks inputs for which the loss is defined as 0.
struct LossValue {
    double value = 0.0;
    Tensor3 grad;
    bool degenerate = false;
};

// Value-only forms taking activations.

/// -mean over non-ignore pixels of log p[label].
double loss_ce_pix(const LabelMap& cls_probs, const HardLabelMap& hard);
/// -(1/HW) sum_c [soft log p + (1 - soft) log(1 - p)].
double loss_bce_pix(const LabelMap& cls_probs_sigmoid, const LabelMap& soft);
double loss_kd(const Tensor3& features, const Tensor3& prev_features, const KdConfig& cfg = {});

// Logit/feature forms with analytic gradients.

LossValue ce_pix(const LabelMap& dec_logits, const HardLabelMap& hard);
LossValue bce_pix(const LabelMap& dec_logits, const LabelMap& soft);
/// `hard` must be on the feature grid. Features are L2-normalized per pixel.
LossValue contrastive(const Tensor3& features, const HardLabelMap& hard, const ContrastiveSamplingConfig& cfg);
/// Image-level BCE over the `supervised` channels of the localizer.
LossValue bce_img(const LabelMap& loc_logits, const ImageLevelLabels& weak, std::span<const int> supervised,
                  const ImageLevelLossConfig& cfg = {});
LossValue kd(const Tensor3& features, const Tensor3& prev_features, const KdConfig& cfg = {});
/// BCE between sigmoid(prev logits) and sigmoid of the first |prev| channels
/// of the localizer; gradient is with respect to the localizer logits.
LossValue bce_loc(const LabelMap& prev_cls_logits, const LabelMap& loc_logits);

/// Value of the contrastive loss; `degenerate` set when no class has two samples.
LossValue loss_contrastive(const Tensor3& features, const HardLabelMap& hard, const ContrastiveSamplingConfig& cfg);
double loss_bce_img(const LabelMap& loc_logits, const ImageLevelLabels& weak, std::span<const int> supervised,
                    const ImageLevelLossConfig& cfg = {});
double loss_bce_loc(const LabelMap& prev_cls_logits, const LabelMap& loc_logits);

struct LossParts {
    double ce_pix = 0.0;
    double bce_img = 0.0;
    double bce_pix = 0.0;
    double cl = 0.0;
    double kd = 0.0;
    double bce_loc = 0.0;
};

/// ce_pix + bce_img + alpha1 * bce_pix + alpha2 * cl
double total_wsss(const LossParts& parts, const LossWeights& w);
/// total_wsss + beta1 * kd + beta2 * bce_loc
double total_ci_wsss(const LossParts& parts, const LossWeights& w);

/// Nearest-neighbour resampling of a label map to (height, width).
HardLabelMap resize_nearest(const HardLabelMap& labels, int height, int width);

}  // namespace wsciss
