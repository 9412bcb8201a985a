#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "wsciss/nn.hpp"
#include "wsciss/types.hpp"

namespace wsciss {

struct SegNetConfig {
    int stem_channels = 16;
    /// D: channels of the shared feature map F.
    int feature_channels = 32;
    /// Input size / feature size: 1, 2 or 4.
    int output_stride = 4;
    int decoder_width = 32;
    /// Localizer: 3x3 conv -> 1x1 conv -> 1x1 conv to classes.
    int localizer_width1 = 256;
    int localizer_width2 = 256;
    /// Std of the initial output-layer weights of both heads.
    double head_weight_std = 0.01;
    /// Initialization of head channels added by extend_heads.
    double new_head_weight_std = 0.01;
    double new_head_prior = 0.01;
    /// Localizer new channels: image-level pooling cannot lift channels
    /// that start far below the others, so they start neutral.
    double new_localizer_prior = 0.5;

    /// Run-time settings (head init) taken from `other`, architecture kept.
    void adopt_init(const SegNetConfig& other);

    void validate() const;
};

struct SegNetOutput {
    Tensor3 features;
    LabelMap decoder_logits;
    LabelMap localizer_logits;
};

/// Shared encoder (4 convs, two of stride 2) feeding a decoder head and a
/// localizer head; both heads upsample bilinearly to the input size.
class SegNet {
public:
    /// Intermediate activations of one forward pass, consumed by backward().
    struct Tape {
        std::array<nn::Conv2d::Cache, 4> enc;
        std::array<Tensor3, 3> enc_act;
        std::array<nn::Conv2d::Cache, 2> dec;
        Tensor3 dec_act;
        std::array<nn::Conv2d::Cache, 3> loc;
        std::array<Tensor3, 2> loc_act;
        int feat_h = 0;
        int feat_w = 0;
    };

    SegNet(const SegNetConfig& cfg, int num_classes, std::uint64_t seed);

    int num_classes() const noexcept { return num_classes_; }
    const SegNetConfig& config() const noexcept { return cfg_; }
    void adopt_init(const SegNetConfig& cfg) { cfg_.adopt_init(cfg); }

    SegNetOutput forward(const Image& image) const;
    SegNetOutput forward(const Image& image, Tape& tape) const;
    /// Features only (what knowledge distillation compares).
    Tensor3 encode(const Image& image) const;
    /// Argmax of the decoder logits.
    HardLabelMap predict(const Image& image) const;

    /// Accumulates parameter gradients given dL/d(outputs). Any gradient may
    /// be empty (treated as zero).
    void backward(const Tape& tape, const Tensor3& d_features, const Tensor3& d_decoder, const Tensor3& d_localizer);

    void zero_grad();
    std::vector<nn::Parameter*> parameters();
    std::vector<const nn::Parameter*> parameters() const;

    /// Appends head channels up to `new_class_count`; old channels unchanged.
    void grow_heads(int new_class_count, std::uint64_t seed);

private:
    SegNetConfig cfg_;
    int num_classes_;
    std::array<nn::Conv2d, 4> enc_;
    std::array<nn::Conv2d, 2> dec_;
    std::array<nn::Conv2d, 3> loc_;
};

/// Copy of `net` whose decoder and localizer emit `new_class_count` classes.
/// Throws ValidationError when new_class_count <= net.num_classes().
/// `init`, if given, supplies the new-channel initialization settings.
SegNet extend_heads(const SegNet& net, int new_class_count, std::uint64_t seed, const SegNetConfig* init = nullptr);

/// Immutable inference-only snapshot; safe to query from several threads.
class FrozenSegNet {
public:
    explicit FrozenSegNet(SegNet net) : net_(std::make_shared<const SegNet>(std::move(net))) {}

    int num_classes() const noexcept { return net_->num_classes(); }
    SegNetOutput forward(const Image& image) const { return net_->forward(image); }
    Tensor3 encode(const Image& image) const { return net_->encode(image); }
    HardLabelMap predict(const Image& image) const { return net_->predict(image); }
    const SegNet& network() const noexcept { return *net_; }

private:
    std::shared_ptr<const SegNet> net_;
};

FrozenSegNet freeze(const SegNet& net);

}  // namespace wsciss
