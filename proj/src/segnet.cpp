#include "wsciss/segnet.hpp"

#include <cmath>

#include "wsciss/errors.hpp"

namespace wsciss {

void SegNetConfig::validate() const {
    for (int v : {stem_channels, feature_channels, decoder_width, localizer_width1, localizer_width2}) {
        if (v < 1 || v > 4096) throw ConfigError("network widths must be in [1, 4096]");
    }
    if (output_stride != 1 && output_stride != 2 && output_stride != 4) throw ConfigError("output_stride must be 1, 2 or 4");
    if (!(head_weight_std >= 0.0)) throw ConfigError("head_weight_std must be >= 0");
    if (!(new_head_weight_std >= 0.0)) throw ConfigError("new_head_weight_std must be >= 0");
    if (!(new_head_prior > 0.0 && new_head_prior < 1.0)) throw ConfigError("new_head_prior must be in (0,1)");
    if (!(new_localizer_prior > 0.0 && new_localizer_prior < 1.0)) {
        throw ConfigError("new_localizer_prior must be in (0,1)");
    }
}

void SegNetConfig::adopt_init(const SegNetConfig& other) {
    head_weight_std = other.head_weight_std;
    new_head_weight_std = other.new_head_weight_std;
    new_head_prior = other.new_head_prior;
    new_localizer_prior = other.new_localizer_prior;
}

SegNet::SegNet(const SegNetConfig& cfg, int num_classes, std::uint64_t seed)
    : cfg_(cfg), num_classes_(num_classes) {
    cfg_.validate();
    if (num_classes < 1) throw ValidationError("network needs at least one class");
    const int D = cfg.feature_channels;
    enc_ = {nn::Conv2d("encoder.0", 3, cfg.stem_channels, 3, 1), nn::Conv2d("encoder.1", cfg.stem_channels, D, 3, cfg.output_stride >= 2 ? 2 : 1),
            nn::Conv2d("encoder.2", D, D, 3, 1), nn::Conv2d("encoder.3", D, D, 3, cfg.output_stride >= 4 ? 2 : 1)};
    dec_ = {nn::Conv2d("decoder.0", D, cfg.decoder_width, 3, 1),
            nn::Conv2d("decoder.1", cfg.decoder_width, num_classes, 1, 1)};
    loc_ = {nn::Conv2d("localizer.0", D, cfg.localizer_width1, 3, 1),
            nn::Conv2d("localizer.1", cfg.localizer_width1, cfg.localizer_width2, 1, 1),
            nn::Conv2d("localizer.2", cfg.localizer_width2, num_classes, 1, 1)};
    Rng rng(seed);
    for (auto& l : enc_) l.init_he(rng);
    for (auto& l : dec_) l.init_he(rng);
    for (auto& l : loc_) l.init_he(rng);
    // Output layers start near zero so both heads begin close to uniform.
    dec_[1].init_normal(rng, cfg.head_weight_std, 0.0);
    loc_[2].init_normal(rng, cfg.head_weight_std, 0.0);
}

SegNetOutput SegNet::forward(const Image& image) const {
    Tape tape;
    return forward(image, tape);
}

SegNetOutput SegNet::forward(const Image& image, Tape& tape) const {
    const int H = image.height();
    const int W = image.width();
    Tensor3 x = image.pixels();
    for (int i = 0; i < 4; ++i) {
        x = enc_[static_cast<std::size_t>(i)].forward(x, &tape.enc[static_cast<std::size_t>(i)]);
        if (i < 3) {
            nn::relu_inplace(x);
            tape.enc_act[static_cast<std::size_t>(i)] = x;
        }
    }
    Tensor3 features = x;
    tape.feat_h = features.height();
    tape.feat_w = features.width();

    Tensor3 d = dec_[0].forward(features, &tape.dec[0]);
    nn::relu_inplace(d);
    tape.dec_act = d;
    d = dec_[1].forward(d, &tape.dec[1]);

    Tensor3 l = loc_[0].forward(features, &tape.loc[0]);
    nn::relu_inplace(l);
    tape.loc_act[0] = l;
    l = loc_[1].forward(l, &tape.loc[1]);
    nn::relu_inplace(l);
    tape.loc_act[1] = l;
    l = loc_[2].forward(l, &tape.loc[2]);

    return {std::move(features), LabelMap(nn::resize_bilinear(d, H, W), ScoreKind::logits),
            LabelMap(nn::resize_bilinear(l, H, W), ScoreKind::logits)};
}

Tensor3 SegNet::encode(const Image& image) const {
    Tensor3 x = image.pixels();
    for (int i = 0; i < 4; ++i) {
        x = enc_[static_cast<std::size_t>(i)].forward(x, nullptr);
        if (i < 3) nn::relu_inplace(x);
    }
    return x;
}

HardLabelMap SegNet::predict(const Image& image) const {
    Tape tape;
    const auto out = forward(image, tape);
    const Tensor3& z = out.decoder_logits.scores();
    HardLabelMap labels(z.height(), z.width());
    for (int y = 0; y < z.height(); ++y) {
        for (int x = 0; x < z.width(); ++x) {
            int best = 0;
            for (int c = 1; c < z.channels(); ++c) {
                if (z(c, y, x) > z(best, y, x)) best = c;
            }
            labels(y, x) = best;
        }
    }
    return labels;
}

void SegNet::backward(const Tape& tape, const Tensor3& d_features, const Tensor3& d_decoder,
                      const Tensor3& d_localizer) {
    Tensor3 dF(cfg_.feature_channels, tape.feat_h, tape.feat_w);
    auto add_into = [](Tensor3& acc, const Tensor3& g) {
        for (std::size_t i = 0; i < acc.size(); ++i) acc.values()[i] += g.values()[i];
    };
    if (!d_features.empty()) add_into(dF, d_features);
    if (!d_decoder.empty()) {
        Tensor3 g = nn::resize_bilinear_backward(d_decoder, tape.feat_h, tape.feat_w);
        g = dec_[1].backward(g, tape.dec[1]);
        nn::relu_backward(g, tape.dec_act);
        add_into(dF, dec_[0].backward(g, tape.dec[0]));
    }
    if (!d_localizer.empty()) {
        Tensor3 g = nn::resize_bilinear_backward(d_localizer, tape.feat_h, tape.feat_w);
        g = loc_[2].backward(g, tape.loc[2]);
        nn::relu_backward(g, tape.loc_act[1]);
        g = loc_[1].backward(g, tape.loc[1]);
        nn::relu_backward(g, tape.loc_act[0]);
        add_into(dF, loc_[0].backward(g, tape.loc[0]));
    }
    Tensor3 g = std::move(dF);
    for (int i = 3; i >= 0; --i) {
        g = enc_[static_cast<std::size_t>(i)].backward(g, tape.enc[static_cast<std::size_t>(i)]);
        if (i > 0) nn::relu_backward(g, tape.enc_act[static_cast<std::size_t>(i - 1)]);
    }
}

void SegNet::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

std::vector<nn::Parameter*> SegNet::parameters() {
    std::vector<nn::Parameter*> out;
    auto add = [&](nn::Conv2d& l) {
        out.push_back(&l.weight());
        out.push_back(&l.bias());
    };
    for (auto& l : enc_) add(l);
    for (auto& l : dec_) add(l);
    for (auto& l : loc_) add(l);
    return out;
}

std::vector<const nn::Parameter*> SegNet::parameters() const {
    std::vector<const nn::Parameter*> out;
    for (auto* p : const_cast<SegNet*>(this)->parameters()) out.push_back(p);
    return out;
}

void SegNet::grow_heads(int new_class_count, std::uint64_t seed) {
    if (new_class_count <= num_classes_) {
        throw ValidationError("extend_heads: new class count " + std::to_string(new_class_count) +
                              " must exceed the current " + std::to_string(num_classes_));
    }
    Rng rng(seed);
    auto logit = [](double p) { return std::log(p / (1.0 - p)); };
    dec_[1].grow_outputs(new_class_count, cfg_.new_head_weight_std, logit(cfg_.new_head_prior), rng);
    loc_[2].grow_outputs(new_class_count, cfg_.new_head_weight_std, logit(cfg_.new_localizer_prior), rng);
    num_classes_ = new_class_count;
}

SegNet extend_heads(const SegNet& net, int new_class_count, std::uint64_t seed, const SegNetConfig* init) {
    SegNet out = net;
    if (init != nullptr) out.adopt_init(*init);
    out.grow_heads(new_class_count, seed);
    return out;
}

FrozenSegNet freeze(const SegNet& net) {
    return FrozenSegNet(net);
}

}  // namespace wsciss
