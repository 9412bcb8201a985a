#include "wsciss/trainer.hpp"

#include <cmath>

#include "wsciss/errors.hpp"

namespace wsciss {
namespace {

void add_scaled(Tensor3& acc, const Tensor3& g, double s) {
    if (s == 0.0 || g.empty()) return;
    for (std::size_t i = 0; i < acc.size(); ++i) acc.values()[i] += s * g.values()[i];
}

void check_finite(double v, const char* term) {
    if (!std::isfinite(v)) throw NumericError(term, std::string("loss term '") + term + "' is not finite");
}

void accumulate_parts(LossParts& acc, const LossParts& p) {
    acc.ce_pix += p.ce_pix;
    acc.bce_img += p.bce_img;
    acc.bce_pix += p.bce_pix;
    acc.cl += p.cl;
    acc.kd += p.kd;
    acc.bce_loc += p.bce_loc;
}

LossParts scaled(LossParts p, double s) {
    p.ce_pix *= s;
    p.bce_img *= s;
    p.bce_pix *= s;
    p.cl *= s;
    p.kd *= s;
    p.bce_loc *= s;
    return p;
}

}  // namespace

void OptimizerConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(clip_norm >= 0.0) || !std::isfinite(clip_norm)) throw ConfigError("clip_norm must be finite and >= 0");
}

double total_loss(const LossParts& parts, const LossWeights& w, bool incremental) {
    return incremental ? total_ci_wsss(parts, w) : total_wsss(parts, w);
}

PseudoLabelProvider fusion_provider(PseudoLabelOptions opts) {
    return [opts](const TrainingExample& ex, const LabelMap& loc) { return fuse_pseudo_labels(ex.fdt, loc, opts); };
}

Trainer::Trainer(SegNet& net, OptimizerConfig opt, LossConfig loss, std::vector<int> supervised_classes,
                 PseudoLabelProvider provider, std::uint64_t seed)
    : net_(net),
      opt_(opt),
      loss_(loss),
      supervised_(std::move(supervised_classes)),
      provider_(std::move(provider)),
      seed_(seed),
      rng_(seed) {
    opt_.validate();
    loss_.weights.validate();
    loss_.contrastive.validate();
    for (auto* p : net_.parameters()) velocity_.emplace_back(p->value.size(), 0.0);
}

LossParts Trainer::compute(const SegNet& net, const TrainingExample& ex, std::uint64_t step_seed, SegNet::Tape* tape,
                           Tensor3* d_features, Tensor3* d_decoder, Tensor3* d_localizer) const {
    SegNet::Tape local;
    SegNet::Tape& tp = tape != nullptr ? *tape : local;
    const SegNetOutput out = net.forward(ex.image, tp);
    const PseudoLabels pl = provider_(ex, out.localizer_logits);
    const LossWeights& w = loss_.weights;

    LossParts parts;
    const LossValue ce = ce_pix(out.decoder_logits, pl.hard);
    const LossValue bp = bce_pix(out.decoder_logits, pl.soft);
    ContrastiveSamplingConfig ccfg = loss_.contrastive;
    ccfg.seed = step_seed;
    const LossValue cl =
        contrastive(out.features, resize_nearest(pl.hard, out.features.height(), out.features.width()), ccfg);
    const LossValue bi = bce_img(out.localizer_logits, ex.weak, supervised_, loss_.image_level);
    parts.ce_pix = ce.value;
    parts.bce_pix = bp.value;
    parts.cl = cl.value;
    parts.bce_img = bi.value;
    check_finite(parts.ce_pix, "ce_pix");
    check_finite(parts.bce_pix, "bce_pix");
    check_finite(parts.cl, "contrastive");
    check_finite(parts.bce_img, "bce_img");

    LossValue kd_v;
    LossValue bl;
    const bool incremental = ex.prev_features.has_value();
    if (incremental) {
        if (!ex.prev_logits) throw ValidationError("incremental example lacks frozen decoder logits");
        kd_v = kd(out.features, *ex.prev_features, loss_.kd);
        bl = bce_loc(*ex.prev_logits, out.localizer_logits);
        parts.kd = kd_v.value;
        parts.bce_loc = bl.value;
        check_finite(parts.kd, "kd");
        check_finite(parts.bce_loc, "bce_loc");
    }

    if (d_decoder != nullptr) {
        *d_decoder = Tensor3(out.decoder_logits.num_classes(), ex.image.height(), ex.image.width());
        add_scaled(*d_decoder, ce.grad, 1.0);
        add_scaled(*d_decoder, bp.grad, w.alpha1);
        *d_localizer = Tensor3(out.localizer_logits.num_classes(), ex.image.height(), ex.image.width());
        add_scaled(*d_localizer, bi.grad, 1.0);
        *d_features = Tensor3(out.features.channels(), out.features.height(), out.features.width());
        add_scaled(*d_features, cl.grad, w.alpha2);
        if (incremental) {
            add_scaled(*d_localizer, bl.grad, w.beta2);
            add_scaled(*d_features, kd_v.grad, w.beta1);
        }
    }
    return parts;
}

LossParts Trainer::accumulate_gradients(const TrainingExample& ex, std::uint64_t step_seed, double scale) {
    SegNet::Tape tape;
    Tensor3 dF, dD, dL;
    const LossParts parts = compute(net_, ex, step_seed, &tape, &dF, &dD, &dL);
    for (Tensor3* g : {&dF, &dD, &dL}) {
        for (double& v : g->values()) v *= scale;
    }
    net_.backward(tape, dF, dD, dL);
    return parts;
}

EpochReport Trainer::evaluate(const std::vector<TrainingExample>& examples) const {
    EpochReport r;
    r.epoch = epoch_;
    bool incremental = false;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        accumulate_parts(r.parts, compute(net_, examples[i], mix_seed(seed_, i), nullptr, nullptr, nullptr, nullptr));
        incremental = incremental || examples[i].prev_features.has_value();
    }
    r.examples = static_cast<int>(examples.size());
    if (r.examples > 0) r.parts = scaled(r.parts, 1.0 / r.examples);
    r.total = total_loss(r.parts, loss_.weights, incremental);
    return r;
}

void Trainer::step() {
    auto params = net_.parameters();
    double scale = 1.0;
    if (opt_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto* p : params) {
            for (double g : p->grad) sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > opt_.clip_norm) scale = opt_.clip_norm / norm;
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& v = velocity_[k];
        auto& p = *params[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            v[i] = opt_.momentum * v[i] + scale * p.grad[i];
            p.value[i] -= opt_.lr * v[i];
        }
    }
}

EpochReport Trainer::run_epoch(const std::vector<TrainingExample>& examples) {
    std::vector<const TrainingExample*> ptrs;
    for (const auto& ex : examples) ptrs.push_back(&ex);
    return run_epoch(ptrs);
}

EpochReport Trainer::run_epoch(const std::vector<const TrainingExample*>& examples) {
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_.shuffle(order);
    // Head growth between tasks changes parameter sizes.
    auto params = net_.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (velocity_[k].size() != params[k]->value.size()) velocity_[k].assign(params[k]->value.size(), 0.0);
    }
    EpochReport r;
    bool incremental = false;
    const std::size_t bs = static_cast<std::size_t>(opt_.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t end = std::min(order.size(), start + bs);
        net_.zero_grad();
        for (std::size_t j = start; j < end; ++j) {
            const auto& ex = *examples[order[j]];
            const std::uint64_t step_seed = rng_.next();
            accumulate_parts(r.parts, accumulate_gradients(ex, step_seed, 1.0 / static_cast<double>(end - start)));
            incremental = incremental || ex.prev_features.has_value();
        }
        step();
    }
    ++epoch_;
    r.epoch = epoch_;
    r.examples = static_cast<int>(examples.size());
    if (r.examples > 0) r.parts = scaled(r.parts, 1.0 / r.examples);
    r.total = total_loss(r.parts, loss_.weights, incremental);
    return r;
}

void Trainer::restore(int epochs_done, std::vector<std::vector<double>> velocity, const std::string& rng_state) {
    auto params = net_.parameters();
    if (velocity.size() != params.size()) throw ValidationError("optimizer state does not match the network");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (velocity[k].size() != params[k]->value.size()) throw ValidationError("optimizer state does not match the network");
    }
    epoch_ = epochs_done;
    velocity_ = std::move(velocity);
    rng_.set_state(rng_state);
}

TrainingReport train_epochs(Trainer& trainer, int epochs, const std::vector<TrainingExample>& examples,
                            const std::function<std::vector<TrainingExample>(int epoch)>& extra_examples) {
    TrainingReport report;
    report.initial = trainer.evaluate(examples);
    for (int e = 0; e < epochs; ++e) {
        if (extra_examples) {
            const auto extra = extra_examples(trainer.epochs_done());
            std::vector<const TrainingExample*> all;
            for (const auto& ex : examples) all.push_back(&ex);
            for (const auto& ex : extra) all.push_back(&ex);
            report.epochs.push_back(trainer.run_epoch(all));
        } else {
            report.epochs.push_back(trainer.run_epoch(examples));
        }
    }
    return report;
}

}  // namespace wsciss
