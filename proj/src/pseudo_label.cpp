#include "wsciss/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "wsciss/errors.hpp"
#include "wsciss/rng.hpp"

namespace wsciss {

EntropyWeights::EntropyWeights(int height, int width, std::vector<double> values)
    : h_(height), w_(width), w_values_(std::move(values)) {
    if (w_values_.size() != static_cast<std::size_t>(height) * width) {
        throw ValidationError("entropy weight buffer does not match height*width");
    }
    for (double v : w_values_) {
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("entropy weight outside [0,1]");
    }
}

EntropyWeights EntropyWeights::constant(int height, int width, double value) {
    return EntropyWeights(height, width, std::vector<double>(static_cast<std::size_t>(height) * width, value));
}

double sigmoid(double z) noexcept {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

LabelMap sigmoid_map(const LabelMap& logits) {
    Tensor3 t = logits.scores();
    for (double& v : t.values()) v = sigmoid(v);
    return LabelMap(std::move(t), ScoreKind::probabilities);
}

LabelMap softmax_map(const LabelMap& logits) {
    const Tensor3& z = logits.scores();
    Tensor3 p(z.channels(), z.height(), z.width());
    for (int y = 0; y < z.height(); ++y) {
        for (int x = 0; x < z.width(); ++x) {
            double m = z(0, y, x);
            for (int c = 1; c < z.channels(); ++c) m = std::max(m, z(c, y, x));
            double sum = 0.0;
            for (int c = 0; c < z.channels(); ++c) sum += (p(c, y, x) = std::exp(z(c, y, x) - m));
            for (int c = 0; c < z.channels(); ++c) p(c, y, x) /= sum;
        }
    }
    return LabelMap(std::move(p), ScoreKind::probabilities);
}

EntropyWeights entropy_weights(const LabelMap& loc_logits, std::optional<int> normalizer_classes) {
    const int n = normalizer_classes.value_or(loc_logits.num_classes());
    if (n < 2) throw ValidationError("entropy weights need at least 2 classes (log 1 = 0 normalizer)");
    if (!loc_logits.scores().all_finite()) throw ValidationError("entropy weights: non-finite logits");
    const LabelMap p = softmax_map(loc_logits);
    const double denom = std::log(static_cast<double>(n));
    const int h = loc_logits.height();
    const int w = loc_logits.width();
    std::vector<double> out(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double ent = 0.0;
            for (int c = 0; c < p.num_classes(); ++c) {
                const double q = p(c, y, x);
                ent -= q * std::log(std::max(q, kLogEpsilon));
            }
            out[static_cast<std::size_t>(y) * w + x] = std::clamp(ent / denom, 0.0, 1.0);
        }
    }
    return EntropyWeights(h, w, std::move(out));
}

LabelMap fuse(const LabelMap& fdt, const LabelMap& loc_logits, const EntropyWeights& w) {
    const Tensor3& a = fdt.scores();
    const Tensor3& z = loc_logits.scores();
    if (!a.same_shape(z) || w.height() != a.height() || w.width() != a.width()) {
        throw ValidationError("fuse: shape mismatch between oracle map, localizer logits and weights");
    }
    if (fdt.kind() != ScoreKind::probabilities) throw ValidationError("fuse: oracle map must be probabilities");
    Tensor3 out(a.channels(), a.height(), a.width());
    for (int c = 0; c < a.channels(); ++c) {
        for (int y = 0; y < a.height(); ++y) {
            for (int x = 0; x < a.width(); ++x) {
                const double wt = w(y, x);
                const double v = wt * a(c, y, x) + (1.0 - wt) * sigmoid(z(c, y, x));
                out(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return LabelMap(std::move(out), ScoreKind::probabilities);
}

std::vector<int> build_prompt(const TrainSample& sample, const HardLabelMap* prev_prediction,
                              const TaskSchedule& schedule, int t) {
    const int acc = schedule.accumulated_count(t);
    if (t == 1 && prev_prediction != nullptr) {
        throw ValidationError("no frozen network exists at the first task");
    }
    std::set<int> classes;
    for (int c : sample.weak_labels.classes()) {
        if (c >= acc) throw ValidationError("weak label outside the accumulated class set");
        classes.insert(c);
    }
    if (prev_prediction != nullptr) {
        const int prev_acc = schedule.accumulated_count(t - 1);
        for (int v : prev_prediction->labels()) {
            if (v == kIgnore || v == kBackground) continue;
            if (v >= prev_acc) throw ValidationError("frozen prediction uses a class unknown at task t-1");
            classes.insert(v);
        }
    }
    return {classes.begin(), classes.end()};
}

std::vector<std::string> prompt_names(const std::vector<int>& prompt, const TaskSchedule& schedule) {
    std::vector<std::string> out;
    for (int c : prompt) out.push_back(schedule.name_of(c));
    return out;
}

SyntheticOracle::SyntheticOracle(double noise_rate, int dilation_radius, std::uint64_t seed)
    : noise_rate_(noise_rate), dilation_radius_(dilation_radius), seed_(seed) {
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ValidationError("oracle noise_rate must be in [0,1]");
    if (dilation_radius < 0) throw ValidationError("oracle dilation_radius must be >= 0");
}

std::string SyntheticOracle::config_key() const {
    std::ostringstream os;
    os.precision(17);
    os << "synthetic;noise=" << noise_rate_ << ";dilation=" << dilation_radius_ << ";seed=" << seed_;
    return os.str();
}

LabelMap SyntheticOracle::segment(const TrainSample& sample, std::span<const int> prompt, int num_classes) const {
    if (!sample.hidden_mask) throw OracleError(sample.id(), "synthetic oracle needs a hidden mask");
    const HardLabelMap& gt = *sample.hidden_mask;
    const int h = gt.height();
    const int w = gt.width();
    Tensor3 out(num_classes, h, w);
    std::uint64_t seed = mix_seed(seed_, fnv1a64(sample.id()));
    const int r = dilation_radius_;
    for (int c : prompt) {
        if (c <= kBackground || c >= num_classes) throw ValidationError("oracle prompt class out of range");
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                bool member = false;
                for (int dy = -r; dy <= r && !member; ++dy) {
                    for (int dx = -r; dx <= r && !member; ++dx) {
                        if (dy * dy + dx * dx > r * r) continue;
                        const int yy = y + dy;
                        const int xx = x + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        member = gt(yy, xx) == c;
                    }
                }
                if (noise_rate_ > 0.0 && rng.bernoulli(noise_rate_)) member = !member;
                out(c, y, x) = member ? 1.0 : 0.0;
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double m = 0.0;
            for (int c : prompt) m = std::max(m, out(c, y, x));
            out(kBackground, y, x) = 1.0 - m;
        }
    }
    return LabelMap(std::move(out), ScoreKind::probabilities);
}

LabelMap run_oracle(const FoundationOracle& oracle, const TrainSample& sample, std::span<const int> prompt,
                    int num_classes) {
    try {
        LabelMap m = oracle.segment(sample, prompt, num_classes);
        if (m.num_classes() != num_classes || m.height() != sample.image.height() ||
            m.width() != sample.image.width() || m.kind() != ScoreKind::probabilities) {
            throw ValidationError("oracle output has the wrong shape or kind");
        }
        return m;
    } catch (const OracleError&) {
        throw;
    } catch (const std::exception& e) {
        throw OracleError(sample.id(), e.what());
    }
}

PseudoLabels fuse_pseudo_labels(const LabelMap& fdt, const LabelMap& loc_logits, const PseudoLabelOptions& opts) {
    EntropyWeights w;
    if (opts.use_fusion) {
        std::optional<int> norm;
        if (!opts.normalize_by_accumulated) norm = opts.novel_class_count;
        w = entropy_weights(loc_logits, norm);
    } else {
        w = EntropyWeights::constant(loc_logits.height(), loc_logits.width(), 0.0);
    }
    LabelMap soft = fuse(fdt, loc_logits, w);
    HardLabelMap hard = harden(soft);
    const Tensor3& s = soft.scores();
    for (int y = 0; y < s.height(); ++y) {
        for (int x = 0; x < s.width(); ++x) {
            bool any = false;
            for (int c = 1; c < s.channels() && !any; ++c) any = s(c, y, x) >= opts.background_threshold;
            if (!any) hard(y, x) = kBackground;
        }
    }
    return {std::move(soft), std::move(hard)};
}

PseudoLabels generate_pseudo_labels(const TrainSample& sample, const FoundationOracle& oracle,
                                    const LocalizerForward& localizer, const FrozenPredictor* prev_net,
                                    const TaskSchedule& schedule, int t, const PseudoLabelOptions& opts) {
    const int acc = schedule.accumulated_count(t);
    std::optional<HardLabelMap> prev;
    if (t > 1) {
        if (prev_net == nullptr) throw ValidationError("incremental pseudo-labels need the frozen network");
        prev = (*prev_net)(sample.image);
    }
    const auto prompt = build_prompt(sample, prev ? &*prev : nullptr, schedule, t);
    const LabelMap fdt = run_oracle(oracle, sample, prompt, acc);
    const LabelMap loc = localizer(sample.image);
    if (loc.num_classes() != acc) throw ValidationError("localizer must emit one channel per accumulated class");
    PseudoLabelOptions o = opts;
    o.novel_class_count = static_cast<int>(schedule.partitions()[static_cast<std::size_t>(t - 1)].size());
    return fuse_pseudo_labels(fdt, loc, o);
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace wsciss
