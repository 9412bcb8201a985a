#include "wsciss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "wsciss/errors.hpp"
#include "wsciss/pseudo_label.hpp"
#include "wsciss/rng.hpp"

namespace wsciss {
namespace {

const double kLogEps = std::log(kLogEpsilon);

/// log(sigmoid(z)) without overflow.
double log_sigmoid(double z) {
    return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

/// Clamped binary cross-entropy of target q against sigmoid(z), and its
/// derivative with respect to z.
struct Bce {
    double value;
    double dz;
};

Bce bce_logit(double q, double z) {
    const double p = sigmoid(z);
    const double lp = log_sigmoid(z);
    const double lq = log_sigmoid(-z);
    const bool p_ok = lp > kLogEps;
    const bool q_ok = lq > kLogEps;
    const double value = -(q * (p_ok ? lp : kLogEps) + (1.0 - q) * (q_ok ? lq : kLogEps));
    const double dz = -((p_ok ? q * (1.0 - p) : 0.0) - (q_ok ? (1.0 - q) * p : 0.0));
    return {value, dz};
}

void require_same_grid(const Tensor3& a, const Tensor3& b, const char* what) {
    if (!a.same_shape(b)) throw ValidationError(std::string(what) + ": shape mismatch");
}

}  // namespace

void LossWeights::validate() const {
    for (double v : {alpha1, alpha2, beta1, beta2}) {
        if (!std::isfinite(v) || v < 0.0) throw ValidationError("loss weights must be finite and >= 0");
    }
}

void ContrastiveSamplingConfig::validate() const {
    if (samples_per_class < 1) throw ValidationError("samples_per_class must be >= 1");
    if (!(temperature > 0.0)) throw ValidationError("contrastive temperature must be > 0");
}

double loss_ce_pix(const LabelMap& cls_probs, const HardLabelMap& hard) {
    const Tensor3& p = cls_probs.scores();
    if (hard.height() != p.height() || hard.width() != p.width()) throw ValidationError("ce_pix: grid mismatch");
    hard.validate(p.channels());
    double sum = 0.0;
    int n = 0;
    for (int y = 0; y < p.height(); ++y) {
        for (int x = 0; x < p.width(); ++x) {
            const int l = hard(y, x);
            if (l == kIgnore) continue;
            sum -= std::log(std::max(p(l, y, x), kLogEpsilon));
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / n;
}

LossValue ce_pix(const LabelMap& dec_logits, const HardLabelMap& hard) {
    const Tensor3& z = dec_logits.scores();
    if (hard.height() != z.height() || hard.width() != z.width()) throw ValidationError("ce_pix: grid mismatch");
    hard.validate(z.channels());
    LossValue out{0.0, Tensor3(z.channels(), z.height(), z.width())};
    int n = 0;
    for (int l : hard.labels()) n += l != kIgnore;
    if (n == 0) {
        out.degenerate = true;
        return out;
    }
    std::vector<double> e(static_cast<std::size_t>(z.channels()));
    for (int y = 0; y < z.height(); ++y) {
        for (int x = 0; x < z.width(); ++x) {
            const int l = hard(y, x);
            if (l == kIgnore) continue;
            double m = z(0, y, x);
            for (int c = 1; c < z.channels(); ++c) m = std::max(m, z(c, y, x));
            double sum = 0.0;
            for (int c = 0; c < z.channels(); ++c) sum += (e[static_cast<std::size_t>(c)] = std::exp(z(c, y, x) - m));
            const double log_p = z(l, y, x) - m - std::log(sum);
            out.value -= std::max(log_p, kLogEps);
            for (int c = 0; c < z.channels(); ++c) {
                double g = e[static_cast<std::size_t>(c)] / sum - (c == l ? 1.0 : 0.0);
                if (log_p <= kLogEps) g = 0.0;
                out.grad(c, y, x) = g / n;
            }
        }
    }
    out.value /= n;
    return out;
}

double loss_bce_pix(const LabelMap& cls_probs_sigmoid, const LabelMap& soft) {
    const Tensor3& p = cls_probs_sigmoid.scores();
    const Tensor3& s = soft.scores();
    require_same_grid(p, s, "bce_pix");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p.values()[i];
        const double si = s.values()[i];
        sum -= si * std::log(std::max(pi, kLogEpsilon)) + (1.0 - si) * std::log(std::max(1.0 - pi, kLogEpsilon));
    }
    return sum / p.plane();
}

LossValue bce_pix(const LabelMap& dec_logits, const LabelMap& soft) {
    const Tensor3& z = dec_logits.scores();
    const Tensor3& s = soft.scores();
    require_same_grid(z, s, "bce_pix");
    LossValue out{0.0, Tensor3(z.channels(), z.height(), z.width())};
    const double inv = 1.0 / z.plane();
    for (std::size_t i = 0; i < z.size(); ++i) {
        const Bce b = bce_logit(s.values()[i], z.values()[i]);
        out.value += b.value;
        out.grad.values()[i] = b.dz * inv;
    }
    out.value *= inv;
    return out;
}

double loss_kd(const Tensor3& features, const Tensor3& prev_features, const KdConfig& cfg) {
    return kd(features, prev_features, cfg).value;
}

LossValue kd(const Tensor3& features, const Tensor3& prev_features, const KdConfig& cfg) {
    require_same_grid(features, prev_features, "kd");
    LossValue out{0.0, Tensor3(features.channels(), features.height(), features.width())};
    const double scale = cfg.average && features.size() > 0 ? 1.0 / static_cast<double>(features.size()) : 1.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double d = features.values()[i] - prev_features.values()[i];
        out.value += d * d;
        out.grad.values()[i] = 2.0 * d * scale;
    }
    out.value *= scale;
    return out;
}

LossValue bce_loc(const LabelMap& prev_cls_logits, const LabelMap& loc_logits) {
    const Tensor3& q = prev_cls_logits.scores();
    const Tensor3& z = loc_logits.scores();
    if (q.height() != z.height() || q.width() != z.width()) throw ValidationError("bce_loc: grid mismatch");
    if (q.channels() > z.channels() || q.channels() < 1) {
        throw ValidationError("bce_loc: previous network has " + std::to_string(q.channels()) +
                              " classes but the localizer only " + std::to_string(z.channels()));
    }
    LossValue out{0.0, Tensor3(z.channels(), z.height(), z.width())};
    const double inv = 1.0 / z.plane();
    for (int c = 0; c < q.channels(); ++c) {
        for (int y = 0; y < z.height(); ++y) {
            for (int x = 0; x < z.width(); ++x) {
                const Bce b = bce_logit(sigmoid(q(c, y, x)), z(c, y, x));
                out.value += b.value;
                out.grad(c, y, x) = b.dz * inv;
            }
        }
    }
    out.value *= inv;
    return out;
}

double loss_bce_loc(const LabelMap& prev_cls_logits, const LabelMap& loc_logits) {
    return bce_loc(prev_cls_logits, loc_logits).value;
}

LossValue bce_img(const LabelMap& loc_logits, const ImageLevelLabels& weak, std::span<const int> supervised,
                  const ImageLevelLossConfig& cfg) {
    const Tensor3& s = loc_logits.scores();
    const int C = s.channels();
    const int N = s.plane();
    const LabelMap mmap = softmax_map(loc_logits);
    const Tensor3& m = mmap.scores();
    LossValue out{0.0, Tensor3(C, s.height(), s.width())};
    // dL/dm for supervised channels, backpropagated through the softmax below.
    Tensor3 dm(C, s.height(), s.width());
    for (int c : supervised) {
        if (c < 0 || c >= C) throw ValidationError("bce_img: supervised class outside localizer channels");
        const auto sc = s.channel(c);
        const auto mc = m.channel(c);
        double a = 0.0;
        double msum = 0.0;
        for (int i = 0; i < N; ++i) {
            a += mc[static_cast<std::size_t>(i)] * sc[static_cast<std::size_t>(i)];
            msum += mc[static_cast<std::size_t>(i)];
        }
        const double b = cfg.ngwp_epsilon + msum;
        const double ngwp = a / b;
        const double mbar = msum / N;
        const double q = cfg.focal_power;
        const double foc = std::pow(1.0 - mbar, q) * std::log(cfg.focal_lambda + mbar);
        const double dfoc = -q * std::pow(1.0 - mbar, q - 1.0) * std::log(cfg.focal_lambda + mbar) +
                            std::pow(1.0 - mbar, q) / (cfg.focal_lambda + mbar);
        const Bce l = bce_logit(weak.contains(c) ? 1.0 : 0.0, ngwp + foc);
        out.value += l.value;
        auto dmc = dm.channel(c);
        auto gc = out.grad.channel(c);
        for (int i = 0; i < N; ++i) {
            const auto k = static_cast<std::size_t>(i);
            dmc[k] = l.dz * ((sc[k] - ngwp) / b + dfoc / N);
            gc[k] += l.dz * mc[k] / b;
        }
    }
    for (int y = 0; y < s.height(); ++y) {
        for (int x = 0; x < s.width(); ++x) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += dm(c, y, x) * m(c, y, x);
            for (int c = 0; c < C; ++c) out.grad(c, y, x) += m(c, y, x) * (dm(c, y, x) - dot);
        }
    }
    return out;
}

double loss_bce_img(const LabelMap& loc_logits, const ImageLevelLabels& weak, std::span<const int> supervised,
                    const ImageLevelLossConfig& cfg) {
    return bce_img(loc_logits, weak, supervised, cfg).value;
}

LossValue contrastive(const Tensor3& features, const HardLabelMap& hard, const ContrastiveSamplingConfig& cfg) {
    cfg.validate();
    if (hard.height() != features.height() || hard.width() != features.width()) {
        throw ValidationError("contrastive: label grid must match the feature grid");
    }
    const int D = features.channels();
    const int N = features.plane();
    LossValue out{0.0, Tensor3(D, features.height(), features.width())};

    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < N; ++i) {
        if (hard[i] != kIgnore) by_class[hard[i]].push_back(i);
    }
    Rng rng(cfg.seed);
    std::vector<int> pix;     // sampled pixel indices
    std::vector<int> group;   // group id of each sample
    std::vector<std::pair<int, int>> ranges;  // [begin, end) into pix per class
    for (const auto& [cls, pixels] : by_class) {
        const auto picks = rng.sample_without_replacement(pixels.size(), static_cast<std::size_t>(cfg.samples_per_class));
        const int begin = static_cast<int>(pix.size());
        for (auto k : picks) {
            pix.push_back(pixels[k]);
            group.push_back(static_cast<int>(ranges.size()));
        }
        ranges.emplace_back(begin, static_cast<int>(pix.size()));
    }
    int valid = 0;
    for (auto [b, e] : ranges) valid += (e - b) >= 2;
    if (valid == 0) {
        out.degenerate = true;
        return out;
    }

    const int S = static_cast<int>(pix.size());
    // Normalized sampled features.
    std::vector<double> f(static_cast<std::size_t>(S) * D);
    std::vector<double> norms(static_cast<std::size_t>(S));
    for (int a = 0; a < S; ++a) {
        double n2 = 0.0;
        for (int d = 0; d < D; ++d) {
            const double v = features.channel(d)[static_cast<std::size_t>(pix[static_cast<std::size_t>(a)])];
            n2 += v * v;
        }
        const double n = std::max(std::sqrt(n2), kLogEpsilon);
        norms[static_cast<std::size_t>(a)] = n;
        for (int d = 0; d < D; ++d) {
            f[static_cast<std::size_t>(a) * D + d] =
                features.channel(d)[static_cast<std::size_t>(pix[static_cast<std::size_t>(a)])] / n;
        }
    }
    const double inv_tau = 1.0 / cfg.temperature;
    std::vector<double> sim(static_cast<std::size_t>(S) * S);
    for (int a = 0; a < S; ++a) {
        for (int b = 0; b < S; ++b) {
            double dot = 0.0;
            for (int d = 0; d < D; ++d) dot += f[static_cast<std::size_t>(a) * D + d] * f[static_cast<std::size_t>(b) * D + d];
            sim[static_cast<std::size_t>(a) * S + b] = dot * inv_tau;
        }
    }
    // dL/dsim
    std::vector<double> dsim(static_cast<std::size_t>(S) * S, 0.0);
    for (auto [begin, end] : ranges) {
        const int sc = end - begin;
        if (sc < 2) continue;
        const double w_class = 1.0 / (static_cast<double>(valid) * sc * (sc - 1));
        for (int i = begin; i < end; ++i) {
            const double* row = &sim[static_cast<std::size_t>(i) * S];
            double neg_max = -INFINITY;
            for (int n = 0; n < S; ++n) {
                if (group[static_cast<std::size_t>(n)] != group[static_cast<std::size_t>(i)]) neg_max = std::max(neg_max, row[n]);
            }
            double neg_sum = 0.0;  // sum exp(s_in - neg_max)
            if (std::isfinite(neg_max)) {
                for (int n = 0; n < S; ++n) {
                    if (group[static_cast<std::size_t>(n)] != group[static_cast<std::size_t>(i)]) neg_sum += std::exp(row[n] - neg_max);
                }
            }
            double neg_coef = 0.0;  // sum over positives of d term / d (neg_sum scaled)
            for (int p = begin; p < end; ++p) {
                if (p == i) continue;
                const double a = row[p];
                double lse;
                double wa;
                double scale_neg = 0.0;  // multiplies exp(s_in - neg_max)
                if (neg_sum > 0.0) {
                    const double mx = std::max(a, neg_max);
                    const double z = std::exp(a - mx) + std::exp(neg_max - mx) * neg_sum;
                    lse = mx + std::log(z);
                    wa = std::exp(a - mx) / z;
                    scale_neg = std::exp(neg_max - mx) / z;
                } else {
                    lse = a;
                    wa = 1.0;
                }
                out.value += w_class * (lse - a);
                dsim[static_cast<std::size_t>(i) * S + p] += w_class * (wa - 1.0);
                neg_coef += w_class * scale_neg;
            }
            if (neg_sum > 0.0) {
                for (int n = 0; n < S; ++n) {
                    if (group[static_cast<std::size_t>(n)] != group[static_cast<std::size_t>(i)]) {
                        dsim[static_cast<std::size_t>(i) * S + n] += neg_coef * std::exp(row[n] - neg_max);
                    }
                }
            }
        }
    }
    // Back through sim = f_a . f_b / tau and the per-pixel normalization.
    std::vector<double> df(static_cast<std::size_t>(S) * D, 0.0);
    for (int a = 0; a < S; ++a) {
        for (int b = 0; b < S; ++b) {
            const double g = (dsim[static_cast<std::size_t>(a) * S + b]) * inv_tau;
            if (g == 0.0) continue;
            for (int d = 0; d < D; ++d) {
                df[static_cast<std::size_t>(a) * D + d] += g * f[static_cast<std::size_t>(b) * D + d];
                df[static_cast<std::size_t>(b) * D + d] += g * f[static_cast<std::size_t>(a) * D + d];
            }
        }
    }
    for (int a = 0; a < S; ++a) {
        double dot = 0.0;
        for (int d = 0; d < D; ++d) dot += df[static_cast<std::size_t>(a) * D + d] * f[static_cast<std::size_t>(a) * D + d];
        const double n = norms[static_cast<std::size_t>(a)];
        for (int d = 0; d < D; ++d) {
            const double g = (df[static_cast<std::size_t>(a) * D + d] - f[static_cast<std::size_t>(a) * D + d] * dot) / n;
            out.grad.channel(d)[static_cast<std::size_t>(pix[static_cast<std::size_t>(a)])] += g;
        }
    }
    return out;
}

LossValue loss_contrastive(const Tensor3& features, const HardLabelMap& hard, const ContrastiveSamplingConfig& cfg) {
    LossValue v = contrastive(features, hard, cfg);
    v.grad = Tensor3();
    return v;
}

double total_wsss(const LossParts& p, const LossWeights& w) {
    return p.ce_pix + p.bce_img + w.alpha1 * p.bce_pix + w.alpha2 * p.cl;
}

double total_ci_wsss(const LossParts& p, const LossWeights& w) {
    return total_wsss(p, w) + w.beta1 * p.kd + w.beta2 * p.bce_loc;
}

HardLabelMap resize_nearest(const HardLabelMap& labels, int height, int width) {
    HardLabelMap out(height, width);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(labels.height() - 1, static_cast<int>((y + 0.5) * labels.height() / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(labels.width() - 1, static_cast<int>((x + 0.5) * labels.width() / width));
            out(y, x) = labels(sy, sx);
        }
    }
    return out;
}

}  // namespace wsciss
