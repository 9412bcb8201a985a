#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "oracles.hpp"
#include "wsciss/config.hpp"
#include "wsciss/rng.hpp"
#include "wsciss/tensor.hpp"
#include "wsciss/types.hpp"

namespace testutil {

inline wsciss::Tensor3 random_tensor(wsciss::Rng& rng, int c, int h, int w, double lo = -2.0, double hi = 2.0) {
    wsciss::Tensor3 t(c, h, w);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline wsciss::LabelMap random_logits(wsciss::Rng& rng, int c, int h, int w, double scale = 2.0) {
    return {random_tensor(rng, c, h, w, -scale, scale), wsciss::ScoreKind::logits};
}

inline wsciss::LabelMap random_probs(wsciss::Rng& rng, int c, int h, int w) {
    return {random_tensor(rng, c, h, w, 0.0, 1.0), wsciss::ScoreKind::probabilities};
}

inline wsciss::HardLabelMap random_labels(wsciss::Rng& rng, int h, int w, int classes, double ignore_rate = 0.0) {
    wsciss::HardLabelMap m(h, w);
    for (int i = 0; i < h * w; ++i) {
        m[i] = rng.bernoulli(ignore_rate) ? wsciss::kIgnore : static_cast<int>(rng.index(static_cast<std::size_t>(classes)));
    }
    return m;
}

inline oracle::Map flat(const wsciss::Tensor3& t) { return {t.channels(), t.plane(), t.values()}; }

inline std::vector<int> flat(const wsciss::HardLabelMap& m) { return m.labels(); }

/// Largest per-entry error between `grad` and central differences of `f`
/// around `x`, relative to max(|analytic|, |numeric|, floor).
inline double max_fd_error(const wsciss::Tensor3& x, const std::function<double(const wsciss::Tensor3&)>& f,
                           const wsciss::Tensor3& grad, double h = 1e-5, double floor = 1e-3) {
    double worst = 0.0;
    wsciss::Tensor3 probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = probe.values()[i];
        probe.values()[i] = keep + h;
        const double up = f(probe);
        probe.values()[i] = keep - h;
        const double down = f(probe);
        probe.values()[i] = keep;
        const double num = (up - down) / (2 * h);
        const double a = grad.values()[i];
        const double denom = std::max({std::abs(a), std::abs(num), floor});
        worst = std::max(worst, std::abs(a - num) / denom);
    }
    return worst;
}

/// Small, fast two-task run used by protocol, CLI and acceptance tests.
inline wsciss::RunConfig tiny_config(const std::string& name = "tiny") {
    wsciss::RunConfig cfg = wsciss::default_run_config();
    cfg.name = name;
    cfg.synthetic.image_size = 16;
    cfg.synthetic.train_images = 40;
    cfg.synthetic.eval_images = 12;
    cfg.network.stem_channels = 4;
    cfg.network.feature_channels = 8;
    cfg.network.decoder_width = 8;
    cfg.network.localizer_width1 = 8;
    cfg.network.localizer_width2 = 8;
    cfg.exemplar.min_area = 4;
    cfg.exemplar.budget_per_class = 5;
    for (auto& t : cfg.tasks) {
        t.optimizer.epochs = 1;
        t.optimizer.batch_size = 8;
        t.optimizer.lr = 0.01;
        t.optimizer.clip_norm = 1.0;
    }
    return cfg;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("wsciss_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil
