#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wsciss/losses.hpp"
#include "wsciss/pseudo_label.hpp"
#include "wsciss/segnet.hpp"

namespace wsciss {

struct OptimizerConfig {
    double lr = 0.002;
    double momentum = 0.9;
    int epochs = 40;
    int batch_size = 8;
    /// Rescales the batch gradient to at most this global L2 norm; 0 = off.
    double clip_norm = 0.0;

    void validate() const;
};

struct LossConfig {
    LossWeights weights;
    ContrastiveSamplingConfig contrastive;
    ImageLevelLossConfig image_level;
    KdConfig kd;
};

/// One training image with everything the step needs besides the live
/// network: oracle masks and, at incremental tasks, the frozen network's
/// outputs (computed once).
struct TrainingExample {
    Image image;
    ImageLevelLabels weak;
    LabelMap fdt;
    std::optional<Tensor3> prev_features;
    std::optional<LabelMap> prev_logits;
};

/// Turns oracle masks and the current localizer logits into targets.
using PseudoLabelProvider = std::function<PseudoLabels(const TrainingExample&, const LabelMap& loc_logits)>;

PseudoLabelProvider fusion_provider(PseudoLabelOptions opts);

struct EpochReport {
    int epoch = 0;
    LossParts parts;  // means over examples
    double total = 0.0;
    int examples = 0;
};

struct TrainingReport {
    EpochReport initial;  // loss at the starting parameters
    std::vector<EpochReport> epochs;
};

/// Seeded mini-batch SGD with momentum over the composite loss: the
/// first-task total, or the incremental total when frozen outputs are
/// attached to the examples.
class Trainer {
public:
    Trainer(SegNet& net, OptimizerConfig opt, LossConfig loss, std::vector<int> supervised_classes,
            PseudoLabelProvider provider, std::uint64_t seed);

    /// Loss over `examples` at the current parameters; no update.
    EpochReport evaluate(const std::vector<TrainingExample>& examples) const;
    EpochReport run_epoch(const std::vector<TrainingExample>& examples);
    EpochReport run_epoch(const std::vector<const TrainingExample*>& examples);

    /// Loss parts and parameter gradients for a single example (gradients
    /// left in the network's accumulators).
    LossParts accumulate_gradients(const TrainingExample& example, std::uint64_t step_seed, double scale);

    int epochs_done() const noexcept { return epoch_; }
    const std::vector<std::vector<double>>& momentum() const noexcept { return velocity_; }
    std::string rng_state() const { return rng_.state(); }
    void restore(int epochs_done, std::vector<std::vector<double>> velocity, const std::string& rng_state);

private:
    LossParts compute(const SegNet& net, const TrainingExample& example, std::uint64_t step_seed, SegNet::Tape* tape,
                      Tensor3* d_features, Tensor3* d_decoder, Tensor3* d_localizer) const;
    void step();

    SegNet& net_;
    OptimizerConfig opt_;
    LossConfig loss_;
    std::vector<int> supervised_;
    PseudoLabelProvider provider_;
    std::uint64_t seed_;
    Rng rng_;
    int epoch_ = 0;
    std::vector<std::vector<double>> velocity_;
};

/// Runs `opt.epochs` epochs. `extra_examples`, if set, is called at the
/// start of each epoch and its examples are trained alongside `examples`.
TrainingReport train_epochs(
    Trainer& trainer, int epochs, const std::vector<TrainingExample>& examples,
    const std::function<std::vector<TrainingExample>(int epoch)>& extra_examples = {});

double total_loss(const LossParts& parts, const LossWeights& w, bool incremental);

}  // namespace wsciss
