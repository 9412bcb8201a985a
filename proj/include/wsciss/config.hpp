#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsciss/losses.hpp"
#include "wsciss/pseudo_label.hpp"
#include "wsciss/segnet.hpp"
#include "wsciss/trainer.hpp"
#include "wsciss/types.hpp"

namespace wsciss {

enum class Scenario { disjoint, overlap };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct SyntheticCorpusConfig {
    std::vector<std::string> classes{"circle", "square", "triangle", "ring", "cross", "diamond"};
    int image_size = 32;
    int train_images = 200;
    int eval_images = 60;
    int min_objects = 1;
    int max_objects = 4;
    std::uint64_t seed = 7;
};

struct OracleConfig {
    double noise_rate = 0.05;
    int dilation_radius = 0;
    std::uint64_t seed = 1;
};

struct EditorConfig {
    /// "masked_blend" or "external"
    std::string kind = "masked_blend";
    double blend = 1.0;
    double feather = 1.0;
    /// External editor command; receives scene, mask, exemplar, output paths.
    std::string command;
};

struct ExemplarConfig {
    int budget_per_class = 50;
    int min_area = 16;
    bool augmentation = true;
    double augmentation_probability = 0.5;
    double region_scale_min = 0.2;
    double region_scale_max = 0.5;
};

struct TaskTrainingConfig {
    OptimizerConfig optimizer;
    LossWeights weights;
};

struct RunConfig {
    std::string name = "run";
    std::string output_dir = "runs";
    std::string train_dir = "data/train";
    std::string eval_dir = "data/eval";
    SyntheticCorpusConfig synthetic;
    TaskSchedule schedule{{{"circle", "square", "triangle", "ring"}, {"cross", "diamond"}}};
    Scenario scenario = Scenario::disjoint;
    std::uint64_t seed = 0;
    OracleConfig oracle;
    PseudoLabelOptions pseudo_label;
    EditorConfig editor;
    ExemplarConfig exemplar;
    SegNetConfig network;
    ContrastiveSamplingConfig contrastive;
    ImageLevelLossConfig image_level;
    KdConfig kd;
    /// Per-task settings; task t uses entry t-1, the last entry repeats.
    std::vector<TaskTrainingConfig> tasks;
    bool include_background_in_all = true;

    const TaskTrainingConfig& task(int t) const;
    void validate() const;
};

/// Defaults: first task lr 0.002, alpha1 1, alpha2 0.1; incremental tasks
/// lr 0.00035, alpha1 1, alpha2 0.01, beta1 15, beta2 1; 40 epochs each.
RunConfig default_run_config();

nlohmann::json to_json(const RunConfig& cfg);
/// Merges `j` over the defaults. Unknown keys raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Applies "a.b.c=value" (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& j, const std::string& assignment);

nlohmann::json to_json(const TaskSchedule& s);
TaskSchedule schedule_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SegNetConfig& c);
SegNetConfig segnet_config_from_json(const nlohmann::json& j);

}  // namespace wsciss
