#include "wsciss/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "wsciss/checkpoint.hpp"
#include "wsciss/errors.hpp"
#include "wsciss/pseudo_cache.hpp"

namespace wsciss {

void ScenarioConfig::validate(bool incremental) const {
    if (schedule.num_tasks() < 1) throw ConfigError("schedule has no partitions");
    if (incremental && schedule.num_tasks() < 2) throw ConfigError("an incremental run needs at least two partitions");
}

std::vector<int> present_classes(const TrainSample& sample) {
    if (!sample.hidden_mask) throw ValidationError("sample '" + sample.id() + "' has no mask to split on");
    std::vector<int> out;
    for (int v : sample.hidden_mask->labels()) {
        if (v > kBackground) out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<TrainSample> split_dataset(const std::vector<TrainSample>& full, const ScenarioConfig& cfg, int t) {
    const TaskSchedule& s = cfg.schedule;
    const int acc = s.accumulated_count(t);
    const int first = s.first_index(t);
    std::vector<TrainSample> out;
    for (const auto& sample : full) {
        const auto present = present_classes(sample);
        std::vector<int> novel;
        bool future = false;
        for (int c : present) {
            if (c >= first && c < acc) novel.push_back(c);
            if (c >= acc) future = true;
        }
        if (novel.empty()) continue;
        if (cfg.scenario == Scenario::disjoint && future) continue;
        TrainSample d = sample;
        d.weak_labels = ImageLevelLabels(std::move(novel));
        out.push_back(std::move(d));
    }
    if (out.empty()) {
        std::string names;
        for (const auto& n : s.partitions()[static_cast<std::size_t>(t - 1)]) names += (names.empty() ? "" : ", ") + n;
        throw ConfigError("split for task " + std::to_string(t) + " (" + to_string(cfg.scenario) +
                          ") is empty: no image contains a class of partition {" + names + "}");
    }
    return out;
}

std::vector<TrainSample> eval_view(const std::vector<TrainSample>& full, const TaskSchedule& schedule, int t) {
    const int acc = schedule.accumulated_count(t);
    std::vector<TrainSample> out;
    out.reserve(full.size());
    for (const auto& s : full) {
        if (!s.hidden_mask) throw ValidationError("evaluation sample '" + s.id() + "' has no ground truth");
        TrainSample v = s;
        v.hidden_mask = restrict_to_seen(*s.hidden_mask, acc);
        std::vector<int> seen;
        for (int c : s.weak_labels.classes()) {
            if (c < acc) seen.push_back(c);
        }
        v.weak_labels = ImageLevelLabels(std::move(seen));
        out.push_back(std::move(v));
    }
    return out;
}

void TaskState::validate(const TaskSchedule& schedule) const {
    if (t < 1 || t > schedule.num_tasks()) {
        throw RangeError("task " + std::to_string(t) + " is outside the schedule (1.." +
                         std::to_string(schedule.num_tasks()) + ")");
    }
    if (t > 1) {
        if (!frozen_prev) throw ValidationError("task " + std::to_string(t) + " needs the frozen previous network");
        if (frozen_prev->num_classes() != schedule.accumulated_count(t - 1)) {
            throw ValidationError("frozen network class count does not match the previous task");
        }
    }
}

std::filesystem::path task_dir(const std::filesystem::path& run_dir, int t) {
    return run_dir / ("task" + std::to_string(t));
}

ConfusionMatrix evaluate_network(const SegNet& net, const std::vector<TrainSample>& samples,
                                 const TaskSchedule& schedule, int t) {
    const int acc = schedule.accumulated_count(t);
    if (net.num_classes() != acc) throw ValidationError("network class count does not match the evaluated task");
    ConfusionMatrix cm(acc);
    for (const auto& s : samples) {
        if (!s.hidden_mask) throw ValidationError("evaluation sample '" + s.id() + "' has no ground truth");
        cm.accumulate(restrict_to_seen(*s.hidden_mask, acc), net.predict(s.image));
    }
    return cm;
}

std::unique_ptr<FoundationOracle> make_oracle(const RunConfig& cfg) {
    return std::make_unique<SyntheticOracle>(cfg.oracle.noise_rate, cfg.oracle.dilation_radius, cfg.oracle.seed);
}

std::unique_ptr<ImageEditor> make_editor(const RunConfig& cfg, const std::filesystem::path& work_dir) {
    if (cfg.editor.kind == "masked_blend") return std::make_unique<MaskedBlendEditor>(cfg.editor.blend, cfg.editor.feather);
    if (cfg.editor.kind == "external") return std::make_unique<SubprocessEditor>(cfg.editor.command, work_dir);
    throw ConfigError("unknown editor kind '" + cfg.editor.kind + "'");
}

namespace {

using Clock = std::chrono::steady_clock;

nlohmann::json parts_json(const LossParts& p) {
    return {{"ce_pix", p.ce_pix}, {"bce_img", p.bce_img}, {"bce_pix", p.bce_pix},
            {"cl", p.cl},         {"kd", p.kd},           {"bce_loc", p.bce_loc}};
}

nlohmann::json epoch_json(const EpochReport& e) {
    return {{"epoch", e.epoch}, {"total", e.total}, {"examples", e.examples}, {"parts", parts_json(e.parts)}};
}

struct FrozenOutputs {
    Tensor3 features;
    LabelMap logits;
    HardLabelMap prediction;
};

FrozenOutputs frozen_outputs(const FrozenSegNet& net, const Image& image) {
    SegNetOutput out = net.forward(image);
    HardLabelMap pred = harden(softmax_map(out.decoder_logits));
    return {std::move(out.features), std::move(out.decoder_logits), std::move(pred)};
}

TrainingExample make_example(const TrainSample& s, const FoundationOracle& oracle, const FrozenSegNet* frozen,
                             const TaskSchedule& schedule, int t, HardLabelMap* prediction_out = nullptr) {
    TrainingExample ex;
    ex.image = s.image;
    ex.weak = s.weak_labels;
    std::optional<HardLabelMap> pred;
    if (frozen != nullptr) {
        FrozenOutputs f = frozen_outputs(*frozen, s.image);
        ex.prev_features = std::move(f.features);
        ex.prev_logits = std::move(f.logits);
        pred = std::move(f.prediction);
        if (prediction_out != nullptr) *prediction_out = *pred;
    }
    const auto prompt = build_prompt(s, pred ? &*pred : nullptr, schedule, t);
    ex.fdt = run_oracle(oracle, s, prompt, schedule.accumulated_count(t));
    return ex;
}

}  // namespace

TaskOutcome run_task(const TaskState& state, const Dataset& data, const RunConfig& cfg, const TaskEnvironment& env) {
    const TaskSchedule& schedule = cfg.schedule;
    state.validate(schedule);
    if (env.oracle == nullptr) throw ValidationError("run_task needs an oracle");
    if (data.empty()) throw ValidationError("task dataset is empty");
    const int t = state.t;
    const int acc = schedule.accumulated_count(t);
    const std::vector<int> novel = schedule.task_class_indices(t);
    const TaskTrainingConfig& tcfg = cfg.task(t);
    const std::uint64_t seed_t = mix_seed(cfg.seed, static_cast<std::uint64_t>(t));
    const FrozenSegNet* frozen = t > 1 ? &*state.frozen_prev : nullptr;
    auto say = [&](const std::string& m) {
        if (env.log) env.log("[task " + std::to_string(t) + "] " + m);
    };
    if (data.log()) data.log()->set_phase("task" + std::to_string(t));

    const bool persist = !env.run_dir.empty();
    const auto final_dir = persist ? task_dir(env.run_dir, t) : std::filesystem::path{};
    const auto work = persist ? std::filesystem::path(final_dir.string() + ".partial") : std::filesystem::path{};
    if (persist) {
        std::filesystem::remove_all(work);
        std::filesystem::create_directories(work);
    }

    TaskOutcome outcome;
    auto timed = [&](const std::string& stage, auto&& fn) {
        say(stage);
        const auto t0 = Clock::now();
        fn();
        outcome.stages.push_back({stage, std::chrono::duration<double>(Clock::now() - t0).count()});
    };

    try {
        const std::uint64_t oracle_hash = fnv1a64(env.oracle->config_key());
        std::vector<TrainingExample> examples(data.size());
        std::vector<HardLabelMap> prev_predictions(data.size());

        // (1) frozen predictions, features and logits for every sample
        if (frozen != nullptr) {
            timed("frozen_pass", [&] {
                std::optional<PseudoLabelCache> cache;
                if (persist) cache.emplace(work / "frozen_pass", "frz");
                for (std::size_t i = 0; i < data.size(); ++i) {
                    const TrainSample& s = data.at(i);
                    FrozenOutputs f = frozen_outputs(*frozen, s.image);
                    if (cache) cache->store(s.id(), t, oracle_hash, {softmax_map(f.logits), f.prediction});
                    examples[i].prev_features = std::move(f.features);
                    examples[i].prev_logits = std::move(f.logits);
                    prev_predictions[i] = std::move(f.prediction);
                }
            });
        }

        // (2) heads sized for C^t_acc
        std::optional<SegNet> net;
        timed("head_extension", [&] {
            if (t == 1) {
                net.emplace(cfg.network, acc, seed_t);
            } else {
                net.emplace(extend_heads(frozen->network(), acc, seed_t, &cfg.network));
            }
        });

        PseudoLabelOptions pl_opts = cfg.pseudo_label;
        pl_opts.novel_class_count = static_cast<int>(novel.size());

        // (3) oracle masks and initial pseudo-labels
        timed("pseudo_labels", [&] {
            std::optional<PseudoLabelCache> cache;
            if (persist) cache.emplace(work / "pseudo_cache", "psl");
            for (std::size_t i = 0; i < data.size(); ++i) {
                const TrainSample& s = data.at(i);
                const auto prompt = build_prompt(s, frozen != nullptr ? &prev_predictions[i] : nullptr, schedule, t);
                examples[i].image = s.image;
                examples[i].weak = s.weak_labels;
                examples[i].fdt = run_oracle(*env.oracle, s, prompt, acc);
                if (cache) {
                    const LabelMap loc = net->forward(s.image).localizer_logits;
                    cache->store(s.id(), t, oracle_hash, fuse_pseudo_labels(examples[i].fdt, loc, pl_opts));
                }
            }
        });

        // (4) training
        timed("training", [&] {
            LossConfig lc{tcfg.weights, cfg.contrastive, cfg.image_level, cfg.kd};
            Trainer trainer(*net, tcfg.optimizer, lc, novel, fusion_provider(pl_opts), seed_t);
            std::function<std::vector<TrainingExample>(int)> extra;
            const bool augmenting = cfg.exemplar.augmentation && !state.exemplars.empty() && env.editor != nullptr;
            if (augmenting) {
                const RegionConfig region{cfg.exemplar.region_scale_min, cfg.exemplar.region_scale_max};
                extra = [&, region](int epoch) {
                    Rng rng(mix_seed(seed_t ^ 0xa5a5a5a5ULL, static_cast<std::uint64_t>(epoch)));
                    std::vector<TrainingExample> out;
                    for (std::size_t i = 0; i < data.size(); ++i) {
                        if (!rng.bernoulli(cfg.exemplar.augmentation_probability)) continue;
                        const AugmentResult r = augment(data.at(i), state.exemplars, *env.editor, rng, region);
                        if (!r.applied) continue;
                        out.push_back(make_example(r.sample, *env.oracle, frozen, schedule, t));
                    }
                    return out;
                };
            }
            outcome.training = train_epochs(trainer, tcfg.optimizer.epochs, examples, extra);
            if (persist) save_checkpoint(work / "checkpoint", make_checkpoint(*net, schedule, t, &trainer));
        });

        // (5) freeze
        FrozenSegNet frozen_now = freeze(*net);
        timed("freeze", [] {});

        // (6) exemplars from the final pseudo-labels of D^t
        ExemplarSet exemplars(cfg.exemplar.budget_per_class);
        timed("exemplars", [&] {
            std::vector<HardLabelMap> hard;
            hard.reserve(examples.size());
            for (const auto& ex : examples) {
                hard.push_back(fuse_pseudo_labels(ex.fdt, net->forward(ex.image).localizer_logits, pl_opts).hard);
            }
            auto built = build_exemplar_set(data, hard, schedule, t, cfg.exemplar.budget_per_class,
                                            cfg.exemplar.min_area, mix_seed(seed_t, 0x6578656dULL), &state.exemplars);
            exemplars = std::move(built.set);
            outcome.warnings = std::move(built.warnings);
            for (const auto& w : outcome.warnings) say("warning: " + w);
            if (persist) save_exemplar_set(work / "exemplars", exemplars, schedule);
        });

        std::vector<MetricRecord> records;
        if (env.eval_samples != nullptr) {
            timed("evaluation", [&] {
                outcome.confusion = evaluate_network(*net, *env.eval_samples, schedule, t);
                records = metric_records(*outcome.confusion, schedule, t, to_string(cfg.scenario),
                                         cfg.include_background_in_all);
            });
        }

        nlohmann::json stages = nlohmann::json::array();
        for (const auto& s : outcome.stages) stages.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
        nlohmann::json history = nlohmann::json::array();
        for (const auto& e : outcome.training.epochs) history.push_back(epoch_json(e));
        outcome.report = {{"task", t},
                          {"classes", accumulated_classes(schedule, t)},
                          {"samples", data.size()},
                          {"stages", stages},
                          {"initial_loss", epoch_json(outcome.training.initial)},
                          {"epochs", history},
                          {"exemplars", exemplars.total()},
                          {"warnings", outcome.warnings},
                          {"metrics", to_json(EvalReport{records})},
                          {"config", to_json(cfg)}};

        if (persist) {
            std::ofstream(work / "report.json") << outcome.report.dump(2) << '\n';
            std::filesystem::remove_all(final_dir);
            std::filesystem::rename(work, final_dir);
        }

        outcome.state.t = t + 1;
        outcome.state.live_net = std::move(*net);
        outcome.state.frozen_prev = std::move(frozen_now);
        outcome.state.exemplars = std::move(exemplars);
        outcome.state.metrics = state.metrics;
        outcome.state.metrics.insert(outcome.state.metrics.end(), records.begin(), records.end());
    } catch (...) {
        if (persist) {
            std::error_code ec;
            std::filesystem::remove_all(work, ec);
        }
        throw;
    }
    return outcome;
}

TaskState load_task_state(const std::filesystem::path& run_dir, const RunConfig& cfg, int t) {
    if (t < 1 || t > cfg.schedule.num_tasks()) {
        throw RangeError("task " + std::to_string(t) + " is outside the schedule (1.." +
                         std::to_string(cfg.schedule.num_tasks()) + ")");
    }
    TaskState s;
    s.t = t;
    s.exemplars = ExemplarSet(cfg.exemplar.budget_per_class);
    if (t == 1) return s;
    const auto prev = task_dir(run_dir, t - 1);
    Checkpoint ckpt;
    try {
        ckpt = load_checkpoint(prev / "checkpoint");
    } catch (const MissingArtifactError&) {
        throw MissingArtifactError("task " + std::to_string(t - 1) + " has not been trained in '" + run_dir.string() +
                                   "'; run `wsciss train --task " + std::to_string(t - 1) + "` first");
    }
    if (ckpt.schedule != cfg.schedule) throw ConfigError("checkpoint schedule differs from the configured schedule");
    SegNet net = restore_network(ckpt);
    s.frozen_prev = freeze(net);
    s.live_net = std::move(net);
    s.exemplars = load_exemplar_set(prev / "exemplars", cfg.schedule, cfg.exemplar.budget_per_class);
    return s;
}

RunResult run_protocol(const RunConfig& cfg, const std::vector<TrainSample>& train_full,
                       const std::vector<TrainSample>& eval_full, const std::filesystem::path& run_dir,
                       const std::function<void(const std::string&)>& log) {
    const ScenarioConfig sc{cfg.scenario, cfg.schedule, cfg.seed};
    sc.validate(false);
    const auto oracle = make_oracle(cfg);
    const auto editor = make_editor(cfg, run_dir.empty() ? std::filesystem::temp_directory_path() / "wsciss_edit"
                                                         : run_dir / "editor_work");
    RunResult result;
    TaskState state;
    state.exemplars = ExemplarSet(cfg.exemplar.budget_per_class);
    for (int t = 1; t <= cfg.schedule.num_tasks(); ++t) {
        const Dataset data(split_dataset(train_full, sc, t));
        TaskEnvironment env{oracle.get(), editor.get(), run_dir, &eval_full, log};
        TaskOutcome out = run_task(state, data, cfg, env);
        state = out.state;
        result.tasks.push_back(std::move(out));
    }
    result.report.records = state.metrics;
    return result;
}

AblationResult run_ablation(const RunConfig& cfg, const std::vector<TrainSample>& train_full,
                            const std::vector<TrainSample>& eval_full, const std::vector<std::uint64_t>& seeds,
                            const std::function<void(const std::string&)>& log) {
    if (cfg.schedule.num_tasks() != 2) throw ConfigError("the ablation grid needs a two-task schedule");
    if (seeds.empty()) throw ConfigError("the ablation grid needs at least one seed");
    const auto oracle = make_oracle(cfg);
    const auto editor = make_editor(cfg, std::filesystem::temp_directory_path() / "wsciss_edit");
    const bool arms[4][2] = {{false, false}, {true, false}, {false, true}, {true, true}};
    AblationResult result;
    result.rows.resize(4);
    for (int a = 0; a < 4; ++a) {
        result.rows[static_cast<std::size_t>(a)].fusion = arms[a][0];
        result.rows[static_cast<std::size_t>(a)].augmentation = arms[a][1];
    }
    auto value = [](const std::vector<MetricRecord>& recs, const std::string& group) {
        for (const auto& r : recs) {
            if (r.task == 2 && r.group == group) return r.miou.value_or(std::numeric_limits<double>::quiet_NaN());
        }
        return std::numeric_limits<double>::quiet_NaN();
    };
    for (std::uint64_t seed : seeds) {
        RunConfig base = cfg;
        base.seed = seed;
        const ScenarioConfig sc{base.scenario, base.schedule, seed};
        TaskState s0;
        s0.exemplars = ExemplarSet(base.exemplar.budget_per_class);
        const Dataset d1(split_dataset(train_full, sc, 1));
        const Dataset d2(split_dataset(train_full, sc, 2));
        TaskEnvironment env{oracle.get(), editor.get(), {}, &eval_full, log};
        const TaskOutcome first = run_task(s0, d1, base, env);
        std::vector<AblationRow> rows;
        for (int a = 0; a < 4; ++a) {
            RunConfig arm = base;
            arm.pseudo_label.use_fusion = arms[a][0];
            arm.exemplar.augmentation = arms[a][1];
            if (log) log("seed " + std::to_string(seed) + " fusion=" + (arms[a][0] ? "on" : "off") +
                         " augmentation=" + (arms[a][1] ? "on" : "off"));
            const TaskOutcome second = run_task(first.state, d2, arm, env);
            AblationRow row{arms[a][0], arms[a][1], value(second.state.metrics, "base"),
                            value(second.state.metrics, "novel"), value(second.state.metrics, "all"), 1};
            rows.push_back(row);
            auto& agg = result.rows[static_cast<std::size_t>(a)];
            agg.base += row.base;
            agg.novel += row.novel;
            agg.all += row.all;
            agg.runs += 1;
        }
        result.per_seed.push_back(std::move(rows));
    }
    for (auto& r : result.rows) {
        r.base /= r.runs;
        r.novel /= r.runs;
        r.all /= r.runs;
    }
    return result;
}

}  // namespace wsciss
