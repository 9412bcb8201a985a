#include "wsciss/commands.hpp"

#include <fstream>

#include "wsciss/checkpoint.hpp"
#include "wsciss/dataset.hpp"
#include "wsciss/errors.hpp"
#include "wsciss/protocol.hpp"
#include "wsciss/synthetic.hpp"

namespace wsciss {
namespace fs = std::filesystem;

fs::path run_directory(const RunConfig& cfg) { return fs::path(cfg.output_dir) / cfg.name; }

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace

void persist_effective_config(const fs::path& dir, const RunConfig& cfg) { write_json(dir / "config.json", to_json(cfg)); }

std::vector<TrainSample> load_dataset_or_explain(const fs::path& dir, const TaskSchedule& schedule) {
    if (!fs::exists(dir / kManifestFile)) {
        throw MissingArtifactError("no dataset at '" + dir.string() + "'; run `wsciss gen-synthetic` first");
    }
    return load_samples(dir, schedule);
}

void cmd_gen_synthetic(const RunConfig& cfg, std::ostream& out) {
    const TaskSchedule& s = cfg.schedule;
    try {
        write_samples(cfg.train_dir, generate_synthetic(cfg.synthetic, s, cfg.synthetic.train_images,
                                                        mix_seed(cfg.synthetic.seed, 1), "train_"), s);
        write_samples(cfg.eval_dir, generate_synthetic(cfg.synthetic, s, cfg.synthetic.eval_images,
                                                       mix_seed(cfg.synthetic.seed, 2), "eval_"), s);
    } catch (const fs::filesystem_error& e) {
        throw IoError(e.what());
    }
    persist_effective_config(cfg.train_dir, cfg);
    out << "wrote " << cfg.synthetic.train_images << " training images to " << cfg.train_dir << " and "
        << cfg.synthetic.eval_images << " evaluation images to " << cfg.eval_dir << '\n';
}

nlohmann::json cmd_split(const RunConfig& cfg, std::ostream& out) {
    const auto full = load_dataset_or_explain(cfg.train_dir, cfg.schedule);
    const ScenarioConfig sc{cfg.scenario, cfg.schedule, cfg.seed};
    nlohmann::json j{{"scenario", to_string(cfg.scenario)}, {"tasks", nlohmann::json::array()}};
    for (int t = 1; t <= cfg.schedule.num_tasks(); ++t) {
        const auto split = split_dataset(full, sc, t);
        nlohmann::json samples = nlohmann::json::array();
        for (const auto& s : split) {
            nlohmann::json labels = nlohmann::json::array();
            for (int c : s.weak_labels.classes()) labels.push_back(cfg.schedule.name_of(c));
            samples.push_back({{"id", s.id()}, {"labels", labels}});
        }
        j["tasks"].push_back({{"task", t}, {"size", split.size()}, {"samples", samples}});
        out << "task " << t << ": " << split.size() << " images\n";
    }
    const auto dir = run_directory(cfg);
    write_json(dir / "splits.json", j);
    persist_effective_config(dir, cfg);
    return j;
}

EvalReport cmd_train(const RunConfig& cfg, std::optional<int> task, std::ostream& out) {
    const int T = cfg.schedule.num_tasks();
    if (task && (*task < 1 || *task > T)) {
        throw RangeError("task " + std::to_string(*task) + " is outside the schedule (1.." + std::to_string(T) + ")");
    }
    const auto train = load_dataset_or_explain(cfg.train_dir, cfg.schedule);
    const auto eval = load_dataset_or_explain(cfg.eval_dir, cfg.schedule);
    const auto dir = run_directory(cfg);
    persist_effective_config(dir, cfg);
    const auto oracle = make_oracle(cfg);
    const auto editor = make_editor(cfg, dir / "editor_work");
    const ScenarioConfig sc{cfg.scenario, cfg.schedule, cfg.seed};
    auto log = [&out](const std::string& m) { out << m << '\n' << std::flush; };

    const int first = task.value_or(1);
    const int last = task.value_or(T);
    TaskState state = load_task_state(dir, cfg, first);
    EvalReport report;
    for (int t = first; t <= last; ++t) {
        const Dataset data(split_dataset(train, sc, t));
        TaskEnvironment env{oracle.get(), editor.get(), dir, &eval, log};
        TaskOutcome o = run_task(state, data, cfg, env);
        state = std::move(o.state);
    }
    report.records = state.metrics;
    out << format_table(report, cfg.schedule);
    return report;
}

EvalReport cmd_eval(const RunConfig& cfg, std::optional<int> task, std::ostream& out) {
    const int T = cfg.schedule.num_tasks();
    if (task && (*task < 1 || *task > T)) {
        throw RangeError("task " + std::to_string(*task) + " is outside the schedule (1.." + std::to_string(T) + ")");
    }
    const auto eval = load_dataset_or_explain(cfg.eval_dir, cfg.schedule);
    const auto dir = run_directory(cfg);
    EvalReport report;
    for (int t = task.value_or(1); t <= task.value_or(T); ++t) {
        const auto ckpt_path = task_dir(dir, t) / "checkpoint";
        if (!fs::exists(ckpt_path)) {
            if (task || t == 1) {
                throw MissingArtifactError("task " + std::to_string(t) + " has no checkpoint in '" + dir.string() +
                                           "'; run `wsciss train --task " + std::to_string(t) + "` first");
            }
            break;
        }
        const SegNet net = restore_network(load_checkpoint(ckpt_path));
        const ConfusionMatrix cm = evaluate_network(net, eval, cfg.schedule, t);
        auto recs = metric_records(cm, cfg.schedule, t, to_string(cfg.scenario), cfg.include_background_in_all);
        report.records.insert(report.records.end(), recs.begin(), recs.end());
    }
    write_json(dir / "eval.json", to_json(report));
    const std::string table = format_table(report, cfg.schedule);
    write_text(dir / "eval.txt", table);
    out << table;
    return report;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds, std::ostream& out) {
    const auto train = load_dataset_or_explain(cfg.train_dir, cfg.schedule);
    const auto eval = load_dataset_or_explain(cfg.eval_dir, cfg.schedule);
    const auto dir = run_directory(cfg);
    persist_effective_config(dir, cfg);
    auto log = [&out](const std::string& m) { out << m << '\n' << std::flush; };
    const AblationResult r = run_ablation(cfg, train, eval, seeds, log);
    nlohmann::json per_seed = nlohmann::json::array();
    for (std::size_t i = 0; i < r.per_seed.size(); ++i) {
        per_seed.push_back({{"seed", seeds[i]}, {"rows", to_json(r.per_seed[i])}});
    }
    write_json(dir / "ablation.json", {{"mean", to_json(r.rows)}, {"per_seed", per_seed}});
    const std::string table = format_ablation_table(r.rows);
    write_text(dir / "ablation.txt", table);
    out << table;
    return r.rows;
}

nlohmann::json error_record(const std::exception& e) {
    std::string kind = "error";
    if (const auto* w = dynamic_cast<const Error*>(&e)) kind = w->kind();
    nlohmann::json j{{"error", kind}, {"message", e.what()}};
    if (const auto* o = dynamic_cast<const OracleError*>(&e)) j["sample_id"] = o->sample_id();
    if (const auto* n = dynamic_cast<const NumericError*>(&e)) j["term"] = n->term();
    return j;
}

}  // namespace wsciss
