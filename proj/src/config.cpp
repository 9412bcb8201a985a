#include "wsciss/config.hpp"

#include <algorithm>
#include <fstream>

#include "wsciss/errors.hpp"

namespace wsciss {

using nlohmann::json;

std::string to_string(Scenario s) {
    return s == Scenario::disjoint ? "disjoint" : "overlap";
}

Scenario scenario_from_string(const std::string& s) {
    if (s == "disjoint") return Scenario::disjoint;
    if (s == "overlap") return Scenario::overlap;
    throw ConfigError("scenario must be 'disjoint' or 'overlap', got '" + s + "'");
}

const TaskTrainingConfig& RunConfig::task(int t) const {
    if (tasks.empty()) throw ConfigError("no per-task training settings");
    const auto i = static_cast<std::size_t>(std::max(1, t) - 1);
    return tasks[std::min(i, tasks.size() - 1)];
}

void RunConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    require(!name.empty(), "name must be non-empty");
    require(synthetic.image_size >= 8 && synthetic.image_size <= 512, "synthetic.image_size must be in [8,512]");
    require(synthetic.train_images >= 1 && synthetic.eval_images >= 0, "synthetic corpus sizes must be positive");
    require(synthetic.min_objects >= 1 && synthetic.max_objects >= synthetic.min_objects && synthetic.max_objects <= 16,
            "synthetic object counts must satisfy 1 <= min <= max <= 16");
    require(!synthetic.classes.empty() && synthetic.classes.size() <= 254, "synthetic.classes must list 1..254 names");
    require(schedule.num_tasks() >= 1, "schedule needs at least one partition");
    require(oracle.noise_rate >= 0.0 && oracle.noise_rate <= 1.0, "oracle.noise_rate must be in [0,1]");
    require(oracle.dilation_radius >= 0 && oracle.dilation_radius <= 16, "oracle.dilation_radius must be in [0,16]");
    require(pseudo_label.background_threshold >= 0.0 && pseudo_label.background_threshold <= 1.0,
            "pseudo_label.background_threshold must be in [0,1]");
    require(editor.kind == "masked_blend" || editor.kind == "external", "editor.kind must be masked_blend or external");
    require(editor.blend >= 0.0 && editor.blend <= 1.0, "editor.blend must be in [0,1]");
    require(editor.feather >= 0.0 && editor.feather <= 16.0, "editor.feather must be in [0,16]");
    require(editor.kind != "external" || !editor.command.empty(), "editor.command is required for external editors");
    require(exemplar.budget_per_class >= 1, "exemplar.budget_per_class must be >= 1");
    require(exemplar.min_area >= 1, "exemplar.min_area must be >= 1");
    require(exemplar.augmentation_probability >= 0.0 && exemplar.augmentation_probability <= 1.0,
            "exemplar.augmentation_probability must be in [0,1]");
    require(exemplar.region_scale_min > 0.0 && exemplar.region_scale_max <= 1.0 &&
                exemplar.region_scale_min <= exemplar.region_scale_max,
            "exemplar region scales must satisfy 0 < min <= max <= 1");
    network.validate();
    contrastive.validate();
    require(image_level.ngwp_epsilon > 0.0, "losses.ngwp_epsilon must be > 0");
    require(image_level.focal_power >= 0.0, "losses.focal_power must be >= 0");
    require(image_level.focal_lambda > 0.0, "losses.focal_lambda must be > 0");
    require(!tasks.empty(), "tasks must have at least one entry");
    for (const auto& t : tasks) {
        t.optimizer.validate();
        t.weights.validate();
    }
}

RunConfig default_run_config() {
    RunConfig cfg;
    TaskTrainingConfig first;
    first.optimizer.lr = 0.002;
    first.optimizer.epochs = 40;
    first.weights = {1.0, 0.1, 0.0, 0.0};
    TaskTrainingConfig incremental;
    incremental.optimizer.lr = 0.00035;
    incremental.optimizer.epochs = 40;
    incremental.weights = {1.0, 0.01, 15.0, 1.0};
    cfg.tasks = {first, incremental};
    return cfg;
}

json to_json(const TaskSchedule& s) {
    return json{{"partitions", s.partitions()}, {"background", s.background_name()}};
}

TaskSchedule schedule_from_json(const json& j) {
    try {
        return TaskSchedule(j.at("partitions").get<std::vector<std::vector<std::string>>>(),
                            j.at("background").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid schedule: ") + e.what());
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("invalid schedule: ") + e.what());
    }
}

json to_json(const SegNetConfig& c) {
    return json{{"stem_channels", c.stem_channels},
                {"feature_channels", c.feature_channels},
                {"output_stride", c.output_stride},
                {"decoder_width", c.decoder_width},
                {"localizer_width1", c.localizer_width1},
                {"localizer_width2", c.localizer_width2},
                {"head_weight_std", c.head_weight_std},
                {"new_head_weight_std", c.new_head_weight_std},
                {"new_head_prior", c.new_head_prior},
                {"new_localizer_prior", c.new_localizer_prior}};
}

SegNetConfig segnet_config_from_json(const json& j) {
    SegNetConfig c;
    c.stem_channels = j.at("stem_channels").get<int>();
    c.feature_channels = j.at("feature_channels").get<int>();
    c.output_stride = j.at("output_stride").get<int>();
    c.decoder_width = j.at("decoder_width").get<int>();
    c.localizer_width1 = j.at("localizer_width1").get<int>();
    c.localizer_width2 = j.at("localizer_width2").get<int>();
    c.head_weight_std = j.at("head_weight_std").get<double>();
    c.new_head_weight_std = j.at("new_head_weight_std").get<double>();
    c.new_head_prior = j.at("new_head_prior").get<double>();
    c.new_localizer_prior = j.at("new_localizer_prior").get<double>();
    return c;
}

namespace {

json to_json(const TaskTrainingConfig& t) {
    return json{{"lr", t.optimizer.lr},           {"momentum", t.optimizer.momentum},
                {"clip_norm", t.optimizer.clip_norm},
                {"epochs", t.optimizer.epochs},   {"batch_size", t.optimizer.batch_size},
                {"alpha1", t.weights.alpha1},     {"alpha2", t.weights.alpha2},
                {"beta1", t.weights.beta1},       {"beta2", t.weights.beta2}};
}

TaskTrainingConfig task_from_json(const json& j) {
    TaskTrainingConfig t;
    t.optimizer.lr = j.at("lr").get<double>();
    t.optimizer.momentum = j.at("momentum").get<double>();
    t.optimizer.clip_norm = j.at("clip_norm").get<double>();
    t.optimizer.epochs = j.at("epochs").get<int>();
    t.optimizer.batch_size = j.at("batch_size").get<int>();
    t.weights.alpha1 = j.at("alpha1").get<double>();
    t.weights.alpha2 = j.at("alpha2").get<double>();
    t.weights.beta1 = j.at("beta1").get<double>();
    t.weights.beta2 = j.at("beta2").get<double>();
    return t;
}

void reject_unknown(const json& user, const json& defaults, const std::string& path) {
    if (!user.is_object()) return;
    if (!defaults.is_object()) throw ConfigError("'" + path + "' must not be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!defaults.contains(key)) throw ConfigError("unknown config key '" + here + "'");
        if (key == "tasks" && path.empty()) {
            if (!value.is_array()) throw ConfigError("'tasks' must be an array");
            for (std::size_t i = 0; i < value.size(); ++i) {
                reject_unknown(value[i], defaults["tasks"][0], "tasks[" + std::to_string(i) + "]");
            }
            continue;
        }
        reject_unknown(value, defaults[key], here);
    }
}

}  // namespace

json to_json(const RunConfig& c) {
    json tasks = json::array();
    for (const auto& t : c.tasks) tasks.push_back(to_json(t));
    return json{
        {"name", c.name},
        {"output_dir", c.output_dir},
        {"train_dir", c.train_dir},
        {"eval_dir", c.eval_dir},
        {"synthetic",
         {{"classes", c.synthetic.classes},
          {"image_size", c.synthetic.image_size},
          {"train_images", c.synthetic.train_images},
          {"eval_images", c.synthetic.eval_images},
          {"min_objects", c.synthetic.min_objects},
          {"max_objects", c.synthetic.max_objects},
          {"seed", c.synthetic.seed}}},
        {"schedule", to_json(c.schedule)},
        {"scenario", to_string(c.scenario)},
        {"seed", c.seed},
        {"oracle",
         {{"noise_rate", c.oracle.noise_rate}, {"dilation_radius", c.oracle.dilation_radius}, {"seed", c.oracle.seed}}},
        {"pseudo_label",
         {{"background_threshold", c.pseudo_label.background_threshold},
          {"use_fusion", c.pseudo_label.use_fusion},
          {"normalize_by_accumulated", c.pseudo_label.normalize_by_accumulated}}},
        {"editor",
         {{"kind", c.editor.kind}, {"blend", c.editor.blend}, {"feather", c.editor.feather}, {"command", c.editor.command}}},
        {"exemplar",
         {{"budget_per_class", c.exemplar.budget_per_class},
          {"min_area", c.exemplar.min_area},
          {"augmentation", c.exemplar.augmentation},
          {"augmentation_probability", c.exemplar.augmentation_probability},
          {"region_scale_min", c.exemplar.region_scale_min},
          {"region_scale_max", c.exemplar.region_scale_max}}},
        {"network", to_json(c.network)},
        {"losses",
         {{"samples_per_class", c.contrastive.samples_per_class},
          {"temperature", c.contrastive.temperature},
          {"ngwp_epsilon", c.image_level.ngwp_epsilon},
          {"focal_power", c.image_level.focal_power},
          {"focal_lambda", c.image_level.focal_lambda},
          {"kd_average", c.kd.average}}},
        {"tasks", tasks},
        {"eval", {{"include_background_in_all", c.include_background_in_all}}},
    };
}

RunConfig run_config_from_json(const json& user) {
    const json defaults = to_json(default_run_config());
    reject_unknown(user, defaults, "");
    json merged = defaults;
    json patch = user;
    if (patch.contains("tasks")) {
        json tasks = json::array();
        if (!patch["tasks"].is_array()) throw ConfigError("tasks must be an array");
        const std::size_t n = std::max(patch["tasks"].size(), defaults["tasks"].size());
        for (std::size_t i = 0; i < n; ++i) {
            json t = defaults["tasks"][std::min(i, defaults["tasks"].size() - 1)];
            if (i < patch["tasks"].size()) t.merge_patch(patch["tasks"][i]);
            tasks.push_back(t);
        }
        patch.erase("tasks");
        merged["tasks"] = tasks;
    }
    merged.merge_patch(patch);

    RunConfig c;
    try {
        c.name = merged.at("name").get<std::string>();
        c.output_dir = merged.at("output_dir").get<std::string>();
        c.train_dir = merged.at("train_dir").get<std::string>();
        c.eval_dir = merged.at("eval_dir").get<std::string>();
        const auto& s = merged.at("synthetic");
        c.synthetic.classes = s.at("classes").get<std::vector<std::string>>();
        c.synthetic.image_size = s.at("image_size").get<int>();
        c.synthetic.train_images = s.at("train_images").get<int>();
        c.synthetic.eval_images = s.at("eval_images").get<int>();
        c.synthetic.min_objects = s.at("min_objects").get<int>();
        c.synthetic.max_objects = s.at("max_objects").get<int>();
        c.synthetic.seed = s.at("seed").get<std::uint64_t>();
        c.schedule = schedule_from_json(merged.at("schedule"));
        c.scenario = scenario_from_string(merged.at("scenario").get<std::string>());
        c.seed = merged.at("seed").get<std::uint64_t>();
        const auto& o = merged.at("oracle");
        c.oracle.noise_rate = o.at("noise_rate").get<double>();
        c.oracle.dilation_radius = o.at("dilation_radius").get<int>();
        c.oracle.seed = o.at("seed").get<std::uint64_t>();
        const auto& p = merged.at("pseudo_label");
        c.pseudo_label.background_threshold = p.at("background_threshold").get<double>();
        c.pseudo_label.use_fusion = p.at("use_fusion").get<bool>();
        c.pseudo_label.normalize_by_accumulated = p.at("normalize_by_accumulated").get<bool>();
        const auto& e = merged.at("editor");
        c.editor.kind = e.at("kind").get<std::string>();
        c.editor.blend = e.at("blend").get<double>();
        c.editor.feather = e.at("feather").get<double>();
        c.editor.command = e.at("command").get<std::string>();
        const auto& x = merged.at("exemplar");
        c.exemplar.budget_per_class = x.at("budget_per_class").get<int>();
        c.exemplar.min_area = x.at("min_area").get<int>();
        c.exemplar.augmentation = x.at("augmentation").get<bool>();
        c.exemplar.augmentation_probability = x.at("augmentation_probability").get<double>();
        c.exemplar.region_scale_min = x.at("region_scale_min").get<double>();
        c.exemplar.region_scale_max = x.at("region_scale_max").get<double>();
        c.network = segnet_config_from_json(merged.at("network"));
        const auto& l = merged.at("losses");
        c.contrastive.samples_per_class = l.at("samples_per_class").get<int>();
        c.contrastive.temperature = l.at("temperature").get<double>();
        c.image_level.ngwp_epsilon = l.at("ngwp_epsilon").get<double>();
        c.image_level.focal_power = l.at("focal_power").get<double>();
        c.image_level.focal_lambda = l.at("focal_lambda").get<double>();
        c.kd.average = l.at("kd_average").get<bool>();
        c.tasks.clear();
        for (const auto& t : merged.at("tasks")) c.tasks.push_back(task_from_json(t));
        c.include_background_in_all = merged.at("eval").at("include_background_in_all").get<bool>();
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("invalid config value: ") + ex.what());
    }
    c.validate();
    return c;
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("empty key in override '" + path + "'");
        json* next;
        if (node->is_array()) {
            std::size_t idx = 0;
            try {
                idx = std::stoul(key);
            } catch (const std::exception&) {
                throw ConfigError("expected an array index in override '" + path + "'");
            }
            while (node->size() <= idx) node->push_back(json::object());
            next = &(*node)[idx];
        } else {
            if (node->is_null()) {
                const bool index = key.find_first_not_of("0123456789") == std::string::npos;
                *node = index ? json::array() : json::object();
                if (index) continue;
            }
            next = &(*node)[key];
        }
        if (dot == std::string::npos) {
            *next = value;
            return;
        }
        node = next;
        start = dot + 1;
    }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config '" + path.string() + "'");
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
        }
    }
    for (const auto& o : overrides) apply_override(j, o);
    return run_config_from_json(j);
}

}  // namespace wsciss
