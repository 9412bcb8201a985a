#include "wsciss/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "wsciss/errors.hpp"

namespace wsciss {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : n_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
    if (num_classes < 1) throw ValidationError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const noexcept {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(int c) const {
    std::uint64_t s = 0;
    for (int p = 0; p < n_; ++p) s += counts_[index(c, p)];
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(int c) const {
    std::uint64_t s = 0;
    for (int g = 0; g < n_; ++g) s += counts_[index(g, c)];
    return s;
}

void ConfusionMatrix::accumulate(const HardLabelMap& gt, const HardLabelMap& pred) {
    if (gt.height() != pred.height() || gt.width() != pred.width()) {
        throw ValidationError("ground truth and prediction differ in shape");
    }
    for (int i = 0; i < gt.size(); ++i) {
        const int g = gt[i];
        if (g == kIgnore) continue;
        const int p = pred[i];
        if (g < 0 || g >= n_) throw ValidationError("ground-truth label " + std::to_string(g) + " out of range");
        if (p < 0 || p >= n_) throw ValidationError("predicted label " + std::to_string(p) + " out of range");
        ++counts_[index(g, p)];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.n_ != n_) throw ValidationError("cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm) {
    std::vector<std::optional<double>> out(static_cast<std::size_t>(cm.num_classes()));
    for (int c = 0; c < cm.num_classes(); ++c) {
        const std::uint64_t tp = cm(c, c);
        const std::uint64_t uni = cm.row_sum(c) + cm.col_sum(c) - tp;
        if (uni > 0) out[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(uni);
    }
    return out;
}

MiouDetail miou_detail(const ConfusionMatrix& cm, std::span<const int> group) {
    if (group.empty()) throw ValidationError("mIoU group is empty");
    const auto iou = class_iou(cm);
    MiouDetail d;
    double sum = 0.0;
    int n = 0;
    for (int c : group) {
        if (c < 0 || c >= cm.num_classes()) throw ValidationError("mIoU group class out of range");
        const auto& v = iou[static_cast<std::size_t>(c)];
        if (!v) {
            d.excluded.push_back(c);
            continue;
        }
        sum += *v;
        ++n;
    }
    if (n == 0) throw MetricError("mIoU undefined: every class in the group has zero union");
    d.value = sum / n;
    return d;
}

double miou(const ConfusionMatrix& cm, std::span<const int> group) { return miou_detail(cm, group).value; }

HardLabelMap restrict_to_seen(const HardLabelMap& gt, int accumulated_count) {
    HardLabelMap out = gt;
    for (int i = 0; i < out.size(); ++i) {
        if (out[i] >= accumulated_count) out[i] = kIgnore;
    }
    return out;
}

GroupSpec task_groups(const TaskSchedule& schedule, int t, bool include_background_in_all) {
    GroupSpec g;
    const int acc = schedule.accumulated_count(t);
    g.base = schedule.task_class_indices(1);
    if (t > 1) {
        for (int c = schedule.first_index(2); c < acc; ++c) g.novel.push_back(c);
    }
    for (int c = include_background_in_all ? 0 : 1; c < acc; ++c) g.all.push_back(c);
    return g;
}

std::vector<MetricRecord> metric_records(const ConfusionMatrix& cm, const TaskSchedule& schedule, int t,
                                         const std::string& scenario, bool include_background_in_all) {
    const GroupSpec g = task_groups(schedule, t, include_background_in_all);
    std::vector<MetricRecord> out;
    auto add = [&](const std::string& name, const std::vector<int>& cls) {
        if (cls.empty()) return;
        MetricRecord r{t, scenario, name, std::nullopt, cls};
        try {
            r.miou = miou(cm, cls);
        } catch (const MetricError&) {
        }
        out.push_back(std::move(r));
    };
    add("base", g.base);
    add("novel", g.novel);
    add("all", g.all);
    return out;
}

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : report.records) {
        recs.push_back({{"task", r.task},
                        {"scenario", r.scenario},
                        {"group", r.group},
                        {"miou", r.miou ? nlohmann::json(*r.miou) : nlohmann::json(nullptr)},
                        {"classes", r.classes}});
    }
    return {{"records", recs}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
    EvalReport rep;
    try {
        for (const auto& r : j.at("records")) {
            MetricRecord m;
            m.task = r.at("task").get<int>();
            m.scenario = r.at("scenario").get<std::string>();
            m.group = r.at("group").get<std::string>();
            if (!r.at("miou").is_null()) m.miou = r.at("miou").get<double>();
            m.classes = r.at("classes").get<std::vector<int>>();
            rep.records.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed evaluation report: ") + e.what());
    }
    return rep;
}

namespace {

std::string pct(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * *v);
    return buf;
}

std::string range_label(const std::vector<int>& cls) {
    if (cls.empty()) return "";
    return std::to_string(cls.front()) + "-" + std::to_string(cls.back());
}

std::string render(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        width.resize(std::max(width.size(), r.size()), 0);
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    std::ostringstream os;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        std::string line;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i > 0) line += "  ";
            const std::string pad(width[i] - r[i].size(), ' ');
            line += i == 0 ? r[i] + pad : pad + r[i];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        os << line << '\n';
        if (k == 0) {
            std::size_t total = 0;
            for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i > 0 ? 2 : 0);
            os << std::string(total, '-') << '\n';
        }
    }
    return os.str();
}

}  // namespace

std::string format_table(const EvalReport& report, const TaskSchedule& schedule) {
    std::map<std::pair<int, std::string>, std::map<std::string, const MetricRecord*>> rows;
    for (const auto& r : report.records) rows[{r.task, r.scenario}][r.group] = &r;
    const int last = schedule.num_tasks();
    const GroupSpec g = task_groups(schedule, last);
    std::vector<std::vector<std::string>> table{
        {"task", "scenario", range_label(g.base), g.novel.empty() ? "novel" : range_label(g.novel), "All"}};
    for (const auto& [key, groups] : rows) {
        auto cell = [&](const char* name) {
            auto it = groups.find(name);
            return it == groups.end() ? std::string("-") : pct(it->second->miou);
        };
        table.push_back({std::to_string(key.first), key.second, cell("base"), cell("novel"), cell("all")});
    }
    return render(table);
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::vector<std::vector<std::string>> table{{"fusion", "augmentation", "base", "novel", "All", "runs"}};
    for (const auto& r : rows) {
        table.push_back({r.fusion ? "yes" : "no", r.augmentation ? "yes" : "no", pct(r.base), pct(r.novel), pct(r.all),
                         std::to_string(r.runs)});
    }
    return render(table);
}

nlohmann::json to_json(const std::vector<AblationRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"fusion", r.fusion},
                       {"augmentation", r.augmentation},
                       {"base", r.base},
                       {"novel", r.novel},
                       {"all", r.all},
                       {"runs", r.runs}});
    }
    return out;
}

}  // namespace wsciss
