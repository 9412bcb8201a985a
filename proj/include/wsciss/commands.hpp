#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsciss/config.hpp"
#include "wsciss/eval.hpp"

namespace wsciss {

/// runs/<name>
std::filesystem::path run_directory(const RunConfig& cfg);

/// Writes the fully resolved config next to the command's outputs.
void persist_effective_config(const std::filesystem::path& dir, const RunConfig& cfg);

/// Dataset directory, or MissingArtifactError pointing at gen-synthetic.
std::vector<TrainSample> load_dataset_or_explain(const std::filesystem::path& dir, const TaskSchedule& schedule);

void cmd_gen_synthetic(const RunConfig& cfg, std::ostream& out);
/// splits.json: per task, sample ids and the weak labels they carry.
nlohmann::json cmd_split(const RunConfig& cfg, std::ostream& out);
/// Trains one task (state loaded from the run directory) or, without a
/// task, every task in order.
EvalReport cmd_train(const RunConfig& cfg, std::optional<int> task, std::ostream& out);
/// Evaluates every trained task (or just `task`) on the evaluation set.
EvalReport cmd_eval(const RunConfig& cfg, std::optional<int> task, std::ostream& out);
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds, std::ostream& out);

/// Machine-readable error record for a failed command.
nlohmann::json error_record(const std::exception& e);

}  // namespace wsciss
