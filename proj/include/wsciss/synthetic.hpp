#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsciss/config.hpp"
#include "wsciss/types.hpp"

namespace wsciss {

/// Shape names the generator knows how to draw.
const std::vector<std::string>& synthetic_shapes();

/// Binary mask of one shape centred at (cy, cx) with radius r.
std::vector<char> rasterize_shape(const std::string& shape, double cy, double cx, double r, int height, int width);

/// Scenes of 1..N coloured shapes on a noisy background, with dense masks
/// in the schedule's indexing and weak labels listing every visible class.
std::vector<TrainSample> generate_synthetic(const SyntheticCorpusConfig& cfg, const TaskSchedule& schedule, int count,
                                            std::uint64_t seed, const std::string& id_prefix);

struct SyntheticCorpusPaths {
    std::filesystem::path train;
    std::filesystem::path eval;
};

/// Writes `<dir>/train` and `<dir>/eval` dataset directories.
SyntheticCorpusPaths write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpusConfig& cfg,
                                            const TaskSchedule& schedule);

}  // namespace wsciss
