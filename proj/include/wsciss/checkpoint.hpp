#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wsciss/segnet.hpp"
#include "wsciss/trainer.hpp"

namespace wsciss {

/// Everything needed to resume training bit-for-bit.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    TaskSchedule schedule;
    int task = 1;
    SegNetConfig net_config;
    int num_classes = 0;
    std::vector<std::pair<std::string, std::vector<double>>> parameters;
    int epochs_done = 0;
    std::vector<std::vector<double>> velocity;
    std::string rng_state;
};

Checkpoint make_checkpoint(const SegNet& net, const TaskSchedule& schedule, int task, const Trainer* trainer = nullptr);
SegNet restore_network(const Checkpoint& ckpt);

/// Binary container: "WSCK" | u32 version | length-prefixed JSON header
/// (schedule, task, network config, class count, epochs, rng state) |
/// u32 blob count | per blob: u32 name len, name, u64 count, f64[count] |
/// u32 velocity count | per velocity: u64 count, f64[count].
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wsciss
