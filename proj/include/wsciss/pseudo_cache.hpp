#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "wsciss/pseudo_label.hpp"

namespace wsciss {

/// Per-sample pseudo-label files keyed by (sample id, task, oracle config
/// hash). Soft maps are stored as 16-bit fixed point (v * 65535, rounded),
/// hard maps as int16 with -1 for ignore.
///
/// Layout (little endian): "WSPL" | u32 version | u32 C | u32 H | u32 W |
/// u32 task | u64 oracle_hash | u32 id_len | id bytes | C*H*W u16 | H*W i16
class PseudoLabelCache {
public:
    static constexpr std::uint32_t kVersion = 1;

    PseudoLabelCache(std::filesystem::path dir, std::string kind = "psl");

    std::filesystem::path path_for(const std::string& sample_id, int task, std::uint64_t oracle_hash) const;
    void store(const std::string& sample_id, int task, std::uint64_t oracle_hash, const PseudoLabels& labels) const;
    std::optional<PseudoLabels> load(const std::string& sample_id, int task, std::uint64_t oracle_hash) const;

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    std::string kind_;
};

/// Soft map after a fixed-point round trip.
LabelMap quantize_soft(const LabelMap& soft);

}  // namespace wsciss
