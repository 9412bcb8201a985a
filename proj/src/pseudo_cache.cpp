#include "wsciss/pseudo_cache.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "wsciss/errors.hpp"

namespace wsciss {
namespace {

constexpr char kMagic[4] = {'W', 'S', 'P', 'L'};

template <typename T>
void put(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    unsigned char buf[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw IoError("truncated pseudo-label file");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

std::uint16_t to_fixed(double v) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
}

std::string sanitize(const std::string& id) {
    std::string out;
    for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    return out;
}

}  // namespace

PseudoLabelCache::PseudoLabelCache(std::filesystem::path dir, std::string kind)
    : dir_(std::move(dir)), kind_(std::move(kind)) {}

std::filesystem::path PseudoLabelCache::path_for(const std::string& sample_id, int task, std::uint64_t oracle_hash) const {
    std::ostringstream name;
    name << sanitize(sample_id) << ".t" << task << '.' << std::hex << std::setw(16) << std::setfill('0') << oracle_hash
         << '.' << kind_;
    return dir_ / name.str();
}

void PseudoLabelCache::store(const std::string& sample_id, int task, std::uint64_t oracle_hash,
                             const PseudoLabels& labels) const {
    const Tensor3& s = labels.soft.scores();
    if (labels.hard.height() != s.height() || labels.hard.width() != s.width()) {
        throw ValidationError("pseudo-label soft and hard maps differ in size");
    }
    std::filesystem::create_directories(dir_);
    const auto path = path_for(sample_id, task, oracle_hash);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.channels()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.height()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.width()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(task));
    put<std::uint64_t>(os, oracle_hash);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(sample_id.size()));
    os.write(sample_id.data(), static_cast<std::streamsize>(sample_id.size()));
    for (double v : s.values()) put<std::uint16_t>(os, to_fixed(v));
    for (int v : labels.hard.labels()) put<std::uint16_t>(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

std::optional<PseudoLabels> PseudoLabelCache::load(const std::string& sample_id, int task,
                                                   std::uint64_t oracle_hash) const {
    const auto path = path_for(sample_id, task, oracle_hash);
    std::ifstream is(path, std::ios::binary);
    if (!is) return std::nullopt;
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad pseudo-label file '" + path.string() + "'");
    if (get<std::uint32_t>(is) != kVersion) throw IoError("unsupported pseudo-label file version");
    const int C = static_cast<int>(get<std::uint32_t>(is));
    const int H = static_cast<int>(get<std::uint32_t>(is));
    const int W = static_cast<int>(get<std::uint32_t>(is));
    const int t = static_cast<int>(get<std::uint32_t>(is));
    const auto hash = get<std::uint64_t>(is);
    std::string id(get<std::uint32_t>(is), '\0');
    if (!is.read(id.data(), static_cast<std::streamsize>(id.size()))) throw IoError("truncated pseudo-label file");
    if (t != task || hash != oracle_hash || id != sample_id) {
        throw IoError("pseudo-label file '" + path.string() + "' does not match its key");
    }
    Tensor3 soft(C, H, W);
    for (double& v : soft.values()) v = get<std::uint16_t>(is) / 65535.0;
    std::vector<int> hard(static_cast<std::size_t>(H) * W);
    for (int& v : hard) v = static_cast<std::int16_t>(get<std::uint16_t>(is));
    return PseudoLabels{LabelMap(std::move(soft), ScoreKind::probabilities), HardLabelMap(H, W, std::move(hard))};
}

LabelMap quantize_soft(const LabelMap& soft) {
    Tensor3 t = soft.scores();
    for (double& v : t.values()) v = to_fixed(v) / 65535.0;
    return LabelMap(std::move(t), ScoreKind::probabilities);
}

}  // namespace wsciss
