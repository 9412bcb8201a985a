#include "wsciss/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "wsciss/config.hpp"
#include "wsciss/errors.hpp"

namespace wsciss {
namespace {

constexpr char kMagic[4] = {'W', 'S', 'C', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u(std::istream& is, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        const int c = is.get();
        if (c == EOF) throw IoError("truncated checkpoint");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

void put_blob(std::ostream& os, const std::vector<double>& v) {
    put_u64(os, v.size());
    for (double d : v) put_u64(os, std::bit_cast<std::uint64_t>(d));
}

std::vector<double> get_blob(std::istream& is) {
    const auto n = get_u(is, 8);
    if (n > (1ULL << 32)) throw IoError("corrupt checkpoint blob size");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& d : v) d = std::bit_cast<double>(get_u(is, 8));
    return v;
}

std::string get_string(std::istream& is) {
    const auto n = get_u(is, 4);
    std::string s(static_cast<std::size_t>(n), '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("truncated checkpoint");
    return s;
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

Checkpoint make_checkpoint(const SegNet& net, const TaskSchedule& schedule, int task, const Trainer* trainer) {
    Checkpoint c;
    c.schedule = schedule;
    c.task = task;
    c.net_config = net.config();
    c.num_classes = net.num_classes();
    for (const auto* p : net.parameters()) c.parameters.emplace_back(p->name, p->value);
    if (trainer != nullptr) {
        c.epochs_done = trainer->epochs_done();
        c.velocity = trainer->momentum();
        c.rng_state = trainer->rng_state();
    }
    return c;
}

SegNet restore_network(const Checkpoint& ckpt) {
    SegNet net(ckpt.net_config, ckpt.num_classes, 0);
    auto params = net.parameters();
    if (params.size() != ckpt.parameters.size()) throw IoError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, value] = ckpt.parameters[i];
        if (params[i]->name != name || params[i]->value.size() != value.size()) {
            throw IoError("checkpoint parameter '" + name + "' does not match the network layout");
        }
        params[i]->value = value;
    }
    return net;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot write checkpoint '" + path.string() + "'");
        os.write(kMagic, 4);
        put_u32(os, Checkpoint::kVersion);
        const nlohmann::json header{{"schedule", to_json(ckpt.schedule)},
                                    {"task", ckpt.task},
                                    {"network", to_json(ckpt.net_config)},
                                    {"num_classes", ckpt.num_classes},
                                    {"epochs_done", ckpt.epochs_done},
                                    {"rng_state", ckpt.rng_state}};
        put_string(os, header.dump());
        put_u32(os, static_cast<std::uint32_t>(ckpt.parameters.size()));
        for (const auto& [name, value] : ckpt.parameters) {
            put_string(os, name);
            put_blob(os, value);
        }
        put_u32(os, static_cast<std::uint32_t>(ckpt.velocity.size()));
        for (const auto& v : ckpt.velocity) put_blob(os, v);
        if (!os) throw IoError("failed writing checkpoint '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("checkpoint '" + path.string() + "' not found");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("'" + path.string() + "' is not a checkpoint");
    if (get_u(is, 4) != Checkpoint::kVersion) throw IoError("unsupported checkpoint version");
    Checkpoint c;
    try {
        const auto header = nlohmann::json::parse(get_string(is));
        c.schedule = schedule_from_json(header.at("schedule"));
        c.task = header.at("task").get<int>();
        c.net_config = segnet_config_from_json(header.at("network"));
        c.num_classes = header.at("num_classes").get<int>();
        c.epochs_done = header.at("epochs_done").get<int>();
        c.rng_state = header.at("rng_state").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt checkpoint header: ") + e.what());
    }
    const auto n = get_u(is, 4);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::string name = get_string(is);
        c.parameters.emplace_back(std::move(name), get_blob(is));
    }
    const auto nv = get_u(is, 4);
    for (std::uint64_t i = 0; i < nv; ++i) c.velocity.push_back(get_blob(is));
    return c;
}

}  // namespace wsciss
