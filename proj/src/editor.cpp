#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "wsciss/errors.hpp"
#include "wsciss/exemplar.hpp"
#include "wsciss/image_io.hpp"

namespace wsciss {
namespace {

std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable blur with zero padding, so mass never reaches beyond `radius`.
std::vector<double> blur(const std::vector<double>& a, int H, int W, double sigma, int radius) {
    if (radius == 0) return a;
    const auto k = gaussian_kernel(sigma, radius);
    std::vector<double> tmp(a.size(), 0.0), out(a.size(), 0.0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int d = -radius; d <= radius; ++d) {
                const int xx = x + d;
                if (xx >= 0 && xx < W) s += k[static_cast<std::size_t>(d + radius)] * a[static_cast<std::size_t>(y) * W + xx];
            }
            tmp[static_cast<std::size_t>(y) * W + x] = s;
        }
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int d = -radius; d <= radius; ++d) {
                const int yy = y + d;
                if (yy >= 0 && yy < H) s += k[static_cast<std::size_t>(d + radius)] * tmp[static_cast<std::size_t>(yy) * W + x];
            }
            out[static_cast<std::size_t>(y) * W + x] = s;
        }
    }
    return out;
}

double sample_bilinear(const Tensor3& t, int c, double sy, double sx) {
    sy = std::clamp(sy, 0.0, static_cast<double>(t.height() - 1));
    sx = std::clamp(sx, 0.0, static_cast<double>(t.width() - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x0 = static_cast<int>(std::floor(sx));
    const int y1 = std::min(y0 + 1, t.height() - 1);
    const int x1 = std::min(x0 + 1, t.width() - 1);
    const double fy = sy - y0;
    const double fx = sx - x0;
    return (1 - fy) * ((1 - fx) * t(c, y0, x0) + fx * t(c, y0, x1)) + fy * ((1 - fx) * t(c, y1, x0) + fx * t(c, y1, x1));
}

void check_region(const Image& scene, const Region& r) {
    if (r.height < 1 || r.width < 1 || r.y0 < 0 || r.x0 < 0 || r.y0 + r.height > scene.height() ||
        r.x0 + r.width > scene.width()) {
        throw ValidationError("editing region lies outside the image");
    }
}

}  // namespace

MaskedBlendEditor::MaskedBlendEditor(double blend, double feather) : blend_(blend), feather_(feather) {
    if (!(blend >= 0.0 && blend <= 1.0)) throw ConfigError("editor blend must be in [0, 1]");
    if (!(feather >= 0.0)) throw ConfigError("editor feather must be >= 0");
}

int MaskedBlendEditor::feather_margin() const { return static_cast<int>(std::ceil(3.0 * feather_)); }

Image MaskedBlendEditor::edit(const Image& scene, const Region& region, const ExemplarItem& exemplar) const {
    check_region(scene, region);
    const int H = scene.height();
    const int W = scene.width();
    const HardLabelMap pasted = paste_mask(exemplar, region, H, W);
    std::vector<double> alpha(static_cast<std::size_t>(H) * W);
    for (int i = 0; i < H * W; ++i) alpha[static_cast<std::size_t>(i)] = pasted[i] == 1 ? blend_ : 0.0;
    alpha = blur(alpha, H, W, feather_, feather_margin());

    const Tensor3& src = exemplar.crop.pixels();
    const double sy_scale = static_cast<double>(src.height()) / region.height;
    const double sx_scale = static_cast<double>(src.width()) / region.width;
    Tensor3 out = scene.pixels();
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double a = std::clamp(alpha[static_cast<std::size_t>(y) * W + x], 0.0, 1.0);
            if (a <= 0.0) continue;
            const double sy = (y - region.y0 + 0.5) * sy_scale - 0.5;
            const double sx = (x - region.x0 + 0.5) * sx_scale - 0.5;
            for (int c = 0; c < 3; ++c) {
                const double v = (1.0 - a) * out(c, y, x) + a * sample_bilinear(src, c, sy, sx);
                out(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return Image(std::move(out), scene.id());
}

SubprocessEditor::SubprocessEditor(std::string command, std::filesystem::path work_dir, int margin)
    : command_(std::move(command)), work_dir_(std::move(work_dir)), margin_(margin) {
    if (command_.empty()) throw ConfigError("external editor command is empty");
}

Image SubprocessEditor::edit(const Image& scene, const Region& region, const ExemplarItem& exemplar) const {
    check_region(scene, region);
    static std::atomic<unsigned long> counter{0};
    const auto dir = work_dir_ / ("edit_" + std::to_string(counter++));
    std::filesystem::create_directories(dir);
    HardLabelMap mask(scene.height(), scene.width(), 0);
    for (int y = 0; y < region.height; ++y) {
        for (int x = 0; x < region.width; ++x) mask(region.y0 + y, region.x0 + x) = 1;
    }
    const auto scene_p = dir / "scene.png";
    const auto mask_p = dir / "mask.png";
    const auto ex_p = dir / "exemplar.png";
    auto out_p = dir / "output.png";
    io::write_image_png(scene_p, scene);
    io::write_mask_png(mask_p, mask);
    io::write_image_png(ex_p, exemplar.crop);

    auto quote = [](const std::filesystem::path& p) { return "'" + p.string() + "'"; };
    const std::string cmd = command_ + " " + quote(scene_p) + " " + quote(mask_p) + " " + quote(ex_p) + " " + quote(out_p);
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) throw IoError("cannot start external editor");
    std::string output, line;
    char buf[512];
    while (std::fgets(buf, sizeof(buf), pipe) != nullptr) output += buf;
    const int status = ::pclose(pipe);
    if (status != 0) throw IoError("external editor failed with status " + std::to_string(status));
    while (!output.empty() && (output.back() == '\n' || output.back() == '\r' || output.back() == ' ')) output.pop_back();
    const auto nl = output.find_last_of('\n');
    line = nl == std::string::npos ? output : output.substr(nl + 1);
    if (!line.empty() && std::filesystem::exists(line)) out_p = line;
    if (!std::filesystem::exists(out_p)) throw IoError("external editor produced no output image");
    Image edited = io::read_image_png(out_p, scene.id());
    std::filesystem::remove_all(dir);
    if (edited.height() != scene.height() || edited.width() != scene.width()) {
        throw ValidationError("external editor changed the image size");
    }
    return edited;
}

}  // namespace wsciss
