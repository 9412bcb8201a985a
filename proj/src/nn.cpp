#include "wsciss/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "wsciss/errors.hpp"

namespace wsciss::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Tap {
    int i0, i1;
    double w0, w1;
};

std::vector<Tap> bilinear_taps(int in, int out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        src = std::max(src, 0.0);
        int i0 = std::min(static_cast<int>(src), in - 1);
        int i1 = std::min(i0 + 1, in - 1);
        const double l = src - i0;
        taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - l, l};
    }
    return taps;
}

}  // namespace

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride) {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || kernel % 2 == 0 || stride < 1) {
        throw ValidationError("invalid convolution geometry for '" + name + "'");
    }
    weight_.name = name + ".weight";
    weight_.value.assign(static_cast<std::size_t>(out_) * in_ * k_ * k_, 0.0);
    bias_.name = name + ".bias";
    bias_.value.assign(static_cast<std::size_t>(out_), 0.0);
    weight_.zero_grad();
    bias_.zero_grad();
}

void Conv2d::init_he(Rng& rng) {
    const double std = std::sqrt(2.0 / (in_ * k_ * k_));
    for (double& w : weight_.value) w = rng.normal() * std;
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

void Conv2d::init_normal(Rng& rng, double weight_std, double bias) {
    for (double& w : weight_.value) w = rng.normal() * weight_std;
    std::fill(bias_.value.begin(), bias_.value.end(), bias);
}

Tensor3 Conv2d::forward(const Tensor3& x, Cache* cache) const {
    if (x.channels() != in_) throw ValidationError("conv input has the wrong channel count");
    const int H = x.height();
    const int W = x.width();
    const int Ho = out_size(H);
    const int Wo = out_size(W);
    const int pad = k_ / 2;
    const int rows = in_ * k_ * k_;
    const int cols_n = Ho * Wo;
    std::vector<double> cols(static_cast<std::size_t>(rows) * cols_n, 0.0);
    for (int c = 0; c < in_; ++c) {
        for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
                double* row = cols.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * cols_n;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride_ + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride_ + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        row[oy * Wo + ox] = x(c, iy, ix);
                    }
                }
            }
        }
    }
    Tensor3 y(out_, Ho, Wo);
    MapMat Y(y.data(), out_, cols_n);
    ConstMapMat Wm(weight_.value.data(), out_, rows);
    ConstMapMat X(cols.data(), rows, cols_n);
    Y.noalias() = Wm * X;
    for (int o = 0; o < out_; ++o) Y.row(o).array() += bias_.value[static_cast<std::size_t>(o)];
    if (cache != nullptr) {
        cache->cols = std::move(cols);
        cache->in_h = H;
        cache->in_w = W;
    }
    return y;
}

Tensor3 Conv2d::backward(const Tensor3& dy, const Cache& cache) {
    const int H = cache.in_h;
    const int W = cache.in_w;
    const int Ho = dy.height();
    const int Wo = dy.width();
    const int pad = k_ / 2;
    const int rows = in_ * k_ * k_;
    const int cols_n = Ho * Wo;
    ConstMapMat dY(dy.data(), out_, cols_n);
    ConstMapMat X(cache.cols.data(), rows, cols_n);
    MapMat dW(weight_.grad.data(), out_, rows);
    dW.noalias() += dY * X.transpose();
    for (int o = 0; o < out_; ++o) bias_.grad[static_cast<std::size_t>(o)] += dY.row(o).sum();
    RowMat dcols = ConstMapMat(weight_.value.data(), out_, rows).transpose() * dY;
    Tensor3 dx(in_, H, W);
    for (int c = 0; c < in_; ++c) {
        for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
                const double* row = dcols.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * cols_n;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride_ + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride_ + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        dx(c, iy, ix) += row[oy * Wo + ox];
                    }
                }
            }
        }
    }
    return dx;
}

void Conv2d::grow_outputs(int new_out, double weight_std, double bias, Rng& rng) {
    if (new_out < out_) throw ValidationError("cannot shrink convolution outputs");
    const std::size_t per = static_cast<std::size_t>(in_) * k_ * k_;
    for (int o = out_; o < new_out; ++o) {
        for (std::size_t i = 0; i < per; ++i) weight_.value.push_back(rng.normal() * weight_std);
        bias_.value.push_back(bias);
    }
    out_ = new_out;
    weight_.zero_grad();
    bias_.zero_grad();
}

void relu_inplace(Tensor3& x) {
    for (double& v : x.values()) v = std::max(v, 0.0);
}

void relu_backward(Tensor3& dy, const Tensor3& activated) {
    for (std::size_t i = 0; i < dy.size(); ++i) {
        if (activated.values()[i] <= 0.0) dy.values()[i] = 0.0;
    }
}

Tensor3 resize_bilinear(const Tensor3& x, int height, int width) {
    if (x.height() == height && x.width() == width) return x;
    const auto ty = bilinear_taps(x.height(), height);
    const auto tx = bilinear_taps(x.width(), width);
    Tensor3 y(x.channels(), height, width);
    for (int c = 0; c < x.channels(); ++c) {
        for (int oy = 0; oy < height; ++oy) {
            const Tap& a = ty[static_cast<std::size_t>(oy)];
            for (int ox = 0; ox < width; ++ox) {
                const Tap& b = tx[static_cast<std::size_t>(ox)];
                y(c, oy, ox) = a.w0 * (b.w0 * x(c, a.i0, b.i0) + b.w1 * x(c, a.i0, b.i1)) +
                               a.w1 * (b.w0 * x(c, a.i1, b.i0) + b.w1 * x(c, a.i1, b.i1));
            }
        }
    }
    return y;
}

Tensor3 resize_bilinear_backward(const Tensor3& dy, int in_h, int in_w) {
    if (dy.height() == in_h && dy.width() == in_w) return dy;
    const auto ty = bilinear_taps(in_h, dy.height());
    const auto tx = bilinear_taps(in_w, dy.width());
    Tensor3 dx(dy.channels(), in_h, in_w);
    for (int c = 0; c < dy.channels(); ++c) {
        for (int oy = 0; oy < dy.height(); ++oy) {
            const Tap& a = ty[static_cast<std::size_t>(oy)];
            for (int ox = 0; ox < dy.width(); ++ox) {
                const Tap& b = tx[static_cast<std::size_t>(ox)];
                const double g = dy(c, oy, ox);
                dx(c, a.i0, b.i0) += a.w0 * b.w0 * g;
                dx(c, a.i0, b.i1) += a.w0 * b.w1 * g;
                dx(c, a.i1, b.i0) += a.w1 * b.w0 * g;
                dx(c, a.i1, b.i1) += a.w1 * b.w1 * g;
            }
        }
    }
    return dx;
}

}  // namespace wsciss::nn
